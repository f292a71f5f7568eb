#pragma once

// Symplectomorphisms of the (q, p) plane with their exact-potential
// correction h (psi^* lambda = lambda + dh, lambda = p dq).

#include <optional>
#include <vector>

#include "gfc/genfam.hpp"

namespace gfc {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Box2 {
    Interval q, p;
    bool contains(const Vec2& x) const { return q.contains(x[0]) && p.contains(x[1]); }
};

class Symplectomorphism {
public:
    enum class Kind { QuarterTurn, QuarterTurnInverse, Affine, HamiltonianFlow, Composition };

    struct Image {
        Vec2 x;
        Mat2 J;
        double h = 0.0;  // potential correction at the source point
    };

    Symplectomorphism();  // identity (affine)

    static Symplectomorphism identity();
    /// W(q, p) = (p, -q).
    static Symplectomorphism quarter_turn();
    static Symplectomorphism quarter_turn_inverse();
    /// x -> A x + c with det A = 1.
    static Symplectomorphism affine(const Mat2& A, const Vec2& c = Vec2::Zero());
    /// Time t0 -> t1 flow of X_H = (H_p, -H_q) for H over (t, q, p). Points outside
    /// `support` are fixed, which callers guarantee by choosing H supported there.
    static Symplectomorphism flow(const SmoothFunction& H, double t0, double t1, std::optional<Box2> support = {});
    /// Applies the maps in order: first element first.
    static Symplectomorphism compose(std::vector<Symplectomorphism> maps);

    Kind kind() const { return kind_; }
    const Mat2& matrix() const { return A_; }
    const Vec2& offset() const { return c_; }
    const SmoothFunction& hamiltonian() const { return H_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    const std::optional<Box2>& support() const { return support_; }
    const std::vector<Symplectomorphism>& parts() const { return parts_; }

    Vec2 apply(const Vec2& x) const { return apply_full(x).x; }
    Image apply_full(const Vec2& x) const;
    Symplectomorphism inverse() const;
    /// Conjugate T o this o T^{-1} for an affine T.
    Symplectomorphism conjugate_by(const Symplectomorphism& T) const;

    std::string describe() const;

private:
    Kind kind_ = Kind::Affine;
    Mat2 A_ = Mat2::Identity();
    Vec2 c_ = Vec2::Zero();
    SmoothFunction H_;
    double t0_ = 0.0, t1_ = 0.0;
    std::optional<Box2> support_;
    std::vector<Symplectomorphism> parts_;
    std::shared_ptr<const expr::Program> prog_;  // H derivatives for flows
};

/// Image of a sampled curve: points, tangents and potentials (f + h) move.
SampledCurve transform_curve(const Symplectomorphism& S, const SampledCurve& c);

Eigen::Vector4d varpi(const Eigen::Vector4d& ulsv);
Eigen::Vector4d varpi_inv(const Eigen::Vector4d& q1q2p1p2);

/// Generating family (H, G) of a symplectomorphism of V: G over two base
/// variables plus optional fibers, with L_S = varpi(graph S).
struct SympGenFam {
    std::string base1 = "q1";
    std::string base2 = "q2";
    std::vector<std::string> fiber_vars;
    std::vector<Interval> fiber_box;
    SmoothFunction G;
    /// Residual certified when the family was built or verified (negative if never checked).
    double certified_residual = -1.0;

    std::vector<std::string> variables() const;
};

SympGenFam make_W_genfam(bool inverse = false);

/// Max over a grid of |dG(Q) - P| where (Q, P) = varpi(x, S(x)); fiberless families only.
double sympgenfam_residual(const SympGenFam& sg, const Symplectomorphism& S, const Box2& box, int grid = 21);

struct NearIdentityOptions {
    int grid = 81;
    double max_defect = 0.2;
    double path_tol = 1e-6;
};

/// Fiberless grid-interpolant generating function of a C^1-small S on the
/// box of V (in the Q coordinates of varpi).
SympGenFam genfam_of_near_identity(const Symplectomorphism& S, const Box2& box, const NearIdentityOptions& opts = {});

/// Max over the grid of |S(x) - x| + |J_S(x) - I|_F.
double c1_defect(const Symplectomorphism& S, const Box2& box, int grid = 21);

/// Max over the grid of |det J_S - 1|.
double symplectic_defect(const Symplectomorphism& S, const Box2& box, int grid = 21);

struct IsotopyStep {
    Symplectomorphism map;
    int chart = -1;
    double c1_defect = 0.0;
    double t0 = 0.0, t1 = 0.0;
};

/// Equal time slices of the flow of H on [t0, t1], the fewest whose C^1 defect
/// over `box` stays below the threshold.
std::vector<IsotopyStep> fragment(const SmoothFunction& H, double t0, double t1, const Box2& box, double threshold,
                                  int chart = -1, std::optional<Box2> support = {}, int grid = 21);

}  // namespace gfc
