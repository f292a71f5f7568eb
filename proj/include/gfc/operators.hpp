#pragma once

// Operator algebra on generating families: stabilization, the Chekanov
// construction, rotations, the dagger localization, leg restriction,
// localization with its O-set, gluing and compact-defect localization.

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gfc/genfam.hpp"
#include "gfc/symplecto.hpp"

namespace gfc {

/// Nondegenerate quadratic form on fresh fiber variables.
struct QuadraticStabilizer {
    std::vector<std::string> vars;
    SmoothFunction form;
    int index = 0;
    std::vector<Interval> box;

    /// x^T M x; index computed from the eigenvalues.
    static QuadraticStabilizer from_matrix(std::vector<std::string> vars, const Eigen::MatrixXd& M,
                                           double half_width = 1.0);
    /// sum of squares (index 0).
    static QuadraticStabilizer positive(std::vector<std::string> vars);
    /// -x*y (index 1).
    static QuadraticStabilizer hyperbolic(const std::string& x, const std::string& y);
};

/// Deterministic fresh name: `base` if unused, else base_1, base_2, ...
std::string fresh_name(const std::string& base, const std::set<std::string>& taken);
std::set<std::string> family_names(const GeneratingFamily& fam);

GeneratingFamily stabilize(const GeneratingFamily& fam, const QuadraticStabilizer& s);

struct ChekanovOptions {
    std::optional<Interval> domain;        // new base domain (default: the old one)
    std::optional<Interval> v_box;         // default from the domains
    Interval t_box{-50.0, 50.0};
    std::string v_name = "v";
    std::string t_name = "t";
};

/// P(q, xi, v, t, chi) = F(q+v, xi) + G(q+v/2, t, chi) - v t, window u = q+v in the old domain.
GeneratingFamily chekanov(const GeneratingFamily& fam, const SympGenFam& sg, const ChekanovOptions& opts = {});

enum class Turn { Ccw, Cw };

struct RotateOptions {
    std::optional<Interval> domain;  // default [-R, R], R = max |old endpoint|
    std::string u_name = "u";
};

/// F(u, xi) - u q (Ccw, generates W of the curve) or F(u, xi) + u q (Cw).
GeneratingFamily rotate(const GeneratingFamily& fam, Turn dir, const RotateOptions& opts = {});

/// The module-wide cutoff: 1 on |x| <= 5/4, 0 on |x| >= 2.
SmoothFunction dagger_cutoff(const std::string& var);

/// (phi F, (1 - phi) F) with phi a function of the base variable only.
std::pair<SmoothFunction, SmoothFunction> cutoff_split(const GeneratingFamily& fam, const SmoothFunction& phi);

/// +1: phi(u)F(u,xi) + phi(q)(1-phi(u))F(u,xi) - u q;  -1: the same with + u q.
GeneratingFamily dagger(const GeneratingFamily& fam, int sign = +1, const RotateOptions& opts = {});

struct LegRestriction {
    GeneratingFamily family;
    std::vector<std::string> warnings;
};

/// Dagger read in the leg coordinate s (the rotated base), over s in [0, reach].
LegRestriction restrict_to_leg(const GeneratingFamily& fam, double reach = 3.2);

struct LocalizeOptions {
    ChekanovOptions chekanov;
    int check_points = 1000;
    double check_tol = 1e-12;
};

/// P-hat = f(u, xi) + phi(q) eps(u, xi) + G(l, t, chi) - v t.
GeneratingFamily localize(const GeneratingFamily& fam, const SmoothFunction& f, const SmoothFunction& eps,
                          const SmoothFunction& phi, const SympGenFam& sg, const LocalizeOptions& opts = {});

struct OSetOptions {
    int r_grid = 161;
    std::optional<Interval> r_range;  // default: hull of the first term and the family domain
    TraceConfig trace = TraceConfig::defaults();
};

struct OSet {
    std::vector<Interval> intervals;
    bool conservative = false;  // padded by the scan resolution
    double resolution = 0.0;
};

OSet compute_O_set(const GeneratingFamily& fam, const SmoothFunction& f, const SmoothFunction& eps,
                   const SmoothFunction& phi, const Symplectomorphism& S, const OSetOptions& opts = {});

enum class GlueCase { NonLeg, Leg };

struct GlueOptions {
    /// Vertex coordinate; must lie in K.
    double vertex = 0.0;
    /// +1 when the edge e lies toward larger base values.
    int edge_side = +1;
    int agreement_points = 400;
    double agreement_tol = 1e-12;
    /// Leg case: domain of the dagger-side family and of the result.
    std::optional<Interval> dagger_domain;
};

/// Splices (1 - chi)(F_A + q) + chi G_B with a step chi whose transition lies inside K.
GeneratingFamily glue(const GeneratingFamily& famA, const GeneratingFamily& famB, Interval K, GlueCase c,
                      const QuadraticStabilizer& s, const GlueOptions& opts = {});

struct DefectReport {
    Interval phi_plateau;  // phi == 1 here
    Interval phi_support;  // phi == 0 outside
    OSet o_set;
    bool compact = true;
    std::vector<std::string> box_vars;
    std::vector<Interval> box;  // support box of P-hat - P(f) over box_vars
    std::vector<std::string> cylinder_vars;  // variables the defect does not depend on
    bool empty = false;
    MatchReport match;
};

struct CompactifyOptions {
    ChekanovOptions chekanov;
    OSetOptions o_set;
    int support_grid = 161;
    double margin = 0.25;
    double match_tol = 1e-6;
};

std::pair<GeneratingFamily, DefectReport> compactify_defect(const GeneratingFamily& fam, const SmoothFunction& f,
                                                            const SmoothFunction& eps, const SympGenFam& sg,
                                                            const Symplectomorphism& S,
                                                            const CompactifyOptions& opts = {});

/// Curves equal and a constant index offset: numerical evidence of stable equivalence.
MatchReport stable_equivalence_evidence(const GeneratingFamily& a, const GeneratingFamily& b, double tol,
                                        const MatchOptions& opts = {});

}  // namespace gfc
