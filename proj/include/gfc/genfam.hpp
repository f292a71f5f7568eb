#pragma once

// Generating families over a one-dimensional base and the exact curves
// they generate.

#include <optional>
#include <string>
#include <vector>

#include "gfc/expr.hpp"

namespace gfc {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
    bool contains(const Interval& o, double tol = 0.0) const { return o.lo >= lo - tol && o.hi <= hi + tol; }
    double length() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
};

/// Extra hard constraint lo <= c(q, fiber) <= hi on the tracing window.
struct WindowConstraint {
    SmoothFunction c;
    Interval range;
};

class GeneratingFamily {
public:
    GeneratingFamily() = default;
    GeneratingFamily(std::string base_var, Interval base_domain, std::vector<std::string> fiber_vars,
                     std::vector<Interval> fiber_box, SmoothFunction F,
                     std::vector<WindowConstraint> constraints = {});

    /// Fiberless family: the curve is the graph of dF.
    static GeneratingFamily function(std::string base_var, Interval base_domain, SmoothFunction F);

    const std::string& base_var() const { return base_; }
    const Interval& base_domain() const { return domain_; }
    const std::vector<std::string>& fiber_vars() const { return fibers_; }
    const std::vector<Interval>& fiber_box() const { return box_; }
    const SmoothFunction& F() const { return F_; }
    const std::vector<WindowConstraint>& constraints() const { return constraints_; }
    std::size_t fiber_dim() const { return fibers_.size(); }
    /// Base variable followed by the fiber variables.
    std::vector<std::string> total_variables() const;

    const std::string& name() const { return name_; }
    GeneratingFamily& set_name(std::string n) {
        name_ = std::move(n);
        return *this;
    }

    GeneratingFamily with_domain(Interval d) const;
    GeneratingFamily with_F(SmoothFunction F) const;
    GeneratingFamily with_constraints(std::vector<WindowConstraint> c) const;

private:
    std::string base_ = "q";
    Interval domain_{-1.0, 1.0};
    std::vector<std::string> fibers_;
    std::vector<Interval> box_;
    SmoothFunction F_;
    std::vector<WindowConstraint> constraints_;
    std::string name_;
};

struct CurveSample {
    double q = 0.0;
    double p = 0.0;
    double f = 0.0;
    int index = 0;
    bool fold = false;
    std::vector<double> fiber;
    /// Cumulative arclength in the total space along the branch.
    double s = 0.0;
    /// Image tangent d(q,p)/ds; meaningful when the owning curve has tangents.
    double dq = 0.0;
    double dp = 0.0;
};

struct Branch {
    std::vector<CurveSample> samples;
    bool closed = false;
};

struct SampledCurve {
    std::vector<Branch> branches;
    std::vector<std::string> fiber_vars;
    /// When false, segments are compared as straight chords.
    bool has_tangents = true;
    std::vector<std::string> warnings;

    std::size_t num_samples() const;
    bool empty() const { return num_samples() == 0; }
};

struct TraceConfig {
    int seeds = 400;              // per pass
    double newton_tol = 1e-12;    // residual target for the corrector
    double max_residual = 1e-10;  // acceptance bound on |F_xi| per sample
    double max_step = 0.05;       // total-space arclength
    double max_image_step = 0.02; // step in the (q, p) plane
    double min_step = 1e-9;
    double cubic_tol = 1e-10;     // midpoint deviation from the Hermite cubic
    double dedupe_tol = 1e-6;
    double fold_tol = 1e-8;
    double rank_tol = 1e-9;
    std::size_t max_samples = 200000;

    /// Defaults possibly overridden by GFC_TOL (scales cubic_tol).
    static TraceConfig defaults();
};

/// Traces the critical locus {F_xi = 0} inside the family window.
SampledCurve critical_locus(const GeneratingFamily& fam, const TraceConfig& cfg = TraceConfig::defaults());

struct MorseIndex {
    int index = 0;
    bool degenerate = false;
    double min_abs_eigenvalue = 0.0;
};

/// Number of negative eigenvalues of the fiber Hessian at (q, fiber).
MorseIndex fiber_morse_index(const GeneratingFamily& fam, double q, const std::vector<double>& fiber,
                             double fold_tol = 1e-8);

struct Region {
    enum class Kind { Plane, Perp, HalfPlanePositive, Band, Box, Univalent, Trivalent };
    Kind kind = Kind::Plane;
    /// Perp only: use |q| <= 2 instead of |q| <= 1 in the unbounded part.
    bool alternative = false;
    double band = 1.0;
    Interval qbox{}, pbox{};

    static Region plane() { return {}; }
    static Region perp(bool alternative = false);
    static Region half_plane_positive();
    static Region band_region(double width);
    static Region box(Interval q, Interval p);
    /// {q^2 + p^2 <= 1} u {q > 0, |p| < 1}
    static Region univalent();
    /// {|p| <= 1} u {|q| <= 1, p != 0}
    static Region trivalent();

    bool contains(double q, double p) const;
};

bool bounded_in_region(const SampledCurve& curve, const Region& region);

enum class PotentialMode { Exact, PerComponentOffset, Ignore };

struct MatchOptions {
    /// Only samples inside this box are used as query points.
    std::optional<Region> window;
    /// Bound on potential mismatch; negative means max(tol, 1e-6), the exactness
    /// resolution of traced potentials.
    double potential_tol = -1.0;
};

struct MatchReport {
    double hausdorff_distance = 0.0;
    std::vector<double> potential_offset_per_branch;
    std::vector<double> potential_spread_per_branch;
    std::optional<int> index_offset;
    bool index_constant = true;
    bool matched = false;

    std::string index_offset_text() const;
};

MatchReport curves_match(const SampledCurve& a, const SampledCurve& b, double tol,
                         PotentialMode mode = PotentialMode::PerComponentOffset, const MatchOptions& opts = {});

/// Same family over a sub-interval of the base domain.
GeneratingFamily restrict_family(const GeneratingFamily& fam, Interval sub);

/// Keeps only the samples whose image lies in the region, splitting branches.
SampledCurve filter_curve(const SampledCurve& c, const Region& region);

/// Worst exactness residual |df - p dq| - 1e-6|dq| - ds^3 over consecutive samples (<= 0 is exact).
double exactness_defect(const SampledCurve& c);

}  // namespace gfc
