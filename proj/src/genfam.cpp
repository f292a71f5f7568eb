#include "gfc/genfam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

namespace gfc {

GeneratingFamily::GeneratingFamily(std::string base_var, Interval base_domain, std::vector<std::string> fiber_vars,
                                   std::vector<Interval> fiber_box, SmoothFunction F,
                                   std::vector<WindowConstraint> constraints)
    : base_(std::move(base_var)), domain_(base_domain), fibers_(std::move(fiber_vars)), box_(std::move(fiber_box)),
      constraints_(std::move(constraints)) {
    if (!(domain_.hi > domain_.lo)) throw Error("base domain must have nonempty interior");
    if (box_.size() != fibers_.size()) throw Error("fiber box dimension does not match fiber variables");
    std::set<std::string> names = {base_};
    for (const auto& v : fibers_)
        if (!names.insert(v).second) throw Error("variable '" + v + "' declared twice in family");
    for (const auto& b : box_)
        if (!(b.hi > b.lo)) throw Error("fiber box must have nonempty interior");
    auto all = total_variables();
    for (const auto& v : F.free_variables())
        if (!names.count(v)) throw Error("family function depends on undeclared variable '" + v + "'");
    F_ = F.with_variables(all);
    for (auto& c : constraints_) {
        for (const auto& v : c.c.free_variables())
            if (!names.count(v)) throw Error("window constraint depends on undeclared variable '" + v + "'");
        c.c = c.c.with_variables(all);
    }
}

GeneratingFamily GeneratingFamily::function(std::string base_var, Interval base_domain, SmoothFunction F) {
    return GeneratingFamily(std::move(base_var), base_domain, {}, {}, std::move(F));
}

std::vector<std::string> GeneratingFamily::total_variables() const {
    std::vector<std::string> v = {base_};
    v.insert(v.end(), fibers_.begin(), fibers_.end());
    return v;
}

GeneratingFamily GeneratingFamily::with_domain(Interval d) const {
    GeneratingFamily g(base_, d, fibers_, box_, F_, constraints_);
    g.name_ = name_;
    return g;
}

GeneratingFamily GeneratingFamily::with_F(SmoothFunction F) const {
    GeneratingFamily g(base_, domain_, fibers_, box_, std::move(F), constraints_);
    g.name_ = name_;
    return g;
}

GeneratingFamily GeneratingFamily::with_constraints(std::vector<WindowConstraint> c) const {
    GeneratingFamily g(base_, domain_, fibers_, box_, F_, std::move(c));
    g.name_ = name_;
    return g;
}

std::size_t SampledCurve::num_samples() const {
    std::size_t n = 0;
    for (const auto& b : branches) n += b.samples.size();
    return n;
}

TraceConfig TraceConfig::defaults() {
    TraceConfig c;
    if (const char* env = std::getenv("GFC_TOL")) {
        char* end = nullptr;
        double v = std::strtod(env, &end);
        if (end != env && v > 0) c.cubic_tol = v;
    }
    return c;
}

MorseIndex fiber_morse_index(const GeneratingFamily& fam, double q, const std::vector<double>& fiber,
                             double fold_tol) {
    const std::size_t n = fam.fiber_dim();
    if (fiber.size() != n) throw Error("fiber point has wrong dimension");
    MorseIndex r;
    if (n == 0) return r;
    std::map<std::string, double> pt = {{fam.base_var(), q}};
    for (std::size_t i = 0; i < n; ++i) pt[fam.fiber_vars()[i]] = fiber[i];
    Eigen::MatrixXd H(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        auto fi = fam.F().differentiate(fam.fiber_vars()[i]);
        for (std::size_t j = i; j < n; ++j) {
            double v = fi.differentiate(fam.fiber_vars()[j]).evaluate(pt);
            H(i, j) = H(j, i) = v;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    double thr = fold_tol * scale;
    r.min_abs_eigenvalue = ev.cwiseAbs().minCoeff();
    r.degenerate = r.min_abs_eigenvalue < thr;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] < -thr) ++r.index;
    return r;
}

Region Region::perp(bool alternative) {
    Region r;
    r.kind = Kind::Perp;
    r.alternative = alternative;
    return r;
}

Region Region::half_plane_positive() {
    Region r;
    r.kind = Kind::HalfPlanePositive;
    return r;
}

Region Region::band_region(double width) {
    Region r;
    r.kind = Kind::Band;
    r.band = width;
    return r;
}

Region Region::box(Interval q, Interval p) {
    Region r;
    r.kind = Kind::Box;
    r.qbox = q;
    r.pbox = p;
    return r;
}

Region Region::univalent() {
    Region r;
    r.kind = Kind::Univalent;
    return r;
}

Region Region::trivalent() {
    Region r;
    r.kind = Kind::Trivalent;
    return r;
}

bool Region::contains(double q, double p) const {
    switch (kind) {
    case Kind::Plane: return true;
    case Kind::Perp: {
        double reach = alternative ? 2.0 : 1.0;
        return p >= -1.0 && (std::fabs(q) <= reach || p <= 1.0);
    }
    case Kind::HalfPlanePositive: return p > 0.0;
    case Kind::Band: return std::fabs(p) <= band;
    case Kind::Box: return qbox.contains(q) && pbox.contains(p);
    case Kind::Univalent: return q * q + p * p <= 1.0 || (q > 0.0 && std::fabs(p) < 1.0);
    case Kind::Trivalent: return std::fabs(p) <= 1.0 || (std::fabs(q) <= 1.0 && p != 0.0);
    }
    return false;
}

bool bounded_in_region(const SampledCurve& curve, const Region& region) {
    for (const auto& b : curve.branches)
        for (const auto& s : b.samples)
            if (!region.contains(s.q, s.p)) return false;
    return true;
}

GeneratingFamily restrict_family(const GeneratingFamily& fam, Interval sub) {
    if (!(sub.hi > sub.lo)) throw Error("restriction interval has empty interior");
    if (!fam.base_domain().contains(sub, 1e-12))
        throw Error("restriction interval is not contained in the base domain");
    return fam.with_domain(sub);
}

SampledCurve filter_curve(const SampledCurve& c, const Region& region) {
    SampledCurve out;
    out.fiber_vars = c.fiber_vars;
    out.has_tangents = c.has_tangents;
    out.warnings = c.warnings;
    for (const auto& b : c.branches) {
        std::vector<Branch> parts;
        Branch cur;
        bool all_in = true;
        for (const auto& s : b.samples) {
            if (region.contains(s.q, s.p)) {
                cur.samples.push_back(s);
            } else {
                all_in = false;
                if (!cur.samples.empty()) parts.push_back(std::move(cur));
                cur = Branch{};
            }
        }
        if (!cur.samples.empty()) parts.push_back(std::move(cur));
        if (b.closed && all_in && parts.size() == 1) parts[0].closed = true;
        // A closed branch cut open: rejoin the wrap-around piece.
        if (b.closed && !all_in && parts.size() >= 2 && region.contains(b.samples.front().q, b.samples.front().p) &&
            region.contains(b.samples.back().q, b.samples.back().p)) {
            Branch joined = parts.back();
            const auto& first = parts.front().samples;
            double base = joined.samples.back().s;
            const auto& tail = joined.samples.back();
            double gap2 = std::pow(first.front().q - tail.q, 2);
            for (std::size_t k = 0; k < tail.fiber.size(); ++k) gap2 += std::pow(first.front().fiber[k] - tail.fiber[k], 2);
            double gap = std::sqrt(gap2);
            for (const auto& s : first) {
                CurveSample t = s;
                t.s = base + gap + (s.s - first.front().s);
                joined.samples.push_back(t);
            }
            parts.front() = std::move(joined);
            parts.pop_back();
        }
        for (auto& p : parts) out.branches.push_back(std::move(p));
    }
    return out;
}

double exactness_defect(const SampledCurve& c) {
    double worst = -std::numeric_limits<double>::infinity();
    auto check = [&](const CurveSample& a, const CurveSample& b) {
        double dq = b.q - a.q;
        double ds = std::fabs(b.s - a.s);
        double r = std::fabs((b.f - a.f) - 0.5 * (a.p + b.p) * dq) - 1e-6 * std::fabs(dq) - ds * ds * ds;
        worst = std::max(worst, r);
    };
    for (const auto& br : c.branches)
        for (std::size_t i = 1; i < br.samples.size(); ++i) check(br.samples[i - 1], br.samples[i]);
    return c.num_samples() == 0 ? 0.0 : worst;
}

}  // namespace gfc
