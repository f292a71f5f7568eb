#include "gfc/lift.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gfc/operators.hpp"

namespace gfc {

namespace {

bool identically_zero(const SmoothFunction& H) {
    return H.tree()->op == expr::Op::Const && H.tree()->value == 0.0;
}

Box2 image_box(const Symplectomorphism& T, const Box2& b) {
    Box2 out{{1e300, -1e300}, {1e300, -1e300}};
    for (double q : {b.q.lo, b.q.hi})
        for (double p : {b.p.lo, b.p.hi}) {
            Vec2 x = T.apply(Vec2(q, p));
            out.q = {std::min(out.q.lo, x[0]), std::max(out.q.hi, x[0])};
            out.p = {std::min(out.p.lo, x[1]), std::max(out.p.hi, x[1])};
        }
    return out;
}

Box2 grow(const Box2& b, double m) { return {{b.q.lo - m, b.q.hi + m}, {b.p.lo - m, b.p.hi + m}}; }

std::set<std::string> all_names(const GlobalFamily& gf) {
    std::set<std::string> out;
    for (const auto& [v, fam] : gf.families)
        for (const auto& n : fam.total_variables()) out.insert(n);
    return out;
}

double transport_distance(const SampledCurve& got, const SampledCurve& want, const Interval& domain) {
    if (got.empty() && want.empty()) return 0.0;
    const double m = 0.25;
    MatchOptions o;
    o.window = Region::box({domain.lo + m, domain.hi - m}, {-1e300, 1e300});
    return curves_match(got, want, 1.0, PotentialMode::Ignore, o).hausdorff_distance;
}

}  // namespace

AdmissibilityReport check_ham_admissible(const AdmissibleIsotopy& iso, const ChartAtlas& atlas, int grid) {
    AdmissibilityReport rep;
    for (std::size_t i = 0; i < iso.entries.size(); ++i) {
        const auto& e = iso.entries[i];
        std::ostringstream where;
        where << "entry " << i << " (chart " << e.chart << "): ";
        const Chart* chart = nullptr;
        for (const auto& c : atlas.charts())
            if (c.vertex == e.chart) chart = &c;
        if (!chart) {
            rep.problems.push_back(where.str() + "unknown chart");
            continue;
        }
        if (identically_zero(e.H)) continue;
        if (!(e.support.q.hi > e.support.q.lo) || !(e.support.p.hi > e.support.p.lo)) {
            rep.problems.push_back(where.str() + "empty support box");
            continue;
        }
        bool outside = false, disk = false;
        for (int a = 0; a < grid; ++a)
            for (int b = 0; b < grid; ++b) {
                double q = e.support.q.lo + e.support.q.length() * a / (grid - 1);
                double p = e.support.p.lo + e.support.p.length() * b / (grid - 1);
                if (!sigma_membership(atlas, e.chart, q, p)) outside = true;
                // Univalent disk off its ribbon.
                if (chart->valence == 1 && q * q + p * p <= 1.0 && !(q > 0.0 && std::fabs(p) < 1.0)) disk = true;
            }
        if (outside) rep.problems.push_back(where.str() + "support leaves the chart's part of Sigma(T)");
        if (disk) rep.problems.push_back(where.str() + "support meets the univalent disk off its ribbon");
    }
    return rep;
}

Symplectomorphism entry_map(const IsotopyEntry& e) { return Symplectomorphism::flow(e.H, e.t0, e.t1, e.support); }

GlobalFamily lift_step(const GlobalFamily& gf, const ChartAtlas& atlas, const std::string& chart,
                       const IsotopyStep& step, const Box2& support, const LiftOptions& opts, LiftedStep* report) {
    if (step.c1_defect > opts.threshold) {
        std::ostringstream os;
        os << "step C1 defect " << step.c1_defect << " exceeds the threshold " << opts.threshold;
        throw Error(os.str());
    }
    atlas.chart(chart);
    auto taken = all_names(gf);
    std::string v = fresh_name("v", taken);
    taken.insert(v);
    std::string t = fresh_name("t", taken);

    LiftedStep rep;
    rep.chart = chart;
    rep.t0 = step.t0;
    rep.t1 = step.t1;
    rep.c1_defect = step.c1_defect;

    GlobalFamily out;
    for (const auto& c : atlas.charts()) {
        const auto& fam = gf.at(c.vertex);
        ChartUpdate up;
        up.vertex = c.vertex;
        up.rank_before = fam.fiber_dim();

        std::optional<Symplectomorphism> S;
        Box2 box = support;
        if (c.vertex == chart) {
            S = step.map;
        } else if (atlas.edge_between(chart, c.vertex)) {
            auto T = atlas.transition_map(chart, c.vertex);
            box = image_box(T, support);
            if (box.q.hi > c.domain.lo && box.q.lo < c.domain.hi) S = step.map.conjugate_by(T);
        }
        GeneratingFamily next;
        if (S) {
            NearIdentityOptions no;
            no.grid = opts.genfam_grid;
            // The fragment threshold is measured on a coarser grid; the section check only
            // needs J + I invertible, so allow headroom here.
            no.max_defect = 2 * opts.threshold;
            auto sg = genfam_of_near_identity(*S, grow(box, opts.genfam_margin), no);
            ChekanovOptions co;
            co.v_name = v;
            co.t_name = t;
            double w = step.c1_defect + opts.fiber_margin;
            co.v_box = Interval{-w, w};
            co.t_box = opts.t_box;
            next = chekanov(fam, sg, co);
            up.transported = true;
        } else {
            auto s = QuadraticStabilizer::hyperbolic(v, t);
            next = stabilize(fam, s);
        }
        next.set_name(fam.name());
        up.rank_after = next.fiber_dim();
        if (opts.verify) {
            auto before = critical_locus(fam, opts.trace);
            auto want = S ? transform_curve(*S, before) : before;
            up.transport_error = transport_distance(critical_locus(next, opts.trace), want, c.domain);
            rep.error = std::max(rep.error, up.transport_error);
        }
        rep.updates.push_back(up);
        out.families.emplace(c.vertex, std::move(next));
    }
    if (opts.verify) {
        auto cr = check_global_consistency(out, atlas, opts.consistency_tol, opts.trace);
        rep.consistent = cr.consistent();
        rep.consistency = cr.text();
    }
    if (report) *report = std::move(rep);
    return out;
}

GlobalFamily lift_isotopy(const GlobalFamily& gf, const ChartAtlas& atlas, const AdmissibleIsotopy& iso,
                          const LiftOptions& opts, LiftReport* report) {
    auto adm = check_ham_admissible(iso, atlas);
    if (!adm.admissible()) {
        std::string msg = "isotopy is not admissible:";
        for (const auto& p : adm.problems) msg += "\n  " + p;
        throw Error(msg);
    }
    struct Planned {
        const IsotopyEntry* entry;
        IsotopyStep step;
    };
    std::vector<Planned> plan;
    for (std::size_t i = 0; i < iso.entries.size(); ++i) {
        const auto& e = iso.entries[i];
        if (identically_zero(e.H)) continue;
        Box2 box = grow(e.support, opts.genfam_margin);
        auto steps = fragment(e.H, e.t0, e.t1, box, opts.threshold, static_cast<int>(i), e.support, 41);
        if (static_cast<int>(steps.size()) < opts.min_fragments) {
            steps.clear();
            int n = opts.min_fragments;
            for (int k = 0; k < n; ++k) {
                IsotopyStep st;
                st.t0 = e.t0 + (e.t1 - e.t0) * k / n;
                st.t1 = e.t0 + (e.t1 - e.t0) * (k + 1) / n;
                st.map = Symplectomorphism::flow(e.H, st.t0, st.t1, e.support);
                st.c1_defect = c1_defect(st.map, box, 41);
                st.chart = static_cast<int>(i);
                steps.push_back(st);
            }
        }
        for (auto& st : steps) plan.push_back({&e, st});
    }
    LiftReport rep;
    rep.budget = opts.budget >= 0 ? opts.budget : opts.step_tol * static_cast<double>(std::max<std::size_t>(1, plan.size()));
    GlobalFamily cur = gf;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        LiftOptions o = opts;
        o.consistency_tol = std::max(opts.consistency_tol, opts.step_tol * static_cast<double>(k + 1));
        LiftedStep ls;
        cur = lift_step(cur, atlas, plan[k].entry->chart, plan[k].step, plan[k].entry->support, o, &ls);
        rep.accumulated += opts.verify ? ls.error : opts.step_tol;
        bool consistent = ls.consistent;
        rep.steps.push_back(std::move(ls));
        if (!consistent) {
            rep.ok = false;
            if (report) *report = rep;
            throw Error("consistency repair failure at step " + std::to_string(k));
        }
        if (rep.accumulated > rep.budget) {
            rep.ok = false;
            if (report) *report = rep;
            std::ostringstream os;
            os << "accumulated tolerance " << rep.accumulated << " exceeds the budget " << rep.budget << " at step " << k;
            throw Error(os.str());
        }
    }
    if (report) *report = std::move(rep);
    return cur;
}

std::string LiftReport::text() const {
    std::ostringstream os;
    os.precision(6);
    os << "lift: " << steps.size() << " steps, accumulated error " << accumulated << " (budget " << budget << "), "
       << (ok ? "ok" : "FAILED") << "\n";
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& s = steps[k];
        os << "step " << k << " chart " << s.chart << " t=[" << s.t0 << "," << s.t1 << "] C1 defect " << s.c1_defect
           << " error " << s.error << (s.consistent ? "" : " INCONSISTENT") << "\n";
        for (const auto& u : s.updates)
            os << "  " << u.vertex << ": " << (u.transported ? "chekanov" : "stabilized") << " rank " << u.rank_before
               << " -> " << u.rank_after << " transport error " << u.transport_error << "\n";
    }
    return os.str();
}

}  // namespace gfc
