#include "gfc/operators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace gfc {

namespace {

SmoothFunction var(const std::string& n) { return SmoothFunction::variable(n); }
SmoothFunction num(double c) { return SmoothFunction::constant(c); }

Interval hull(const Interval& a, const Interval& b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

// Rewrites window constraints of `fam` for a new family whose old base point is `u_expr`.
std::vector<WindowConstraint> moved_constraints(const GeneratingFamily& fam, const SmoothFunction& u_expr,
                                                const std::vector<std::string>& vars) {
    std::vector<WindowConstraint> out;
    for (const auto& c : fam.constraints())
        out.push_back({c.c.substitute({{fam.base_var(), u_expr}}, vars), c.range});
    return out;
}

std::vector<std::string> with_base(const std::string& base, const std::vector<std::string>& fibers) {
    std::vector<std::string> v = {base};
    v.insert(v.end(), fibers.begin(), fibers.end());
    return v;
}

void merge_intervals(std::vector<Interval>& iv) {
    std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> out;
    for (const auto& i : iv) {
        if (!out.empty() && i.lo <= out.back().hi) out.back().hi = std::max(out.back().hi, i.hi);
        else out.push_back(i);
    }
    iv = std::move(out);
}

struct ChekanovNames {
    std::string v, t;
    std::vector<std::string> chi;
    std::map<std::string, SmoothFunction> chi_renames;
};

ChekanovNames chekanov_names(const GeneratingFamily& fam, const SympGenFam& sg, const ChekanovOptions& opts) {
    auto taken = family_names(fam);
    ChekanovNames n;
    n.v = fresh_name(opts.v_name, taken);
    taken.insert(n.v);
    n.t = fresh_name(opts.t_name, taken);
    taken.insert(n.t);
    for (const auto& c : sg.fiber_vars) {
        std::string r = fresh_name(c, taken);
        taken.insert(r);
        n.chi.push_back(r);
        n.chi_renames.emplace(c, var(r));
    }
    return n;
}

// Shared tail of chekanov and localize: Fpart is already a function of (q, xi, v).
GeneratingFamily chekanov_assemble(const GeneratingFamily& fam, const SmoothFunction& Fpart, const SympGenFam& sg,
                                   const ChekanovNames& n, const ChekanovOptions& opts) {
    const std::string& q = fam.base_var();
    Interval dom = opts.domain.value_or(fam.base_domain());
    const Interval& old = fam.base_domain();
    Interval vbox = opts.v_box.value_or(Interval{old.lo - dom.hi, old.hi - dom.lo});
    std::vector<std::string> fibers = fam.fiber_vars();
    std::vector<Interval> box = fam.fiber_box();
    fibers.push_back(n.v);
    box.push_back(vbox);
    fibers.push_back(n.t);
    box.push_back(opts.t_box);
    for (std::size_t i = 0; i < n.chi.size(); ++i) {
        fibers.push_back(n.chi[i]);
        box.push_back(sg.fiber_box.at(i));
    }
    auto vars = with_base(q, fibers);
    auto u = var(q) + var(n.v);
    auto l = var(q) + var(n.v) * num(0.5);
    std::map<std::string, SmoothFunction> gb = n.chi_renames;
    gb.emplace(sg.base1, l);
    gb.emplace(sg.base2, var(n.t));
    auto Gpart = sg.G.substitute(gb, vars);
    auto P = Fpart.with_variables(vars) + Gpart - var(n.v) * var(n.t);
    auto cons = moved_constraints(fam, u, vars);
    cons.push_back({u.with_variables(vars), old});
    GeneratingFamily out(q, dom, fibers, box, P.with_variables(vars), cons);
    return out;
}

double max_abs_on_samples(const GeneratingFamily& fam, const SmoothFunction& g, int count) {
    auto vars = fam.total_variables();
    auto gv = g.with_variables(vars);
    std::mt19937 rng(12345);
    double worst = 0.0;
    std::vector<double> x(vars.size());
    for (int k = 0; k < count; ++k) {
        std::uniform_real_distribution<double> Uq(fam.base_domain().lo, fam.base_domain().hi);
        x[0] = Uq(rng);
        for (std::size_t i = 0; i < fam.fiber_dim(); ++i) {
            std::uniform_real_distribution<double> U(fam.fiber_box()[i].lo, fam.fiber_box()[i].hi);
            x[i + 1] = U(rng);
        }
        worst = std::max(worst, std::fabs(gv.evaluate(x)));
    }
    return worst;
}

Interval dagger_default_domain(const GeneratingFamily& fam, const RotateOptions& opts) {
    if (opts.domain) return *opts.domain;
    double R = std::max(std::fabs(fam.base_domain().lo), std::fabs(fam.base_domain().hi));
    return {-R, R};
}

// Grid scan of the support of eps over the family window.
struct SupportScan {
    bool empty = true;
    bool touches_boundary = false;
    Interval u;
    std::vector<Interval> fiber;
};

SupportScan scan_support(const GeneratingFamily& fam, const SmoothFunction& eps, int grid) {
    SupportScan s;
    auto vars = fam.total_variables();
    auto e = eps.with_variables(vars);
    expr::Program prog({e.tree()}, vars);
    const std::size_t N = vars.size();
    std::vector<Interval> win = {fam.base_domain()};
    for (const auto& b : fam.fiber_box()) win.push_back(b);
    // Full tensor grid for low dimensions, Halton-like lattice beyond.
    int per_axis = N <= 2 ? grid : std::max(9, static_cast<int>(std::pow(2e5, 1.0 / N)));
    std::vector<int> idx(N, 0);
    std::vector<double> x(N), out(1), scratch;
    std::vector<double> lo(N, std::numeric_limits<double>::infinity()), hi(N, -std::numeric_limits<double>::infinity());
    for (;;) {
        bool boundary = false;
        for (std::size_t k = 0; k < N; ++k) {
            x[k] = win[k].lo + win[k].length() * idx[k] / (per_axis - 1);
            if (idx[k] == 0 || idx[k] == per_axis - 1) boundary = true;
        }
        prog.evaluate(x, out, scratch);
        if (out[0] != 0.0) {
            s.empty = false;
            if (boundary) s.touches_boundary = true;
            for (std::size_t k = 0; k < N; ++k) {
                lo[k] = std::min(lo[k], x[k]);
                hi[k] = std::max(hi[k], x[k]);
            }
        }
        std::size_t k = 0;
        while (k < N && ++idx[k] == per_axis) idx[k++] = 0;
        if (k == N) break;
    }
    if (s.empty) return s;
    for (std::size_t k = 0; k < N; ++k) {
        double h = win[k].length() / (per_axis - 1);
        Interval iv{std::max(win[k].lo, lo[k] - h), std::min(win[k].hi, hi[k] + h)};
        if (k == 0) s.u = iv;
        else s.fiber.push_back(iv);
    }
    return s;
}

}  // namespace

QuadraticStabilizer QuadraticStabilizer::from_matrix(std::vector<std::string> vars, const Eigen::MatrixXd& M,
                                                     double half_width) {
    QuadraticStabilizer s;
    Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        double ev = es.eigenvalues()[i];
        if (std::fabs(ev) < 1e-12) throw Error("stabilizing form is degenerate");
        if (ev < 0) ++s.index;
    }
    s.form = SmoothFunction::quadratic_form(vars, sym);
    s.box.assign(vars.size(), Interval{-half_width, half_width});
    s.vars = std::move(vars);
    return s;
}

QuadraticStabilizer QuadraticStabilizer::positive(std::vector<std::string> vars) {
    auto n = static_cast<Eigen::Index>(vars.size());
    return from_matrix(std::move(vars), Eigen::MatrixXd::Identity(n, n));
}

QuadraticStabilizer QuadraticStabilizer::hyperbolic(const std::string& x, const std::string& y) {
    Eigen::MatrixXd M(2, 2);
    M << 0, -0.5, -0.5, 0;
    return from_matrix({x, y}, M);
}

std::string fresh_name(const std::string& base, const std::set<std::string>& taken) {
    if (!taken.count(base)) return base;
    for (int k = 1;; ++k) {
        std::string c = base + "_" + std::to_string(k);
        if (!taken.count(c)) return c;
    }
}

std::set<std::string> family_names(const GeneratingFamily& fam) {
    auto v = fam.total_variables();
    return {v.begin(), v.end()};
}

GeneratingFamily stabilize(const GeneratingFamily& fam, const QuadraticStabilizer& s) {
    auto taken = family_names(fam);
    for (const auto& v : s.vars)
        if (taken.count(v)) throw Error("stabilizer variable '" + v + "' collides with the family");
    auto fibers = fam.fiber_vars();
    auto box = fam.fiber_box();
    fibers.insert(fibers.end(), s.vars.begin(), s.vars.end());
    box.insert(box.end(), s.box.begin(), s.box.end());
    auto vars = with_base(fam.base_var(), fibers);
    std::vector<WindowConstraint> cons;
    for (const auto& c : fam.constraints()) cons.push_back({c.c.with_variables(vars), c.range});
    GeneratingFamily out(fam.base_var(), fam.base_domain(), fibers, box, (fam.F() + s.form).with_variables(vars), cons);
    out.set_name(fam.name());
    return out;
}

GeneratingFamily chekanov(const GeneratingFamily& fam, const SympGenFam& sg, const ChekanovOptions& opts) {
    if (sg.certified_residual > 1e-4) throw Error("symplectomorphism generating family failed its section check");
    auto n = chekanov_names(fam, sg, opts);
    auto vars = with_base(fam.base_var(), fam.fiber_vars());
    vars.push_back(n.v);
    auto Fpart = fam.F().substitute({{fam.base_var(), var(fam.base_var()) + var(n.v)}}, vars);
    auto out = chekanov_assemble(fam, Fpart, sg, n, opts);
    out.set_name(fam.name());
    return out;
}

GeneratingFamily rotate(const GeneratingFamily& fam, Turn dir, const RotateOptions& opts) {
    auto taken = family_names(fam);
    std::string u = fresh_name(opts.u_name, taken);
    const std::string& q = fam.base_var();
    auto fibers = fam.fiber_vars();
    auto box = fam.fiber_box();
    fibers.push_back(u);
    box.push_back(fam.base_domain());
    auto vars = with_base(q, fibers);
    auto Fu = fam.F().substitute({{q, var(u)}}, vars);
    auto uq = var(u) * var(q);
    auto F = dir == Turn::Ccw ? Fu - uq : Fu + uq;
    GeneratingFamily out(q, dagger_default_domain(fam, opts), fibers, box, F.with_variables(vars),
                         moved_constraints(fam, var(u), vars));
    out.set_name(fam.name());
    return out;
}

SmoothFunction dagger_cutoff(const std::string& v) { return make_cutoff(1.25, 2.0, v); }

std::pair<SmoothFunction, SmoothFunction> cutoff_split(const GeneratingFamily& fam, const SmoothFunction& phi) {
    for (const auto& v : phi.free_variables())
        if (v != fam.base_var()) throw Error("cutoff depends on '" + v + "', not only on the base variable");
    auto vars = fam.total_variables();
    auto F = fam.F();
    auto Fc = (phi * F).with_variables(vars);
    // F - phi F rather than (1 - phi) F so that F_c + F_nc rebuilds F's tree.
    auto Fnc = (F - Fc).with_variables(vars);
    return {Fc, Fnc};
}

GeneratingFamily dagger(const GeneratingFamily& fam, int sign, const RotateOptions& opts) {
    if (sign != 1 && sign != -1) throw Error("dagger sign must be +1 or -1");
    auto taken = family_names(fam);
    std::string u = fresh_name(opts.u_name, taken);
    const std::string& q = fam.base_var();
    auto fibers = fam.fiber_vars();
    auto box = fam.fiber_box();
    fibers.push_back(u);
    box.push_back(fam.base_domain());
    auto vars = with_base(q, fibers);
    auto Fu = fam.F().substitute({{q, var(u)}}, vars);
    auto phiu = dagger_cutoff(u), phiq = dagger_cutoff(q);
    auto local = phiu * Fu + phiq * ((num(1.0) - phiu) * Fu);
    auto uq = var(u) * var(q);
    auto F = sign > 0 ? local - uq : local + uq;
    GeneratingFamily out(q, dagger_default_domain(fam, opts), fibers, box, F.with_variables(vars),
                         moved_constraints(fam, var(u), vars));
    out.set_name(fam.name());
    return out;
}

LegRestriction restrict_to_leg(const GeneratingFamily& fam, double reach) {
    LegRestriction r;
    RotateOptions o;
    o.domain = Interval{0.0, reach};
    r.family = dagger(fam, +1, o);
    auto c = critical_locus(fam);
    if (!bounded_in_region(c, Region::perp()))
        r.warnings.push_back("family curve leaves the crossing region; the leg restriction is not certified");
    return r;
}

GeneratingFamily localize(const GeneratingFamily& fam, const SmoothFunction& f, const SmoothFunction& eps,
                          const SmoothFunction& phi, const SympGenFam& sg, const LocalizeOptions& opts) {
    auto vars = fam.total_variables();
    for (const auto& v : phi.free_variables())
        if (v != fam.base_var()) throw Error("localizing cutoff must depend on the base variable only");
    auto sum = (f + eps).with_variables(vars);
    if (!expr::equal(sum.tree(), fam.F().tree())) {
        double d = max_abs_on_samples(fam, sum - fam.F(), opts.check_points);
        double scale = 1.0 + max_abs_on_samples(fam, fam.F(), opts.check_points);
        if (d > opts.check_tol * scale) {
            std::ostringstream os;
            os << "decomposition mismatch: |f + eps - F| reaches " << d;
            throw Error(os.str());
        }
    }
    auto n = chekanov_names(fam, sg, opts.chekanov);
    const std::string& q = fam.base_var();
    auto pv = vars;
    pv.push_back(n.v);
    auto u = var(q) + var(n.v);
    auto fu = f.with_variables(vars).substitute({{q, u}}, pv);
    auto eu = eps.with_variables(vars).substitute({{q, u}}, pv);
    auto Fpart = fu + phi.with_variables(pv) * eu;
    auto out = chekanov_assemble(fam, Fpart, sg, n, opts.chekanov);
    out.set_name(fam.name());
    return out;
}

OSet compute_O_set(const GeneratingFamily& fam, const SmoothFunction& f, const SmoothFunction& eps,
                   const SmoothFunction& phi, const Symplectomorphism& S, const OSetOptions& opts) {
    OSet o;
    auto vars = fam.total_variables();
    auto e = eps.with_variables(vars);
    expr::Program eprog({e.tree()}, vars);
    std::vector<double> out(1), scratch;
    auto in_supp = [&](const CurveSample& s) {
        std::vector<double> x = {s.q};
        x.insert(x.end(), s.fiber.begin(), s.fiber.end());
        eprog.evaluate(x, out, scratch);
        return out[0] != 0.0;
    };
    // Images pr(S(iota(x))) of locus samples, split into runs inside supp eps.
    auto runs_of = [&](const SampledCurve& c) {
        std::vector<std::vector<double>> runs;
        for (const auto& br : c.branches) {
            std::vector<double> cur;
            for (const auto& s : br.samples) {
                if (in_supp(s)) {
                    cur.push_back(S.apply(Vec2(s.q, s.p))[0]);
                } else if (!cur.empty()) {
                    runs.push_back(std::move(cur));
                    cur.clear();
                }
            }
            if (!cur.empty()) runs.push_back(std::move(cur));
        }
        return runs;
    };
    auto vars_f = f.with_variables(vars);
    auto first = runs_of(critical_locus(fam.with_F((vars_f + e).with_variables(vars)), opts.trace));
    Interval range = opts.r_range.value_or(Interval{fam.base_domain().lo - 1.0, fam.base_domain().hi + 1.0});
    for (const auto& r : first) {
        auto [mn, mx] = std::minmax_element(r.begin(), r.end());
        o.intervals.push_back({*mn, *mx});
        if (!opts.r_range) range = hull(range, Interval{*mn - 1.0, *mx + 1.0});
    }
    // Fixed-base scan: r with a point of C_{F_r} in supp eps mapping to r.
    const int m = std::max(2, opts.r_grid);
    const double h = range.length() / (m - 1);
    o.resolution = h;
    std::map<double, std::vector<double>> by_weight;
    std::string base = fam.base_var();
    for (int k = 0; k < m; ++k) {
        double r = range.lo + h * k;
        by_weight[phi.evaluate({{base, r}})].push_back(r);
    }
    for (const auto& [c, rs] : by_weight) {
        auto Fr = (vars_f + SmoothFunction::constant(c) * e).with_variables(vars);
        auto runs = runs_of(critical_locus(fam.with_F(Fr), opts.trace));
        for (double r : rs) {
            bool hit = false;
            for (const auto& run : runs) {
                for (std::size_t i = 0; i < run.size() && !hit; ++i) {
                    if (std::fabs(run[i] - r) <= h / 2) hit = true;
                    if (i + 1 < run.size() && (run[i] - r) * (run[i + 1] - r) <= 0) hit = true;
                }
                if (hit) break;
            }
            if (hit) {
                o.intervals.push_back({r - h / 2, r + h / 2});
                o.conservative = true;
            }
        }
    }
    merge_intervals(o.intervals);
    return o;
}

GeneratingFamily glue(const GeneratingFamily& famA, const GeneratingFamily& famB, Interval K, GlueCase gc,
                      const QuadraticStabilizer& s, const GlueOptions& opts) {
    if (!K.contains(opts.vertex)) throw Error("agreement interval K does not contain the vertex");
    if (!(K.hi > K.lo)) throw Error("agreement interval K is empty");
    GeneratingFamily A;
    if (gc == GlueCase::NonLeg) {
        A = stabilize(famA, s);
    } else {
        RotateOptions ro;
        ro.domain = opts.dagger_domain;
        A = stabilize(dagger(famA, +1, ro), s);
    }
    if (A.base_var() != famB.base_var()) throw Error("glued families use different base variables");
    std::set<std::string> fa(A.fiber_vars().begin(), A.fiber_vars().end());
    std::set<std::string> fb(famB.fiber_vars().begin(), famB.fiber_vars().end());
    if (fa != fb) throw Error("glued families have different fiber variables after stabilization");
    auto vars = A.total_variables();
    auto FA = A.F();
    auto FB = famB.F().with_variables(vars);
    // Agreement on K.
    if (!expr::equal(FA.tree(), FB.tree())) {
        std::vector<Interval> box;
        for (std::size_t i = 0; i < A.fiber_dim(); ++i) {
            const auto& a = A.fiber_box()[i];
            auto it = std::find(famB.fiber_vars().begin(), famB.fiber_vars().end(), A.fiber_vars()[i]);
            const auto& b = famB.fiber_box()[it - famB.fiber_vars().begin()];
            box.push_back({std::max(a.lo, b.lo), std::min(a.hi, b.hi)});
        }
        GeneratingFamily probe(A.base_var(), K, A.fiber_vars(), box, (FA - FB).with_variables(vars));
        double d = max_abs_on_samples(probe, probe.F(), opts.agreement_points);
        if (d > opts.agreement_tol) {
            std::ostringstream os;
            os << "glue agreement failure on K: families differ by " << d;
            throw Error(os.str());
        }
    }
    double w = K.length() / 4;
    const std::string& q = A.base_var();
    SmoothFunction chi;
    if (opts.edge_side > 0) {
        chi = make_step(K.lo + w, K.hi - w, q);
    } else {
        chi = make_step(-K.hi + w, -K.lo - w, q).substitute({{q, num(-1.0) * var(q)}}, {q});
    }
    chi = chi.with_variables(vars);
    auto F = (num(1.0) - chi) * FA + chi * FB;
    std::vector<Interval> box;
    for (std::size_t i = 0; i < A.fiber_dim(); ++i) {
        auto it = std::find(famB.fiber_vars().begin(), famB.fiber_vars().end(), A.fiber_vars()[i]);
        box.push_back(hull(A.fiber_box()[i], famB.fiber_box()[it - famB.fiber_vars().begin()]));
    }
    std::vector<WindowConstraint> cons;
    auto add_cons = [&](const std::vector<WindowConstraint>& cs) {
        for (const auto& c : cs) {
            auto cc = c.c.with_variables(vars);
            bool dup = false;
            for (const auto& d : cons)
                if (expr::equal(d.c.tree(), cc.tree()) && d.range.lo == c.range.lo && d.range.hi == c.range.hi) dup = true;
            if (!dup) cons.push_back({cc, c.range});
        }
    };
    add_cons(A.constraints());
    add_cons(famB.constraints());
    GeneratingFamily spliced(q, hull(A.base_domain(), famB.base_domain()), A.fiber_vars(), box,
                             F.with_variables(vars), cons);
    if (gc == GlueCase::NonLeg) return spliced;
    RotateOptions back;
    back.domain = famA.base_domain();
    back.u_name = "w";
    return dagger(spliced, -1, back);
}

std::pair<GeneratingFamily, DefectReport> compactify_defect(const GeneratingFamily& fam, const SmoothFunction& f,
                                                            const SmoothFunction& eps, const SympGenFam& sg,
                                                            const Symplectomorphism& S,
                                                            const CompactifyOptions& opts) {
    DefectReport rep;
    auto vars = fam.total_variables();
    auto names = chekanov_names(fam, sg, opts.chekanov);
    rep.box_vars = vars;
    rep.box_vars.push_back(names.v);
    rep.cylinder_vars = {names.t};
    rep.cylinder_vars.insert(rep.cylinder_vars.end(), names.chi.begin(), names.chi.end());
    auto full = chekanov(fam, sg, opts.chekanov);
    auto f_only = fam.with_F(f.with_variables(vars));

    auto sup = scan_support(fam, eps, opts.support_grid);
    if (sup.touches_boundary) throw Error("noncompact defect: eps does not vanish near the window boundary");
    if (sup.empty) {
        rep.empty = true;
        rep.compact = true;
        auto P = chekanov(f_only, sg, opts.chekanov);
        rep.match = curves_match(critical_locus(P), critical_locus(full), opts.match_tol);
        return {P, rep};
    }

    // Choose phi == 1 on a neighborhood of O and compactly supported.
    double center = sup.u.mid();
    double half = opts.margin;
    GeneratingFamily result;
    for (int iter = 0; iter < 6; ++iter) {
        double a = half, b = half + std::max(0.5, 2 * opts.margin);
        auto phi = make_cutoff(a, b, fam.base_var())
                       .substitute({{fam.base_var(), var(fam.base_var()) - num(center)}}, {fam.base_var()});
        rep.phi_plateau = {center - a, center + a};
        rep.phi_support = {center - b, center + b};
        rep.o_set = compute_O_set(fam, f, eps, phi, S, opts.o_set);
        bool covered = true;
        double need_lo = center, need_hi = center;
        for (const auto& iv : rep.o_set.intervals) {
            if (iv.lo < rep.phi_plateau.lo + opts.margin / 2 || iv.hi > rep.phi_plateau.hi - opts.margin / 2)
                covered = false;
            need_lo = std::min(need_lo, iv.lo);
            need_hi = std::max(need_hi, iv.hi);
        }
        if (covered) {
            LocalizeOptions lo;
            lo.chekanov = opts.chekanov;
            result = localize(fam, f, eps, phi, sg, lo);
            break;
        }
        center = 0.5 * (need_lo + need_hi);
        half = 0.5 * (need_hi - need_lo) + opts.margin;
        if (iter == 5) throw Error("could not cover the O-set by a compact cutoff plateau");
    }
    // Support of phi(q) eps(q+v, xi) over (q, xi, v).
    rep.box.push_back(rep.phi_support);
    for (const auto& b : sup.fiber) rep.box.push_back(b);
    rep.box.push_back({sup.u.lo - rep.phi_support.hi, sup.u.hi - rep.phi_support.lo});
    rep.compact = true;
    rep.match = curves_match(critical_locus(result), critical_locus(full), opts.match_tol);
    return {result, rep};
}

MatchReport stable_equivalence_evidence(const GeneratingFamily& a, const GeneratingFamily& b, double tol,
                                        const MatchOptions& opts) {
    return curves_match(critical_locus(a), critical_locus(b), tol, PotentialMode::PerComponentOffset, opts);
}

}  // namespace gfc
