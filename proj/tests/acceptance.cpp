// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "gfc/io.hpp"
#include "gfc/lift.hpp"
#include "gfc/operators.hpp"

using namespace gfc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void line(int n, bool ok, const std::string& detail) {
    std::printf("[%s] %2d  %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void run(int n, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        line(n, false, std::string("exception: ") + e.what());
    }
}

GeneratingFamily fold_family() {
    return GeneratingFamily("q", {-1, 1}, {"xi"}, {{-2, 2}}, parse_function("xi^3/3 - q*xi", {"q", "xi"}));
}

GeneratingFamily graph_family(const std::string& F, Interval dom = {-1, 1}) {
    return GeneratingFamily::function("q", dom, parse_function(F, {"q"}));
}

SympGenFam identity_genfam() {
    SympGenFam sg;
    sg.G = SmoothFunction::constant(0.0, {"q1", "q2"});
    sg.certified_residual = 0.0;
    return sg;
}

double central(const SmoothFunction& f, std::map<std::string, double> pt, const std::string& v, double h = 1e-5) {
    auto p = pt, m = pt;
    p[v] += h;
    m[v] -= h;
    return (f.evaluate(p) - f.evaluate(m)) / (2 * h);
}

// 1. Symbolic derivatives against central differences.
void derivatives() {
    auto t0 = Clock::now();
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    std::vector<std::string> vars = {"q", "xi", "eta"};
    std::vector<SmoothFunction> corpus = {
        parse_function("xi^3/3 - q*xi", vars),
        parse_function("sin(q*xi) + exp(-eta^2)*q^3 - tanh(xi - eta)", vars),
        parse_function("cutoff(q, 0.5, 1.4)*xi^2 + sqrt(2 + q^2)*eta", vars),
        parse_function("(q + 2*xi)/(3 + eta^2) + log(4 + q*xi) + 2^q", vars),
        dagger(graph_family("0.5*cutoff(q, 0.3, 1)", {-3, 3})).F().with_variables({"q", "u"}).substitute(
            {{"u", SmoothFunction::variable("xi")}}, vars),
        SmoothFunction::quadratic_form(vars, (Eigen::MatrixXd(3, 3) << 1, 2, 0, 2, -1, 0.5, 0, 0.5, 3).finished()),
    };
    double worst = 0;
    int points = 0;
    for (const auto& f : corpus) {
        for (int k = 0; k < 100; ++k, ++points) {
            std::map<std::string, double> pt = {{"q", U(rng)}, {"xi", U(rng)}, {"eta", U(rng)}};
            for (const auto& v : vars) {
                double d = f.differentiate(v).evaluate(pt);
                worst = std::max(worst, std::fabs(central(f, pt, v) - d) / (1 + std::fabs(d)));
            }
        }
    }
    double dt = seconds_since(t0);
    line(1, worst < 1e-6 && dt < 1.0,
         fmt("derivatives: %zu functions x 100 points, worst relative error %.2e (< 1e-6), %.3f s (< 1 s)",
             corpus.size(), worst, dt));
    (void)points;
}

// 2. varpi roundtrip and the quarter-turn generating function.
void varpi_checks() {
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> U(-3, 3);
    double round = 0;
    for (int k = 0; k < 1000; ++k) {
        Eigen::Vector4d x(U(rng), U(rng), U(rng), U(rng));
        round = std::max(round, (varpi_inv(varpi(x)) - x).cwiseAbs().maxCoeff());
    }
    auto sg = make_W_genfam();
    auto G1 = sg.G.differentiate(sg.base1), G2 = sg.G.differentiate(sg.base2);
    auto W = Symplectomorphism::quarter_turn();
    double wres = 0;
    for (int k = 0; k < 1000; ++k) {
        Vec2 x(U(rng), U(rng));
        Vec2 y = W.apply(x);
        Eigen::Vector4d Q = varpi({x[0], x[1], y[0], y[1]});
        std::map<std::string, double> pt{{sg.base1, Q[0]}, {sg.base2, Q[1]}};
        wres = std::max({wres, std::fabs(G1.evaluate(pt) - Q[2]), std::fabs(G2.evaluate(pt) - Q[3])});
    }
    line(2, round <= 1e-12 && wres <= 1e-9,
         fmt("varpi roundtrip %.2e (<= 1e-12) on 1000 points; W generating function residual %.2e (<= 1e-9)", round,
             wres));
}

// 3. Chekanov transport.
void chekanov_transport() {
    std::vector<std::pair<std::string, GeneratingFamily>> fams = {
        {"fold", fold_family()},
        {"q^2/2", graph_family("q^2/2")},
        {"0.3sin(3q)", graph_family("0.3*sin(3*q)")},
        {"zero", graph_family("0")},
        {"cubic", graph_family("q^3/3 - q/4")},
        {"fold+eta^2", GeneratingFamily("q", {-1, 1}, {"xi", "eta"}, {{-2, 2}, {-2, 2}},
                                        parse_function("xi^3/3 - q*xi + eta^2/2", {"q", "xi", "eta"}))},
    };
    Box2 support{{-1.5, 1.5}, {-1.5, 1.5}};
    Box2 gbox{{-1.6, 1.6}, {-1.6, 1.6}};
    struct Map {
        std::string name;
        Symplectomorphism S;
        SympGenFam sg;
        bool windowed;
    };
    std::vector<Map> maps = {
        {"Id", Symplectomorphism::identity(), identity_genfam(), false},
        {"W", Symplectomorphism::quarter_turn(), make_W_genfam(), false},
    };
    for (const char* H : {"0.01*cutoff(q,0.3,1.5)*cutoff(p,0.3,1.5)*(q+p)",
                          "0.008*cutoff(q,0.3,1.5)*cutoff(p,0.3,1.5)*(1 + q*p - p^2)"}) {
        auto S = Symplectomorphism::flow(parse_function(H, {"t", "q", "p"}), 0, 1, support);
        maps.push_back({std::string("flow ") + H, S, genfam_of_near_identity(S, gbox), true});
    }
    double worst = 0, slowest = 0;
    std::string worst_case;
    for (const auto& m : maps)
        for (const auto& [name, fam] : fams) {
            auto t0 = Clock::now();
            auto oracle = transform_curve(m.S, critical_locus(fam));
            auto got = critical_locus(chekanov(fam, m.sg));
            MatchOptions o;
            // A flow moves curve ends across the fixed base window.
            if (m.windowed) o.window = Region::box({-0.9, 0.9}, {-1e300, 1e300});
            double d = curves_match(got, oracle, 1e-5, PotentialMode::Ignore, o).hausdorff_distance;
            double dt = seconds_since(t0);
            if (d >= worst) {
                worst = d;
                worst_case = name + " / " + m.name.substr(0, 4);
            }
            slowest = std::max(slowest, dt);
        }
    line(3, worst < 1e-5 && slowest < 10,
         fmt("Chekanov: %zu families x %zu maps, worst Hausdorff %.2e (< 1e-5, %s), slowest case %.2f s (< 10 s)",
             fams.size(), maps.size(), worst, worst_case.c_str(), slowest));
}

// 4. Dagger on bounded families.
void dagger_property() {
    std::vector<GeneratingFamily> fams = {graph_family("0", {-3, 3}), graph_family("-q/2", {-1.2, 1.2}),
                                          graph_family("q^2/2"), fold_family(), graph_family("0.5*sin(2*q)")};
    auto W = Symplectomorphism::quarter_turn();
    double worst = 0, pot = 0;
    bool bounded = true, matched = true;
    for (const auto& fam : fams) {
        auto base = critical_locus(fam);
        bounded = bounded && bounded_in_region(base, Region::perp());
        // The oracle potential is f - q p at the source point.
        auto r = curves_match(critical_locus(dagger(fam)), transform_curve(W, base), 1e-6, PotentialMode::Exact);
        worst = std::max(worst, r.hausdorff_distance);
        for (double o : r.potential_offset_per_branch) pot = std::max(pot, std::fabs(o));
        matched = matched && r.matched;
    }
    line(4, bounded && matched && worst < 1e-6 && pot <= 1e-6,
         fmt("dagger: %zu bounded families, worst distance %.2e (< 1e-6), potential offset from -qp %.2e (<= 1e-6)",
             fams.size(), worst, pot));
}

// 5. Localization and its negative control.
void localization() {
    auto sg = identity_genfam();
    auto f = parse_function("q^2/2", {"q"});
    auto eps = parse_function("0.1*cutoff(q,0.2,0.5)", {"q"});
    auto fam = GeneratingFamily::function("q", {-1, 1}, f + eps);
    auto phi = make_cutoff(0.75, 0.95, "q");
    auto O = compute_O_set(fam, f, eps, phi, Symplectomorphism::identity());
    bool covered = !O.intervals.empty();
    for (const auto& iv : O.intervals) covered = covered && iv.lo >= -0.75 && iv.hi <= 0.75;
    auto full = critical_locus(chekanov(fam, sg));
    double d = curves_match(critical_locus(localize(fam, f, eps, phi, sg)), full, 1e-6).hausdorff_distance;
    auto zero = SmoothFunction::constant(0.0, {"q"});
    double bad = curves_match(critical_locus(localize(fam, f, eps, zero, sg)), full, 1e-6).hausdorff_distance;
    line(5, covered && d < 1e-6 && bad > 1e-6,
         fmt("localization: O-set inside {phi=1}: %s, distance %.2e (< 1e-6); phi=0 control distance %.2e (must fail)",
             covered ? "yes" : "no", d, bad));
}

// 6. Index bookkeeping.
void stable_equivalence() {
    auto fam = fold_family();
    auto ch = stable_equivalence_evidence(fam, chekanov(fam, identity_genfam()), 1e-6);
    auto back = dagger(dagger(fam, +1), -1);
    auto inv = stable_equivalence_evidence(fam, back, 1e-6);
    bool ok1 = ch.index_constant && ch.index_offset == 1 && ch.hausdorff_distance < 1e-6;
    bool ok2 = inv.index_constant && inv.index_offset == 0 && inv.hausdorff_distance < 1e-6;
    line(6, ok1 && ok2,
         fmt("Ch_Id index offset %s (want 1); dagger then inverse dagger index offset %s (want 0), distance %.2e "
             "(< 1e-6)",
             ch.index_offset_text().c_str(), inv.index_offset_text().c_str(), inv.hausdorff_distance));
}

// 7. Compactly supported defect.
void compact_defect() {
    auto W = Symplectomorphism::quarter_turn();
    auto sg = make_W_genfam();
    auto f = parse_function("q^2/2", {"q"});
    auto eps = parse_function("0.1*cutoff(q,0.2,0.5)", {"q"});
    auto [P, rep] = compactify_defect(GeneratingFamily::function("q", {-1, 1}, f + eps), f, eps, sg, W);
    auto fold = fold_family();
    auto eoff = parse_function("0.05*cutoff(q+0.6,0.1,0.3)*cutoff(xi,0.1,0.3)", {"q", "xi"});
    auto famoff = fold.with_F((fold.F() + eoff).with_variables(fold.total_variables()));
    auto [P2, rep2] = compactify_defect(famoff, fold.F(), eoff, sg, W);
    bool boxed = true;
    std::string box;
    for (const auto* r : {&rep, &rep2}) {
        boxed = boxed && r->compact && !r->empty && r->box.size() == r->box_vars.size();
        for (const auto& b : r->box) boxed = boxed && std::isfinite(b.lo) && std::isfinite(b.hi);
    }
    for (std::size_t i = 0; i < rep.box.size(); ++i)
        box += fmt("%s%s in [%.2f, %.2f]", i ? ", " : "", rep.box_vars[i].c_str(), rep.box[i].lo, rep.box[i].hi);
    double d = std::max(rep.match.hausdorff_distance, rep2.match.hausdorff_distance);
    line(7, boxed && d < 1e-6, fmt("compact defect: box {%s}, bounded: %s, worst distance %.2e (< 1e-6)", box.c_str(),
                                   boxed ? "yes" : "no", d));
}

// 8. Graph validation.
void graphs() {
    bool tri = validate_graph(ArborealGraph::tripod()).valid();
    bool c3 = validate_graph(ArborealGraph::cycle(3)).valid();
    ArborealGraph four;
    for (const char* v : {"c", "a", "b", "d", "e"}) four.add_vertex(v);
    for (const char* v : {"a", "b", "d", "e"}) four.add_edge(std::string("e") + v, "c", v);
    ArborealGraph noleg;
    for (const char* v : {"c", "a", "b", "l"}) noleg.add_vertex(v);
    for (const char* v : {"a", "b", "l"}) noleg.add_edge(std::string("e") + v, "c", v);
    bool r4 = validate_graph(four).has("valence");
    bool rl = validate_graph(noleg).has("missing leg");
    line(8, tri && c3 && r4 && rl,
         fmt("graphs: tripod %s, C3 %s; 4-valent rejected with 'valence': %s; no leg rejected with 'missing leg': %s",
             tri ? "valid" : "invalid", c3 ? "valid" : "invalid", r4 ? "yes" : "no", rl ? "yes" : "no"));
}

// 9. Lifting a chart-local isotopy.
struct LiftOutcome {
    bool consistent = false;
    double distance = 0;
    std::size_t steps = 0;
};

LiftOutcome lift_case(const ArborealGraph& g, const std::string& chart) {
    auto atlas = build_atlas(g);
    auto gf = zero_global_family(atlas);
    IsotopyEntry e;
    e.chart = chart;
    e.H = parse_function("0.03*cutoff(q,0.2,1.5)*cutoff(p,0.05,0.95)", {"t", "q", "p"});
    e.support = {{-1.5, 1.5}, {-0.95, 0.95}};
    LiftOptions opts;
    opts.min_fragments = 3;
    LiftReport rep;
    auto lifted = lift_isotopy(gf, atlas, AdmissibleIsotopy{{e}}, opts, &rep);
    LiftOutcome out;
    out.steps = rep.steps.size();
    out.consistent = check_global_consistency(lifted, atlas, 3e-4).consistent();
    assemble_global_curve(lifted, atlas, 3e-4);
    // Oracle: the whole flow, conjugated into the neighbor charts its support reaches.
    auto S = entry_map(e);
    for (const auto& c : atlas.charts()) {
        auto want = critical_locus(gf.at(c.vertex));
        if (c.vertex == chart) {
            want = transform_curve(S, want);
        } else if (atlas.edge_between(chart, c.vertex)) {
            want = transform_curve(S.conjugate_by(atlas.transition_map(chart, c.vertex)), want);
        }
        MatchOptions o;
        o.window = Region::box({c.domain.lo + 0.25, c.domain.hi - 0.25}, {-1e300, 1e300});
        auto got = critical_locus(lifted.at(c.vertex));
        if (got.empty() && want.empty()) continue;
        out.distance = std::max(out.distance, curves_match(got, want, 1.0, PotentialMode::Ignore, o).hausdorff_distance);
    }
    return out;
}

void lifting() {
    auto t0 = Clock::now();
    auto c3 = lift_case(ArborealGraph::cycle(3), "v0");
    auto tri = lift_case(ArborealGraph::tripod(), "c");
    double dt = seconds_since(t0);
    bool ok = c3.consistent && tri.consistent && c3.steps >= 3 && tri.steps >= 3 && c3.distance < 3e-4 &&
              tri.distance < 3e-4 && dt < 120;
    line(9, ok,
         fmt("lift: C3 %zu steps %s distance %.2e; tripod %zu steps %s distance %.2e (< 3e-4); %.1f s (< 120 s)",
             c3.steps, c3.consistent ? "consistent" : "INCONSISTENT", c3.distance, tri.steps,
             tri.consistent ? "consistent" : "INCONSISTENT", tri.distance, dt));
}

// 10. Determinism of the CSV output.
void determinism() {
    auto once = [] {
        std::string s = io::curve_csv(critical_locus(fold_family()));
        auto H = parse_function("0.01*cutoff(q,0.3,1.5)*cutoff(p,0.3,1.5)*(q+p)", {"t", "q", "p"});
        auto S = Symplectomorphism::flow(H, 0, 1, Box2{{-1.5, 1.5}, {-1.5, 1.5}});
        auto sg = genfam_of_near_identity(S, Box2{{-1.6, 1.6}, {-1.6, 1.6}});
        s += io::curve_csv(critical_locus(chekanov(fold_family(), sg)));
        s += io::curve_csv(critical_locus(dagger(graph_family("0.5*cutoff(q, 0.3, 1)", {-3, 3}))));
        return s;
    };
    auto a = once(), b = once();
    line(10, a == b && !a.empty(), fmt("determinism: two runs, %zu CSV bytes, identical: %s", a.size(), a == b ? "yes" : "no"));
}

}  // namespace

int main() {
    run(1, derivatives);
    run(2, varpi_checks);
    run(3, chekanov_transport);
    run(4, dagger_property);
    run(5, localization);
    run(6, stable_equivalence);
    run(7, compact_defect);
    run(8, graphs);
    run(9, lifting);
    run(10, determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures ? 1 : 0;
}
