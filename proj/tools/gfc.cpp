// gfc: command-line front end for tracing, transforming and verifying
// generating families.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "gfc/io.hpp"
#include "gfc/lift.hpp"
#include "gfc/operators.hpp"

using namespace gfc;

namespace {

struct Failed {};  // verification failed; exit code 1

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") std::cout << text;
    else io::write_text(out, text);
}

void emit_family(const GeneratingFamily& fam, const std::string& out) { emit(io::format_family(fam), out); }

double default_tol() {
    // GFC_TOL also scales the tracer's cubic tolerance; verification uses it as a floor.
    if (const char* env = std::getenv("GFC_TOL")) {
        char* end = nullptr;
        double v = std::strtod(env, &end);
        if (end != env && v > 0) return std::max(1e-6, v);
    }
    return 1e-6;
}

// Symplectomorphism choice shared by op chekanov, op localize and verify.
struct SympArgs {
    std::string kind = "id";
    std::string H;
    double t0 = 0, t1 = 1;
    std::vector<double> box{-1.6, 1.6, -1.6, 1.6};

    void add(CLI::App* app) {
        app->add_option("--symp", kind, "id, W, Winv or flow")->check(CLI::IsMember({"id", "W", "Winv", "flow"}));
        app->add_option("--H", H, "flow Hamiltonian H(t,q,p)");
        app->add_option("--t0", t0);
        app->add_option("--t1", t1);
        app->add_option("--box", box, "flow support qlo qhi plo phi")->expected(4);
    }

    std::pair<Symplectomorphism, SympGenFam> build() const {
        if (kind == "W") return {Symplectomorphism::quarter_turn(), make_W_genfam(false)};
        if (kind == "Winv") return {Symplectomorphism::quarter_turn_inverse(), make_W_genfam(true)};
        if (kind == "flow") {
            if (H.empty()) throw Error("--symp flow needs --H");
            Box2 b{{box[0], box[1]}, {box[2], box[3]}};
            auto S = Symplectomorphism::flow(parse_function(H, {"t", "q", "p"}), t0, t1, b);
            return {S, genfam_of_near_identity(S, b)};
        }
        SympGenFam sg;
        sg.G = SmoothFunction::constant(0.0, {"q1", "q2"});
        sg.certified_residual = 0.0;
        return {Symplectomorphism::identity(), sg};
    }
};

struct LocalizeArgs {
    std::string f, eps, phi;
    void add(CLI::App* app) {
        app->add_option("--f", f, "part of F kept everywhere")->required();
        app->add_option("--eps", eps, "part of F that gets localized")->required();
        app->add_option("--phi", phi, "cutoff in q")->required();
    }
    SmoothFunction fn(const std::string& s, const GeneratingFamily& fam) const {
        return parse_function(s, fam.total_variables());
    }
};

int report(const std::string& what, double distance, double tol, std::optional<int> offset = {},
           std::optional<int> want_offset = {}) {
    bool ok = distance < tol && (!want_offset || offset == want_offset);
    std::printf("%s: %s distance %.3e (tol %.1e)", what.c_str(), ok ? "pass" : "FAIL", distance, tol);
    if (offset) std::printf(" index offset %d", *offset);
    else if (want_offset) std::printf(" index offset not constant");
    std::printf("\n");
    if (!ok) throw Failed{};
    return 0;
}

// A flow moves curve ends across the fixed base window; compare away from them.
MatchOptions moved_window(const SympArgs& symp, const GeneratingFamily& fam) {
    MatchOptions o;
    if (symp.kind == "flow") {
        const auto& d = fam.base_domain();
        o.window = Region::box({d.lo + 0.25, d.hi - 0.25}, {-1e300, 1e300});
    }
    return o;
}

// `target` as written in a file at `file`: relative to the file's directory.
std::string relative_to(const std::filesystem::path& target, const std::string& file) {
    auto dir = std::filesystem::absolute(std::filesystem::path(file)).parent_path();
    return std::filesystem::absolute(target).lexically_normal().lexically_relative(dir).generic_string();
}

Region region_named(const std::string& r) {
    if (r == "perp") return Region::perp();
    if (r == "band") return Region::band_region(1.0);
    if (r == "univalent") return Region::univalent();
    if (r == "trivalent") return Region::trivalent();
    if (r == "half") return Region::half_plane_positive();
    return Region::plane();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generating families of exact curves: trace, transform, verify, lift."};
    app.require_subcommand(1);
    TraceConfig cfg = TraceConfig::defaults();

    // trace
    std::string family, out;
    int grid = 0;
    auto* trace = app.add_subcommand("trace", "trace the critical locus to CSV");
    trace->add_option("family", family, ".gf file")->required();
    trace->add_option("--grid", grid, "at least this many samples across the base domain");
    trace->add_option("--out", out, "CSV file (default stdout)");

    // op
    auto* op = app.add_subcommand("op", "apply an operator; writes a .gf");
    op->require_subcommand(1);
    op->fallthrough();
    op->add_option("--out", out, ".gf file (default stdout)");
    bool cw = false, inverse = false;
    auto* op_rotate = op->add_subcommand("rotate", "F(u,xi) - uq (generates W of the curve)");
    op_rotate->add_option("family", family)->required();
    op_rotate->add_flag("--cw", cw, "F(u,xi) + uq instead");
    auto* op_dagger = op->add_subcommand("dagger", "rotation with the cutoff localization");
    op_dagger->add_option("family", family)->required();
    op_dagger->add_flag("--inverse", inverse, "use the + uq sign");
    SympArgs symp;
    auto* op_chekanov = op->add_subcommand("chekanov", "transport by a symplectomorphism");
    op_chekanov->add_option("family", family)->required();
    symp.add(op_chekanov);
    LocalizeArgs loc;
    auto* op_localize = op->add_subcommand("localize", "Chekanov with the eps part cut off by phi");
    op_localize->add_option("family", family)->required();
    loc.add(op_localize);
    symp.add(op_localize);
    double lo = 0, hi = 0;
    auto* op_restrict = op->add_subcommand("restrict", "restrict the base domain");
    op_restrict->add_option("family", family)->required();
    op_restrict->add_option("--lo", lo)->required();
    op_restrict->add_option("--hi", hi)->required();
    double reach = kChartReach;
    auto* op_leg = op->add_subcommand("leg", "leg restriction (dagger read along the leg)");
    op_leg->add_option("family", family)->required();
    op_leg->add_option("--reach", reach);
    std::string other;
    std::vector<double> K;
    std::vector<std::string> stab_vars;
    std::string form = "positive";
    bool leg = false;
    double vertex = 0.0;
    int edge_side = 1;
    auto* op_glue = op->add_subcommand("glue", "splice two families over an interval K");
    op_glue->add_option("family", family, "side A")->required();
    op_glue->add_option("other", other, "side B")->required();
    op_glue->add_option("--K", K, "lo hi")->expected(2)->required();
    op_glue->add_option("--stab", stab_vars, "fresh stabilizer variables")->required();
    op_glue->add_flag("--leg", leg, "leg case");
    op_glue->add_option("--vertex", vertex);
    op_glue->add_option("--edge-side", edge_side)->check(CLI::IsMember({-1, 1}));
    auto* op_stab = op->add_subcommand("stabilize", "add a nondegenerate quadratic form in fresh variables");
    op_stab->add_option("family", family)->required();
    op_stab->add_option("--vars", stab_vars)->required();
    op_stab->add_option("--form", form)->check(CLI::IsMember({"positive", "hyperbolic"}));

    // verify
    double tol = default_tol();
    auto* verify = app.add_subcommand("verify", "check an operator against its curve-level oracle");
    verify->require_subcommand(1);
    verify->fallthrough();
    verify->add_option("--tol", tol, "Hausdorff tolerance (default max(1e-6, GFC_TOL); 1e-5 for chekanov)");
    auto* v_turn = verify->add_subcommand("turn", "dagger curve equals W(curve)");
    v_turn->add_option("family", family)->required();
    auto* v_chek = verify->add_subcommand("chekanov", "Chekanov curve equals S(curve)");
    v_chek->add_option("family", family)->required();
    symp.add(v_chek);
    auto* v_loc = verify->add_subcommand("localization", "localized curve equals S(curve)");
    v_loc->add_option("family", family)->required();
    loc.add(v_loc);
    symp.add(v_loc);
    auto* v_inv = verify->add_subcommand("stable-inverse", "(dagger then inverse dagger) against the original");
    v_inv->add_option("family", family)->required();
    std::string gfam;
    auto* v_cons = verify->add_subcommand("consistency", "edge agreement of a global family");
    v_cons->add_option("global", gfam, ".gfam file")->required();

    // graph
    std::string graph;
    auto* g_cmd = app.add_subcommand("graph", "arboreal graphs");
    g_cmd->require_subcommand(1);
    auto* g_validate = g_cmd->add_subcommand("validate", "check the graph rules");
    g_validate->add_option("graph", graph)->required();
    auto* g_atlas = g_cmd->add_subcommand("atlas", "print charts and transitions");
    g_atlas->add_option("graph", graph)->required();
    auto* g_zero = g_cmd->add_subcommand("zero", "write the zero global family");
    g_zero->add_option("graph", graph)->required();
    g_zero->add_option("--out", out, ".gfam file")->required();

    // lift
    std::string iso, report_path;
    LiftOptions lopts;
    auto* lift = app.add_subcommand("lift", "lift an admissible isotopy to a global family");
    lift->add_option("global", gfam)->required();
    lift->add_option("isotopy", iso, ".iso file")->required();
    lift->add_option("--out", out, "lifted .gfam")->required();
    lift->add_option("--report", report_path, "step report (default stdout)");
    lift->add_option("--threshold", lopts.threshold, "C1 defect per step");
    lift->add_option("--fragments", lopts.min_fragments, "minimum steps per entry");

    // plot
    std::vector<std::string> csvs;
    std::string region = "none";
    auto* plot = app.add_subcommand("plot", "SVG of traced curves");
    plot->add_option("csv", csvs)->required();
    plot->add_option("--out", out, "SVG file (default stdout)");
    plot->add_option("--region", region)->check(CLI::IsMember({"none", "perp", "band", "univalent", "trivalent", "half"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (trace->parsed()) {
            auto fam = io::read_family(family);
            if (grid > 1) cfg.max_image_step = std::min(cfg.max_image_step, fam.base_domain().length() / (grid - 1));
            auto c = critical_locus(fam, cfg);
            for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
            emit(io::curve_csv(c), out);
        } else if (op->parsed()) {
            auto fam = io::read_family(family);
            GeneratingFamily res;
            if (op_rotate->parsed()) {
                res = rotate(fam, cw ? Turn::Cw : Turn::Ccw);
            } else if (op_dagger->parsed()) {
                res = dagger(fam, inverse ? -1 : +1);
            } else if (op_chekanov->parsed()) {
                res = chekanov(fam, symp.build().second);
            } else if (op_localize->parsed()) {
                res = localize(fam, loc.fn(loc.f, fam), loc.fn(loc.eps, fam), parse_function(loc.phi, {fam.base_var()}),
                               symp.build().second);
            } else if (op_restrict->parsed()) {
                res = restrict_family(fam, {lo, hi});
            } else if (op_leg->parsed()) {
                auto r = restrict_to_leg(fam, reach);
                for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
                res = r.family;
            } else if (op_glue->parsed()) {
                GlueOptions go;
                go.vertex = vertex;
                go.edge_side = edge_side;
                res = glue(fam, io::read_family(other), {K[0], K[1]}, leg ? GlueCase::Leg : GlueCase::NonLeg,
                           QuadraticStabilizer::positive(stab_vars), go);
            } else if (op_stab->parsed()) {
                if (form == "hyperbolic") {
                    if (stab_vars.size() != 2) throw Error("--form hyperbolic needs exactly two --vars");
                    res = stabilize(fam, QuadraticStabilizer::hyperbolic(stab_vars[0], stab_vars[1]));
                } else {
                    res = stabilize(fam, QuadraticStabilizer::positive(stab_vars));
                }
            }
            if (res.name().empty()) res.set_name(fam.name());
            emit_family(res, out);
        } else if (verify->parsed()) {
            if (v_cons->parsed()) {
                auto g = io::read_global_family(gfam);
                auto rep = check_global_consistency(g.family, build_atlas(g.graph), tol, cfg);
                std::cout << rep.text();
                std::printf("consistency: %s\n", rep.consistent() ? "pass" : "FAIL");
                if (!rep.consistent()) throw Failed{};
                return 0;
            }
            auto fam = io::read_family(family);
            auto base = critical_locus(fam, cfg);
            if (v_turn->parsed()) {
                auto got = critical_locus(dagger(fam), cfg);
                auto m = curves_match(got, transform_curve(Symplectomorphism::quarter_turn(), base), tol);
                return report("turn", m.hausdorff_distance, tol);
            }
            if (v_chek->parsed()) {
                // Transport through a grid generating function is pinned at 1e-5.
                if (verify->count("--tol") == 0) tol = std::max(tol, 1e-5);
                auto [S, sg] = symp.build();
                auto got = critical_locus(chekanov(fam, sg), cfg);
                auto m = curves_match(transform_curve(S, base), got, tol, PotentialMode::PerComponentOffset,
                                      moved_window(symp, fam));
                // A fixed index shift is only meaningful when S does not move folds.
                std::optional<int> want;
                if (symp.kind == "id") want = 1;
                return report("chekanov", m.hausdorff_distance, tol, m.index_offset, want);
            }
            if (v_loc->parsed()) {
                auto [S, sg] = symp.build();
                auto P = localize(fam, loc.fn(loc.f, fam), loc.fn(loc.eps, fam),
                                  parse_function(loc.phi, {fam.base_var()}), sg);
                auto m = curves_match(transform_curve(S, base), critical_locus(P, cfg), tol,
                                      PotentialMode::PerComponentOffset, moved_window(symp, fam));
                return report("localization", m.hausdorff_distance, tol);
            }
            if (v_inv->parsed()) {
                auto back = dagger(dagger(fam, +1), -1);
                auto m = stable_equivalence_evidence(fam, back, tol);
                return report("stable-inverse", m.hausdorff_distance, tol, m.index_offset, 0);
            }
        } else if (g_cmd->parsed()) {
            auto g = io::read_graph(graph);
            if (g_validate->parsed()) {
                auto rep = validate_graph(g);
                std::cout << rep.text();
                if (!rep.valid()) std::printf("invalid\n");
                if (!rep.valid()) throw Failed{};
            } else {
                auto atlas = build_atlas(g);
                if (g_atlas->parsed()) {
                    for (const auto& c : atlas.charts()) {
                        std::printf("chart %s valence %d domain [%g, %g]", c.vertex.c_str(), c.valence, c.domain.lo,
                                    c.domain.hi);
                        for (const auto& [e, s] : c.slots) std::printf(" %s:%s", e.c_str(), to_string(s).c_str());
                        std::printf("\n");
                    }
                    for (const auto& t : atlas.transitions())
                        std::printf("edge %s %s -> %s %s\n", t.edge.c_str(), t.a.c_str(), t.b.c_str(),
                                    to_string(t.kind).c_str());
                } else {
                    io::write_global_family(out, relative_to(graph, out), zero_global_family(atlas));
                }
            }
        } else if (lift->parsed()) {
            auto g = io::read_global_family(gfam);
            auto atlas = build_atlas(g.graph);
            lopts.trace = cfg;
            LiftReport rep;
            GlobalFamily lifted;
            try {
                lifted = lift_isotopy(g.family, atlas, io::read_isotopy(iso), lopts, &rep);
            } catch (const Error&) {
                if (!rep.steps.empty()) emit(rep.text(), report_path);
                throw;
            }
            emit(rep.text(), report_path);
            auto graph_file = std::filesystem::path(gfam).parent_path() / g.graph_path;
            io::write_global_family(out, relative_to(graph_file, out), lifted);
        } else if (plot->parsed()) {
            std::vector<io::PlotLayer> layers;
            for (const auto& c : csvs) layers.push_back({c, io::parse_curve_csv(io::read_text(c))});
            std::optional<Region> ov;
            if (region != "none") ov = region_named(region);
            emit(io::curve_svg(layers, ov), out);
        }
    } catch (const Failed&) {
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
