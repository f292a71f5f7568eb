#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gfc/io.hpp"
#include "gfc/operators.hpp"

using namespace gfc;

namespace {

const char* kFold = R"(# fold
[family]
name = fold
base = q
domain = -2 2
fiber = x
fiber_box = -3 3
F = x^3/3 - q*x
)";

double max_diff(const SmoothFunction& a, const SmoothFunction& b, const std::vector<std::string>& vars, double r) {
    double worst = 0;
    for (int i = 0; i < 200; ++i) {
        std::map<std::string, double> pt;
        for (std::size_t k = 0; k < vars.size(); ++k) pt[vars[k]] = r * std::sin(1.3 * i + 0.7 * k + 0.1 * i * k);
        worst = std::max(worst, std::fabs(a.evaluate(pt) - b.evaluate(pt)));
    }
    return worst;
}

std::filesystem::path scratch() {
    auto d = std::filesystem::temp_directory_path() / "gfc_test_io";
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("family file roundtrip") {
    auto fam = io::parse_family(kFold);
    CHECK(fam.name() == "fold");
    CHECK(fam.fiber_vars() == std::vector<std::string>{"x"});
    CHECK(fam.base_domain().lo == -2);
    auto back = io::parse_family(io::format_family(fam));
    CHECK(io::format_family(back) == io::format_family(fam));
    CHECK(max_diff(fam.F(), back.F(), {"q", "x"}, 2) == 0.0);

    auto c = critical_locus(fam);
    for (const auto& b : c.branches)
        for (const auto& s : b.samples) CHECK(std::fabs(s.p * s.p - s.q) < 1e-8);
}

TEST_CASE("constraints and fiberless families") {
    auto fam = io::parse_family("[family]\ndomain = 0 1\nfiber =\nfiber_box =\nF = q^2/2\n"
                                "constraint = q + 1 in 0.5 1.5\n");
    CHECK(fam.fiber_dim() == 0);
    REQUIRE(fam.constraints().size() == 1);
    CHECK(fam.constraints()[0].range.hi == 1.5);
    auto back = io::parse_family(io::format_family(fam));
    CHECK(back.constraints().size() == 1);
}

TEST_CASE("grid kernels survive a roundtrip") {
    std::string text = R"([family]
domain = -1 1
fiber = x
fiber_box = -2 2
F = x^2/2 + bump(q, x)

[grid bump]
axis = -1 1 3
axis = -2 2 3
outside = zero
values = 0 0 0
  0 1 0
  0 0 0
)";
    auto fam = io::parse_family(text);
    CHECK(fam.F().evaluate(std::map<std::string, double>{{"q", 0}, {"x", 0}}) == doctest::Approx(1.0));
    auto out = io::format_family(fam);
    CHECK(out.find("[grid bump]") != std::string::npos);
    CHECK(out.find("dxy =") != std::string::npos);
    auto back = io::parse_family(out);
    CHECK(max_diff(fam.F(), back.F(), {"q", "x"}, 0.99) == 0.0);

    // A Chekanov output carries a near-identity grid generating function.
    auto H = parse_function("0.01*cutoff(q,0.3,1.5)*cutoff(p,0.3,1.5)*(q+p)", {"t", "q", "p"});
    Box2 box{{-1.6, 1.6}, {-1.6, 1.6}};
    auto S = Symplectomorphism::flow(H, 0, 1, box);
    auto sg = genfam_of_near_identity(S, box);
    auto ch = chekanov(GeneratingFamily::function("q", {-1, 1}, parse_function("q^2/2", {"q"})), sg);
    auto ch_back = io::parse_family(io::format_family(ch));
    CHECK(max_diff(ch.F(), ch_back.F(), ch.total_variables(), 1.0) == 0.0);
}

TEST_CASE("family file errors carry line numbers") {
    auto msg = [](const std::string& text) {
        try {
            io::parse_family(text, "in.gf");
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg("[family]\ndomain = 1 0\nF = q\n").find("in.gf:2") == 0);
    CHECK(msg("[family]\ndomain = 0 1\nF = q + y\n").find("in.gf:3") == 0);
    CHECK(msg("[family]\ndomain = 0 1\nfiber = x\nF = q\n").find("fiber_box") != std::string::npos);
    CHECK(msg("[family]\nF = q\n").find("missing domain") != std::string::npos);
    CHECK(msg("[oops]\n").find("unknown section") != std::string::npos);
    CHECK(msg("[family]\ndomain = 0 1\nF = g(q)\n[grid g]\naxis = 0 1 3\nvalues = 1 2\n").find("expected 3") !=
          std::string::npos);
}

TEST_CASE("graph files") {
    auto g = io::parse_graph(R"(
vertex c
vertex a
vertex b
vertex l
edge ea c a
edge eb c b
edge el c l
cyclic c el ea eb
leg c el
)");
    CHECK(validate_graph(g).valid());
    auto back = io::parse_graph(io::format_graph(g));
    CHECK(io::format_graph(back) == io::format_graph(g));
    CHECK(back.vertex("c").leg == std::optional<std::string>("el"));
    CHECK_THROWS_AS(io::parse_graph("vertex a\nedge e a\n"), Error);
    CHECK_THROWS_AS(io::parse_graph("leg nowhere e\n"), Error);
}

TEST_CASE("global family files") {
    auto dir = scratch();
    auto g = ArborealGraph::cycle(3);
    io::write_text((dir / "c3.ag").string(), io::format_graph(g));
    auto gf = zero_global_family(build_atlas(g));
    io::write_global_family((dir / "zero.gfam").string(), "c3.ag", gf);
    auto back = io::read_global_family((dir / "zero.gfam").string());
    CHECK(back.graph_path == "c3.ag");
    CHECK(back.family.families.size() == 3);
    for (const auto& [v, f] : gf.families) CHECK(io::format_family(back.family.at(v)) == io::format_family(f));

    io::write_text((dir / "bad.gfam").string(), "graph c3.ag\nvertex v0 zero.v0.gf\n");
    CHECK_THROWS_AS(io::read_global_family((dir / "bad.gfam").string()), Error);
}

TEST_CASE("isotopy files") {
    auto iso = io::parse_isotopy("# push\nstep v0 0 1 -1.5 1.5 -0.95 0.95 0.03*cutoff(q,0.2,1.5)*cutoff(p,0.05,0.95)\n");
    REQUIRE(iso.entries.size() == 1);
    CHECK(iso.entries[0].chart == "v0");
    CHECK(iso.entries[0].support.p.hi == 0.95);
    CHECK(iso.entries[0].H.evaluate(std::map<std::string, double>{{"t", 0}, {"q", 0}, {"p", 0}}) ==
          doctest::Approx(0.03));
    CHECK_THROWS_AS(io::parse_isotopy("step v0 0 1 -1 1 -1\n"), Error);
    CHECK_THROWS_AS(io::parse_isotopy("step v0 0 1 -1 1 -1 1 z*q\n"), Error);
}

TEST_CASE("CSV is deterministic and parses back") {
    auto fam = io::parse_family(kFold);
    auto a = io::curve_csv(critical_locus(fam));
    auto b = io::curve_csv(critical_locus(io::parse_family(kFold)));
    CHECK(a == b);
    CHECK(a.rfind("branch,q,p,f,index,x\n", 0) == 0);
    auto c = io::parse_curve_csv(a);
    CHECK(io::curve_csv(c) == a);
}

TEST_CASE("SVG plot") {
    auto fam = io::parse_family(kFold);
    auto svg = io::curve_svg({{"fold", critical_locus(fam)}}, Region::perp());
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("stroke-dasharray") != std::string::npos);
    CHECK(svg == io::curve_svg({{"fold", critical_locus(fam)}}, Region::perp()));
}
