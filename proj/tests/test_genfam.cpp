#include <doctest.h>

#include <cmath>

#include "gfc/genfam.hpp"

using namespace gfc;

namespace {

GeneratingFamily fold_family(Interval dom = {-1, 1}) {
    return GeneratingFamily("q", dom, {"xi"}, {{-2, 2}}, parse_function("xi^3/3 - q*xi", {"q", "xi"}));
}

// Largest distance from each sample to the analytic set p^2 = q, p in [-sqrt(1), ...].
double distance_to_parabola(const SampledCurve& c) {
    double worst = 0;
    for (const auto& b : c.branches)
        for (const auto& s : b.samples) worst = std::max(worst, std::fabs(s.p * s.p - s.q));
    return worst;
}

SampledCurve line_curve(double slope, int n) {
    SampledCurve c;
    Branch b;
    for (int i = 0; i <= n; ++i) {
        CurveSample s;
        s.q = -1.0 + 2.0 * i / n;
        s.p = slope * s.q;
        s.f = slope * s.q * s.q / 2;
        s.s = s.q * std::sqrt(1 + slope * slope);
        s.dq = 1 / std::sqrt(1 + slope * slope);
        s.dp = slope * s.dq;
        b.samples.push_back(s);
    }
    c.branches.push_back(b);
    return c;
}

}  // namespace

TEST_CASE("zero section and graphs of df") {
    auto zero = GeneratingFamily::function("q", {-1, 1}, SmoothFunction::constant(0.0, {"q"}));
    auto c = critical_locus(zero);
    REQUIRE(c.branches.size() == 1);
    CHECK(c.branches[0].samples.front().q == -1.0);
    CHECK(c.branches[0].samples.back().q == 1.0);
    for (const auto& s : c.branches[0].samples) {
        CHECK(s.p == 0.0);
        CHECK(s.f == 0.0);
        CHECK(s.index == 0);
    }
    auto quad = GeneratingFamily::function("q", {-1, 1}, parse_function("q^2/2", {"q"}));
    auto cq = critical_locus(quad);
    REQUIRE(cq.branches.size() == 1);
    for (const auto& s : cq.branches[0].samples) {
        CHECK(std::fabs(s.p - s.q) <= 1e-12);
        CHECK(std::fabs(s.f - s.q * s.q / 2) <= 1e-12);
    }
    CHECK(exactness_defect(cq) <= 0.0);
}

TEST_CASE("fold family traces one branch through the fold") {
    auto fam = fold_family();
    auto c = critical_locus(fam);
    REQUIRE(c.branches.size() == 1);
    CHECK(c.warnings.empty());
    double maxres = 0;
    int folds = 0;
    const auto& s = c.branches[0].samples;
    for (const auto& x : s) maxres = std::max(maxres, std::fabs(x.fiber[0] * x.fiber[0] - x.q));
    CHECK(maxres <= 1e-10);
    CHECK(distance_to_parabola(c) <= 1e-10);
    for (std::size_t i = 1; i < s.size(); ++i)
        if (s[i].index != s[i - 1].index) {
            ++folds;
            CHECK(std::abs(s[i].index - s[i - 1].index) == 1);
        }
    CHECK(folds == 1);
    CHECK(exactness_defect(c) <= 0.0);
    // Endpoints land on the window boundary q = 1 with xi = +-1.
    CHECK(std::fabs(s.front().q - 1.0) < 1e-14);
    CHECK(std::fabs(s.back().q - 1.0) < 1e-14);

    // Brute-force oracle: at 50 base points solve xi^2 = q by scanning a fine xi grid then bisecting.
    for (int k = 0; k < 50; ++k) {
        double q = 0.02 + 0.98 * k / 49.0;
        std::vector<double> roots;
        auto g = [&](double xi) { return xi * xi - q; };
        const int M = 4000;
        for (int j = 0; j < M; ++j) {
            double a = -2 + 4.0 * j / M, b = -2 + 4.0 * (j + 1) / M;
            if (g(a) * g(b) <= 0) {
                for (int it = 0; it < 100; ++it) {
                    double m = 0.5 * (a + b);
                    (g(a) * g(m) <= 0 ? b : a) = m;
                }
                roots.push_back(0.5 * (a + b));
            }
        }
        REQUIRE(roots.size() == 2);
        for (double xi : roots) {
            // Curve point (q, p) with p = F_q = -xi must be on the traced curve.
            SampledCurve pt;
            Branch b;
            CurveSample cs;
            cs.q = q;
            cs.p = -xi;
            b.samples.push_back(cs);
            pt.branches.push_back(b);
            pt.has_tangents = false;
            auto r = curves_match(pt, c, 1e-9, PotentialMode::Ignore);
            CHECK(r.hausdorff_distance < 1e5);  // symmetric part dominated by other points
            // One-sided distance: nearest point of c to this root.
            MatchOptions o;
            o.window = Region::box({q - 1e-12, q + 1e-12}, {-xi - 1e-12, -xi + 1e-12});
            auto one = curves_match(pt, c, 1e-9, PotentialMode::Ignore, o);
            CHECK(one.hausdorff_distance <= 1e-9);
        }
    }
}

TEST_CASE("fiber Morse index") {
    auto fam = fold_family();
    CHECK(fiber_morse_index(fam, 1.0, {1.0}).index == 0);
    CHECK(fiber_morse_index(fam, 1.0, {-1.0}).index == 1);
    CHECK(fiber_morse_index(fam, 0.0, {0.0}).degenerate);
    auto g = GeneratingFamily::function("q", {-1, 1}, parse_function("q^2", {"q"}));
    CHECK(fiber_morse_index(g, 0.3, {}).index == 0);
    // Stabilizing by -v^2 shifts every index by one.
    auto st = GeneratingFamily("q", {-1, 1}, {"xi", "v"}, {{-2, 2}, {-1, 1}},
                               parse_function("xi^3/3 - q*xi - v^2", {"q", "xi", "v"}));
    CHECK(fiber_morse_index(st, 1.0, {1.0, 0.0}).index == 1);
    CHECK(fiber_morse_index(st, 1.0, {-1.0, 0.0}).index == 2);
    auto a = critical_locus(fam);
    auto b = critical_locus(st);
    auto r = curves_match(a, b, 1e-9);
    CHECK(r.matched);
    REQUIRE(r.index_offset);
    CHECK(*r.index_offset == 1);
}

TEST_CASE("curves_match reports") {
    auto fam = fold_family();
    auto c = critical_locus(fam);
    auto self = curves_match(c, c, 1e-12, PotentialMode::Exact);
    CHECK(self.hausdorff_distance == 0.0);
    CHECK(self.matched);
    REQUIRE(self.index_offset);
    CHECK(*self.index_offset == 0);

    TraceConfig fine = TraceConfig::defaults();
    fine.max_image_step = 0.01;
    fine.max_step = 0.025;
    auto d = critical_locus(fam, fine);
    CHECK(d.num_samples() > c.num_samples());
    auto r = curves_match(c, d, 1e-9);
    CHECK(r.hausdorff_distance < 0.01);
    CHECK(r.matched);

    auto up = line_curve(1.0, 100), down = line_curve(-1.0, 100);
    auto m = curves_match(up, down, 1e-3, PotentialMode::Ignore);
    CHECK_FALSE(m.matched);
    CHECK(m.hausdorff_distance >= std::sqrt(2.0) * 0.5 * 2.0 - 1e-9);
    CHECK(m.hausdorff_distance == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));

    SampledCurve empty;
    CHECK(curves_match(empty, empty, 1e-9).matched);
    CHECK_FALSE(curves_match(empty, up, 1e-9).matched);
}

TEST_CASE("region membership") {
    auto zero = critical_locus(GeneratingFamily::function("q", {-2, 2}, SmoothFunction::constant(0, {"q"})));
    CHECK(bounded_in_region(zero, Region::perp()));
    auto line = critical_locus(GeneratingFamily::function("q", {-2, 2}, parse_function("q^2/2", {"q"})));
    CHECK_FALSE(bounded_in_region(line, Region::perp()));
    auto minus1 = critical_locus(GeneratingFamily::function("q", {-2, 2}, parse_function("-q", {"q"})));
    CHECK(bounded_in_region(minus1, Region::perp()));
    Region perp = Region::perp(), alt = Region::perp(true);
    CHECK(perp.contains(0.5, 5.0));
    CHECK_FALSE(perp.contains(1.5, 5.0));
    CHECK(alt.contains(1.5, 5.0));
    CHECK_FALSE(alt.contains(2.5, 5.0));
    CHECK_FALSE(perp.contains(0.0, -1.0001));
    CHECK(Region::band_region(1).contains(100, -1));
    CHECK_FALSE(Region::half_plane_positive().contains(0, 0));
}

TEST_CASE("restriction windows the locus") {
    auto fam = fold_family({-2, 2});
    fam = GeneratingFamily("q", {-2, 2}, {"xi"}, {{-3, 3}}, fam.F());
    auto sub = restrict_family(fam, {0, 1});
    CHECK(sub.base_domain().lo == 0.0);
    CHECK(sub.base_domain().hi == 1.0);
    CHECK(expr::equal(sub.F().tree(), fam.F().tree()));
    auto whole = critical_locus(fam);
    auto part = critical_locus(sub);
    MatchOptions o;
    o.window = Region::box({0, 1}, {-10, 10});
    auto r = curves_match(part, whole, 1e-9, PotentialMode::Exact, o);
    CHECK_MESSAGE(r.matched, r.hausdorff_distance << " " << r.potential_spread_per_branch[0]);
    CHECK_THROWS_AS(restrict_family(fam, {1, 1}), Error);
    CHECK_THROWS_AS(restrict_family(fam, {1, 3}), Error);
}

TEST_CASE("closed loops and transversality") {
    // Critical locus q^2 + xi^2 = 1 of F = xi^3/3 + (q^2 - 1) xi is a closed circle.
    auto fam = GeneratingFamily("q", {-2, 2}, {"xi"}, {{-2, 2}}, parse_function("xi^3/3 + (q^2 - 1)*xi", {"q", "xi"}));
    auto c = critical_locus(fam);
    REQUIRE(c.branches.size() == 1);
    CHECK(c.branches[0].closed);
    CHECK(exactness_defect(c) <= 0.0);
    auto bad = GeneratingFamily("q", {-1, 1}, {"xi"}, {{-1, 1}}, parse_function("xi^2*q^2", {"q", "xi"}));
    CHECK_THROWS_AS(critical_locus(bad), Error);
}
