#include <doctest.h>

#include <cmath>
#include <random>

#include "gfc/operators.hpp"

using namespace gfc;

namespace {

GeneratingFamily fold_family(Interval dom = {-1, 1}) {
    return GeneratingFamily("q", dom, {"xi"}, {{-2, 2}}, parse_function("xi^3/3 - q*xi", {"q", "xi"}));
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

double distance(const SampledCurve& a, const SampledCurve& b) { return curves_match(a, b, 1.0).hausdorff_distance; }

// Signature of the symmetric 2x2 block [[a, b], [b, c]]: number of negative eigenvalues.
int negative_eigs(double a, double b, double c) {
    double tr = a + c, det = a * c - b * b;
    if (det < 0) return 1;
    return tr < 0 ? 2 : 0;
}

}  // namespace

TEST_CASE("stabilization") {
    auto F = graph_family("q^2/2");
    auto base = critical_locus(F);

    auto neg = stabilize(F, QuadraticStabilizer::from_matrix({"v"}, Eigen::MatrixXd::Constant(1, 1, -1.0)));
    CHECK(neg.fiber_vars() == std::vector<std::string>{"v"});
    auto cn = critical_locus(neg);
    CHECK(distance(cn, base) < 1e-9);
    for (const auto& b : cn.branches)
        for (const auto& s : b.samples) CHECK(s.index == 1);

    auto pos = stabilize(F, QuadraticStabilizer::positive({"v", "l"}));
    auto rp = curves_match(base, critical_locus(pos), 1e-9);
    CHECK(rp.matched);
    REQUIRE(rp.index_offset);
    CHECK(*rp.index_offset == 0);

    auto hyp = QuadraticStabilizer::hyperbolic("v", "t");
    CHECK(hyp.index == 1);
    auto rh = curves_match(critical_locus(fold_family()), critical_locus(stabilize(fold_family(), hyp)), 1e-9);
    CHECK(rh.matched);
    REQUIRE(rh.index_offset);
    CHECK(*rh.index_offset == 1);

    CHECK_THROWS_AS(stabilize(fold_family(), QuadraticStabilizer::positive({"xi"})), Error);
    CHECK_THROWS_AS(QuadraticStabilizer::from_matrix({"a"}, Eigen::MatrixXd::Zero(1, 1)), Error);
}

TEST_CASE("fresh names") {
    CHECK(fresh_name("v", {"q", "xi"}) == "v");
    CHECK(fresh_name("v", {"v", "v_1"}) == "v_2");
    auto taken = family_names(fold_family());
    CHECK(taken == std::set<std::string>{"q", "xi"});
}

TEST_CASE("Chekanov operator with the identity") {
    auto sg = identity_genfam();
    auto F = graph_family("q^2/2");
    auto P = chekanov(F, sg);
    CHECK(P.fiber_vars() == std::vector<std::string>{"v", "t"});
    // P = (q+v)^2/2 - v t
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int k = 0; k < 50; ++k) {
        double q = U(rng), v = U(rng), t = U(rng);
        CHECK(P.F().evaluate(std::vector<double>{q, v, t}) == doctest::Approx((q + v) * (q + v) / 2 - v * t).epsilon(1e-14));
    }
    // Critical points: v = 0, t = q, so p = q.
    auto c = critical_locus(P);
    for (const auto& b : c.branches)
        for (const auto& s : b.samples) {
            CHECK(std::fabs(s.fiber[0]) < 1e-10);
            CHECK(std::fabs(s.fiber[1] - s.q) < 1e-10);
            CHECK(std::fabs(s.p - s.q) < 1e-10);
        }
    for (const auto& fam : {F, fold_family(), graph_family("0.3*sin(3*q)")}) {
        auto r = stable_equivalence_evidence(fam, chekanov(fam, sg), 1e-6);
        CHECK(r.hausdorff_distance < 1e-6);
        REQUIRE(r.index_offset);
        CHECK(*r.index_offset == 1);
        CHECK(r.index_constant);
    }
    // Fiber names of the family are avoided.
    auto G = GeneratingFamily("q", {-1, 1}, {"v"}, {{-1, 1}}, parse_function("v^2 + q*v", {"q", "v"}));
    auto PG = chekanov(G, sg);
    CHECK(PG.fiber_vars() == std::vector<std::string>{"v", "v_1", "t"});
}

TEST_CASE("Chekanov operator transports the curve") {
    auto W = Symplectomorphism::quarter_turn();
    auto sg = make_W_genfam();
    for (const auto& fam : {fold_family(), graph_family("q^2/2"), graph_family("0.3*sin(3*q)")}) {
        auto oracle = transform_curve(W, critical_locus(fam));
        auto c = critical_locus(chekanov(fam, sg));
        CHECK(distance(c, oracle) < 1e-6);
    }
    // A near-identity flow.
    auto H = parse_function("0.01*cutoff(q,0.3,1.5)*cutoff(p,0.3,1.5)*(q+p)", {"t", "q", "p"});
    auto S = Symplectomorphism::flow(H, 0, 1, Box2{{-1.5, 1.5}, {-1.5, 1.5}});
    auto sgS = genfam_of_near_identity(S, Box2{{-1.6, 1.6}, {-1.6, 1.6}});
    auto fam = fold_family();
    auto oracle = transform_curve(S, critical_locus(fam));
    auto c = critical_locus(chekanov(fam, sgS));
    // S moves the ends of the curve across q = +-1, so compare away from the window edge.
    MatchOptions inner{.window = Region::box({-0.9, 0.9}, {-10, 10})};
    CHECK(curves_match(c, oracle, 1e-5, PotentialMode::Ignore, inner).hausdorff_distance < 1e-5);
}

TEST_CASE("rotation") {
    auto F = graph_family("q^2/2");
    auto R = rotate(F, Turn::Ccw);
    CHECK(R.fiber_vars() == std::vector<std::string>{"u"});
    auto c = critical_locus(R);
    REQUIRE(!c.empty());
    for (const auto& b : c.branches)
        for (const auto& s : b.samples) {
            CHECK(std::fabs(s.p + s.q) < 1e-10);
            CHECK(std::fabs(s.fiber[0] - s.q) < 1e-10);
        }
    auto W = Symplectomorphism::quarter_turn();
    CHECK(distance(c, transform_curve(W, critical_locus(F))) < 1e-6);

    auto Z = rotate(graph_family("0"), Turn::Ccw);
    auto cz = critical_locus(Z);
    REQUIRE(!cz.empty());
    for (const auto& b : cz.branches)
        for (const auto& s : b.samples) CHECK(std::fabs(s.q) < 1e-12);

    // (F^ccw)^cw = F(u, xi) - v u + v q
    auto fold = fold_family();
    auto RR = rotate(rotate(fold, Turn::Ccw), Turn::Cw);
    REQUIRE(RR.fiber_vars() == std::vector<std::string>{"xi", "u", "u_1"});
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int k = 0; k < 100; ++k) {
        double q = U(rng), xi = U(rng), u = U(rng), v = U(rng);
        double expect = xi * xi * xi / 3 - u * xi - v * u + v * q;
        CHECK(RR.F().evaluate(std::vector<double>{q, xi, u, v}) == doctest::Approx(expect).epsilon(1e-14));
    }
    // Shifting u by q gives the Chekanov family with the identity.
    auto ch = chekanov(fold, identity_genfam());
    for (int k = 0; k < 100; ++k) {
        double q = U(rng), xi = U(rng), u = U(rng), v = U(rng);
        double lhs = RR.F().evaluate(std::vector<double>{q, xi, u + q, v});
        CHECK(lhs == doctest::Approx(ch.F().evaluate(std::vector<double>{q, xi, u, v})).epsilon(1e-13));
    }
}

TEST_CASE("cutoff split") {
    auto F = graph_family("q^2/2", {-4, 4});
    auto one = SmoothFunction::constant(1.0, {"q"});
    auto [c1, n1] = cutoff_split(F, one);
    CHECK(n1.evaluate(std::vector<double>{0.7}) == 0.0);
    auto phi = dagger_cutoff("q");
    auto [Fc, Fnc] = cutoff_split(F, phi);
    CHECK(Fnc.evaluate(std::vector<double>{1.0}) == 0.0);
    CHECK(Fc.evaluate(std::vector<double>{3.0}) == 0.0);
    auto sum = Fc + Fnc;
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> U(-4, 4);
    for (int k = 0; k < 1000; ++k) {
        double q = U(rng);
        REQUIRE(sum.evaluate(std::vector<double>{q}) == F.F().evaluate(std::vector<double>{q}));
    }
    auto fold = fold_family();
    CHECK_THROWS_AS(cutoff_split(fold, parse_function("cutoff(xi,1,2)", {"xi"})), Error);
}

TEST_CASE("dagger on bounded families") {
    auto W = Symplectomorphism::quarter_turn();
    std::vector<GeneratingFamily> fams = {
        graph_family("0", {-3, 3}),       graph_family("-q/2", {-1.2, 1.2}), graph_family("q^2/2"),
        fold_family(),                    graph_family("0.5*sin(2*q)"),
    };
    for (const auto& fam : fams) {
        auto base = critical_locus(fam);
        REQUIRE(bounded_in_region(base, Region::perp()));
        auto d = critical_locus(dagger(fam));
        auto oracle = transform_curve(W, base);
        auto r = curves_match(d, oracle, 1e-6, PotentialMode::Exact);
        CHECK(r.hausdorff_distance < 1e-6);
        CHECK(r.matched);
    }
}

TEST_CASE("stable inverse of the dagger") {
    auto fam = fold_family();
    auto back = dagger(dagger(fam), -1);
    REQUIRE(back.fiber_dim() == 3);
    auto r = stable_equivalence_evidence(fam, back, 1e-6);
    CHECK(r.hausdorff_distance < 1e-6);
    CHECK(r.index_constant);
    REQUIRE(r.index_offset);
    // On the locus the extra (u, w) block is [[F_uu, -1], [-1, 0]] after eliminating xi,
    // which is indefinite: the offset is the number of its negative eigenvalues.
    CHECK(*r.index_offset == negative_eigs(0.0, -1.0, 0.0));
}

TEST_CASE("leg restriction") {
    auto zero = graph_family("0", {-3.2, 3.2});
    auto leg = restrict_to_leg(zero);
    CHECK(leg.warnings.empty());
    CHECK(leg.family.base_domain().lo == 0.0);
    auto c = critical_locus(leg.family);
    // The zero section rotates onto the fiber q = 0, which is the boundary of the leg chart.
    for (const auto& b : c.branches)
        for (const auto& s : b.samples) CHECK(std::fabs(s.q) < 1e-12);

    // p = -1/2 rotates to the vertical q = -1/2, which never reaches the leg side.
    auto constant = graph_family("-q/2", {-1.2, 1.2});
    auto full = critical_locus(dagger(constant));
    REQUIRE(!full.empty());
    for (const auto& b : full.branches)
        for (const auto& s : b.samples) CHECK(std::fabs(s.q + 0.5) < 1e-10);
    CHECK(critical_locus(restrict_to_leg(constant).family).empty());
    auto again = restrict_to_leg(constant);
    CHECK(again.family.base_domain().lo == leg.family.base_domain().lo);
    CHECK(again.family.base_domain().hi == leg.family.base_domain().hi);

    auto unbounded = graph_family("-2*q", {-3.2, 3.2});
    CHECK(!restrict_to_leg(unbounded).warnings.empty());
}

TEST_CASE("localization") {
    auto sg = identity_genfam();
    auto f = parse_function("q^2/2", {"q"});
    auto eps = parse_function("0.1*cutoff(q,0.2,0.5)", {"q"});
    auto fam = GeneratingFamily::function("q", {-1, 1}, f + eps);
    auto full = critical_locus(chekanov(fam, sg));

    // phi == 1 reproduces the Chekanov family.
    auto one = SmoothFunction::constant(1.0, {"q"});
    auto P1 = localize(fam, f, eps, one, sg);
    CHECK(expr::equal(P1.F().tree(), chekanov(fam, sg).F().tree()));

    auto phi = make_cutoff(0.75, 0.95, "q");
    auto O = compute_O_set(fam, f, eps, phi, Symplectomorphism::identity());
    REQUIRE(!O.intervals.empty());
    for (const auto& iv : O.intervals) {
        CHECK(iv.lo >= -0.5 - O.resolution);
        CHECK(iv.hi <= 0.5 + O.resolution);
    }
    auto loc = critical_locus(localize(fam, f, eps, phi, sg));
    CHECK(distance(loc, full) < 1e-6);

    // Negative control: phi == 0 drops the bump that sits on the locus.
    auto zero = SmoothFunction::constant(0.0, {"q"});
    auto bad = critical_locus(localize(fam, f, eps, zero, sg));
    CHECK(distance(bad, full) > 1e-3);

    CHECK_THROWS_AS(localize(fam, f, eps * SmoothFunction::constant(2.0), phi, sg), Error);

    // With the quarter turn the O-set is the set of p values over the bump.
    auto W = Symplectomorphism::quarter_turn();
    auto sgW = make_W_genfam();
    auto OW = compute_O_set(fam, f, eps, phi, W);
    REQUIRE(!OW.intervals.empty());
    double lo = 1e9, hi = -1e9;
    for (const auto& b : critical_locus(fam).branches)
        for (const auto& s : b.samples)
            if (std::fabs(s.q) < 0.5) {
                lo = std::min(lo, s.p);
                hi = std::max(hi, s.p);
            }
    for (const auto& iv : OW.intervals) {
        CHECK(iv.lo >= lo - OW.resolution);
        CHECK(iv.hi <= hi + OW.resolution);
    }
    auto locW = critical_locus(localize(fam, f, eps, phi, sgW));
    CHECK(distance(locW, critical_locus(chekanov(fam, sgW))) < 1e-6);

    auto emptyO = compute_O_set(GeneratingFamily::function("q", {-1, 1}, f), f,
                                SmoothFunction::constant(0.0, {"q"}), phi, W);
    CHECK(emptyO.intervals.empty());
}

TEST_CASE("gluing") {
    auto s = QuadraticStabilizer::positive({"w"});
    auto A = graph_family("q^2/2");
    auto As = stabilize(A, s);
    auto same = glue(A, As, {-0.3, 0.5}, GlueCase::NonLeg, s);
    CHECK(distance(critical_locus(same), critical_locus(A)) < 1e-9);

    // B differs from A + w^2 by a bump past K toward the edge.
    auto bump = parse_function("0.1*cutoff(q-0.8,0.05,0.15)", {"q"});
    auto B = As.with_F((As.F() + bump).with_variables(As.total_variables()));
    auto g = glue(A, B, {-0.3, 0.5}, GlueCase::NonLeg, s);
    CHECK(distance(critical_locus(restrict_family(g, {0.5, 1})), critical_locus(restrict_family(B, {0.5, 1}))) <
          1e-9);
    CHECK(distance(critical_locus(restrict_family(g, {-1, -0.3})), critical_locus(restrict_family(A, {-1, -0.3}))) <
          1e-9);
    // Mirrored orientation keeps B on the other side.
    auto bm = parse_function("0.1*cutoff(q+0.8,0.05,0.15)", {"q"});
    auto Bm = As.with_F((As.F() + bm).with_variables(As.total_variables()));
    auto gm = glue(A, Bm, {-0.5, 0.3}, GlueCase::NonLeg, s, GlueOptions{.vertex = 0.0, .edge_side = -1});
    CHECK(distance(critical_locus(restrict_family(gm, {-1, -0.5})), critical_locus(restrict_family(Bm, {-1, -0.5}))) <
          1e-9);
    CHECK(distance(critical_locus(restrict_family(gm, {0.3, 1})), critical_locus(restrict_family(A, {0.3, 1}))) <
          1e-9);

    CHECK_THROWS_AS(glue(A, B, {0.2, 0.5}, GlueCase::NonLeg, s), Error);
    CHECK_THROWS_AS(glue(A, B, {-0.3, 0.9}, GlueCase::NonLeg, s), Error);

    // Leg case on the zero section.
    auto Z = graph_family("0", {-3.2, 3.2});
    auto D = stabilize(dagger(Z), s);
    auto gl = glue(Z, D, {-1, 1}, GlueCase::Leg, s);
    auto r = stable_equivalence_evidence(gl, Z, 1e-5, MatchOptions{.window = Region::box({-1, 1}, {-1, 1})});
    CHECK(r.hausdorff_distance < 1e-5);
}

TEST_CASE("compact defect") {
    auto W = Symplectomorphism::quarter_turn();
    auto sg = make_W_genfam();
    auto f = parse_function("q^2/2", {"q"});

    auto fam0 = GeneratingFamily::function("q", {-1, 1}, f);
    auto [P0, rep0] = compactify_defect(fam0, f, SmoothFunction::constant(0.0, {"q"}), sg, W);
    CHECK(rep0.empty);
    CHECK(rep0.box.empty());
    CHECK(rep0.match.hausdorff_distance < 1e-6);

    auto eps = parse_function("0.1*cutoff(q,0.2,0.5)", {"q"});
    auto fam = GeneratingFamily::function("q", {-1, 1}, f + eps);
    auto [P, rep] = compactify_defect(fam, f, eps, sg, W);
    CHECK(rep.compact);
    CHECK(!rep.empty);
    REQUIRE(rep.box.size() == rep.box_vars.size());
    for (const auto& b : rep.box) {
        CHECK(std::isfinite(b.lo));
        CHECK(std::isfinite(b.hi));
    }
    CHECK(rep.box_vars == std::vector<std::string>{"q", "v"});
    CHECK(rep.cylinder_vars == std::vector<std::string>{"t"});
    CHECK(rep.match.hausdorff_distance < 1e-6);
    for (const auto& iv : rep.o_set.intervals) CHECK(rep.phi_plateau.contains(iv));

    // Bump off the locus of the fold.
    auto fold = fold_family();
    auto ffold = fold.F();
    auto eoff = parse_function("0.05*cutoff(q+0.6,0.1,0.3)*cutoff(xi,0.1,0.3)", {"q", "xi"});
    auto famoff = fold.with_F((ffold + eoff).with_variables(fold.total_variables()));
    auto [Poff, repoff] = compactify_defect(famoff, ffold, eoff, sg, W);
    CHECK(repoff.compact);
    CHECK(repoff.match.hausdorff_distance < 1e-6);

    auto wide = parse_function("0.1*cutoff(q,0.2,5)", {"q"});
    CHECK_THROWS_AS(compactify_defect(GeneratingFamily::function("q", {-1, 1}, f + wide), f, wide, sg, W), Error);
}
