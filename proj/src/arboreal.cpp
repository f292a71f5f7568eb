#include "gfc/arboreal.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "gfc/operators.hpp"

namespace gfc {

namespace {

const Mat2& w_matrix() {
    static const Mat2 W = (Mat2() << 0, 1, -1, 0).finished();
    return W;
}

}  // namespace

ArborealGraph& ArborealGraph::add_vertex(const std::string& id) {
    vertices_.push_back({id, {}, std::nullopt});
    return *this;
}

ArborealGraph& ArborealGraph::add_edge(const std::string& id, const std::string& a, const std::string& b) {
    edges_.push_back({id, a, b});
    return *this;
}

ArborealGraph& ArborealGraph::set_cyclic(const std::string& v, std::vector<std::string> edges) {
    for (auto& x : vertices_)
        if (x.id == v) {
            x.cyclic = std::move(edges);
            return *this;
        }
    throw Error("cyclic order for unknown vertex '" + v + "'");
}

ArborealGraph& ArborealGraph::set_leg(const std::string& v, const std::string& e) {
    for (auto& x : vertices_)
        if (x.id == v) {
            x.leg = e;
            return *this;
        }
    throw Error("leg for unknown vertex '" + v + "'");
}

const ArborealGraph::Vertex* ArborealGraph::find_vertex(const std::string& id) const {
    for (const auto& v : vertices_)
        if (v.id == id) return &v;
    return nullptr;
}

const ArborealGraph::Edge* ArborealGraph::find_edge(const std::string& id) const {
    for (const auto& e : edges_)
        if (e.id == id) return &e;
    return nullptr;
}

const ArborealGraph::Vertex& ArborealGraph::vertex(const std::string& id) const {
    if (auto* v = find_vertex(id)) return *v;
    throw Error("unknown vertex '" + id + "'");
}

const ArborealGraph::Edge& ArborealGraph::edge(const std::string& id) const {
    if (auto* e = find_edge(id)) return *e;
    throw Error("unknown edge '" + id + "'");
}

std::vector<std::string> ArborealGraph::incident(const std::string& v) const {
    const auto& vx = vertex(v);
    if (!vx.cyclic.empty()) return vx.cyclic;
    std::vector<std::string> out;
    for (const auto& e : edges_) {
        if (e.a == v) out.push_back(e.id);
        if (e.b == v && e.a != v) out.push_back(e.id);
    }
    return out;
}

int ArborealGraph::valence(const std::string& v) const {
    int n = 0;
    for (const auto& e : edges_) n += (e.a == v) + (e.b == v);
    return n;
}

ArborealGraph ArborealGraph::tripod() {
    ArborealGraph g;
    g.add_vertex("c").add_vertex("a").add_vertex("b").add_vertex("l");
    g.add_edge("ea", "c", "a").add_edge("eb", "c", "b").add_edge("el", "c", "l");
    g.set_cyclic("c", {"el", "ea", "eb"}).set_leg("c", "el");
    return g;
}

ArborealGraph ArborealGraph::cycle(int n) {
    if (n < 3) throw Error("a cycle needs at least three vertices");
    ArborealGraph g;
    for (int i = 0; i < n; ++i) g.add_vertex("v" + std::to_string(i));
    for (int i = 0; i < n; ++i) g.add_edge("e" + std::to_string(i), "v" + std::to_string(i), "v" + std::to_string((i + 1) % n));
    for (int i = 0; i < n; ++i) g.set_cyclic("v" + std::to_string(i), {"e" + std::to_string((i + n - 1) % n), "e" + std::to_string(i)});
    return g;
}

bool ValidationReport::has(const std::string& code) const {
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.code == code; });
}

std::string ValidationReport::text() const {
    if (violations.empty()) return "valid\n";
    std::ostringstream os;
    for (const auto& v : violations) os << v.code << " at " << v.where << ": " << v.message << "\n";
    return os.str();
}

ValidationReport validate_graph(const ArborealGraph& g) {
    ValidationReport r;
    auto add = [&](std::string code, std::string where, std::string msg) {
        r.violations.push_back({std::move(code), std::move(where), std::move(msg)});
    };
    std::set<std::string> ids;
    for (const auto& v : g.vertices())
        if (!ids.insert(v.id).second) add("duplicate id", v.id, "vertex declared twice");
    std::set<std::string> eids;
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& e : g.edges()) {
        if (!eids.insert(e.id).second) add("duplicate id", e.id, "edge declared twice");
        if (!g.find_vertex(e.a) || !g.find_vertex(e.b)) {
            add("unknown vertex", e.id, "edge endpoint is not a declared vertex");
            continue;
        }
        if (e.a == e.b) {
            add("self loop", e.id, "edge joins " + e.a + " to itself");
            continue;
        }
        auto key = std::minmax(e.a, e.b);
        if (!pairs.insert({key.first, key.second}).second)
            add("double edge", e.id, "second edge between " + e.a + " and " + e.b);
    }
    for (const auto& v : g.vertices()) {
        int d = g.valence(v.id);
        if (d == 0) add("isolated vertex", v.id, "vertex has no edges");
        if (d > 3) add("valence", v.id, "valence " + std::to_string(d) + " exceeds 3");
        std::vector<std::string> inc;
        for (const auto& e : g.edges())
            if (e.a == v.id || e.b == v.id) inc.push_back(e.id);
        if (!v.cyclic.empty()) {
            auto a = v.cyclic, b = inc;
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            if (a != b) add("cyclic order", v.id, "cyclic order does not list the incident edges exactly once");
        }
        if (d == 3 && !v.leg) add("missing leg", v.id, "trivalent vertex without a leg");
        if (v.leg) {
            if (std::find(inc.begin(), inc.end(), *v.leg) == inc.end())
                add("leg not incident", v.id, "leg " + *v.leg + " is not an incident edge");
            else if (d != 3)
                add("leg on non-trivalent vertex", v.id, "only trivalent vertices carry a leg");
        }
    }
    for (const auto& e : g.edges()) {
        auto* a = g.find_vertex(e.a);
        auto* b = g.find_vertex(e.b);
        if (a && b && a != b && a->leg == e.id && b->leg == e.id)
            add("leg of both endpoints", e.id, "edge is the leg of both of its endpoints");
    }
    return r;
}

std::string to_string(EdgeSlot s) {
    switch (s) {
    case EdgeSlot::Minus: return "minus";
    case EdgeSlot::Plus: return "plus";
    case EdgeSlot::Leg: return "leg";
    }
    return "?";
}

std::string to_string(TransitionKind k) {
    switch (k) {
    case TransitionKind::Direct: return "direct";
    case TransitionKind::ThroughLegOfA: return "through-leg-of-a";
    case TransitionKind::ThroughLegOfB: return "through-leg-of-b";
    }
    return "?";
}

Region chart_region(int valence) {
    switch (valence) {
    case 1: return Region::univalent();
    case 2: return Region::band_region(1.0);
    case 3: return Region::trivalent();
    default: throw Error("no chart region for valence " + std::to_string(valence));
    }
}

ChartAtlas build_atlas(const ArborealGraph& g) {
    auto rep = validate_graph(g);
    if (!rep.valid()) throw Error("invalid arboreal graph: " + rep.text());
    ChartAtlas at;
    at.graph_ = g;
    for (const auto& v : g.vertices()) {
        Chart c;
        c.vertex = v.id;
        c.valence = g.valence(v.id);
        c.region = chart_region(c.valence);
        auto inc = g.incident(v.id);
        if (c.valence == 1) {
            c.domain = {0.0, kChartReach};
            c.slots[inc[0]] = EdgeSlot::Plus;
        } else {
            c.domain = {-kChartReach, kChartReach};
            if (c.valence == 3) {
                auto it = std::find(inc.begin(), inc.end(), *v.leg);
                std::rotate(inc.begin(), it, inc.end());
                c.slots[inc[0]] = EdgeSlot::Leg;
                c.slots[inc[1]] = EdgeSlot::Minus;
                c.slots[inc[2]] = EdgeSlot::Plus;
            } else {
                c.slots[inc[0]] = EdgeSlot::Minus;
                c.slots[inc[1]] = EdgeSlot::Plus;
            }
        }
        at.charts_.push_back(std::move(c));
    }
    for (const auto& e : g.edges()) {
        EdgeTransition t{e.id, e.a, e.b, TransitionKind::Direct};
        if (g.vertex(e.a).leg == e.id) t.kind = TransitionKind::ThroughLegOfA;
        else if (g.vertex(e.b).leg == e.id) t.kind = TransitionKind::ThroughLegOfB;
        at.transitions_.push_back(t);
    }
    return at;
}

const Chart& ChartAtlas::chart(const std::string& v) const {
    for (const auto& c : charts_)
        if (c.vertex == v) return c;
    throw Error("no chart for vertex '" + v + "'");
}

const EdgeTransition& ChartAtlas::transition(const std::string& e) const {
    for (const auto& t : transitions_)
        if (t.edge == e) return t;
    throw Error("unknown edge '" + e + "'");
}

Symplectomorphism ChartAtlas::to_edge(const std::string& v, const std::string& e) const {
    const auto& c = chart(v);
    auto it = c.slots.find(e);
    if (it == c.slots.end()) throw Error("edge " + e + " is not incident to " + v);
    const auto& ed = graph_.edge(e);
    double sigma = it->second == EdgeSlot::Minus ? -1.0 : 1.0;
    Mat2 R = it->second == EdgeSlot::Leg ? w_matrix() : Mat2::Identity();
    if (ed.a == v) return Symplectomorphism::affine(sigma * R);
    return Symplectomorphism::affine(-sigma * R, Vec2(kEdgeLength, 0.0));
}

Symplectomorphism ChartAtlas::transition_map(const std::string& v, const std::string& w) const {
    auto e = edge_between(v, w);
    if (!e) throw Error("vertices " + v + " and " + w + " are not adjacent");
    auto Tv = to_edge(v, *e), Tw = to_edge(w, *e);
    Mat2 Ai = Tw.matrix().inverse();
    return Symplectomorphism::affine(Ai * Tv.matrix(), Ai * (Tv.offset() - Tw.offset()));
}

std::optional<std::string> ChartAtlas::edge_between(const std::string& v, const std::string& w) const {
    for (const auto& e : graph_.edges())
        if ((e.a == v && e.b == w) || (e.a == w && e.b == v)) return e.id;
    return std::nullopt;
}

std::vector<std::string> ChartAtlas::neighbors(const std::string& v) const {
    std::vector<std::string> out;
    for (const auto& e : graph_.incident(v)) {
        const auto& ed = graph_.edge(e);
        out.push_back(ed.a == v ? ed.b : ed.a);
    }
    return out;
}

Interval ChartAtlas::overlap_interval(const std::string& v, const std::string& e) const {
    const auto& c = chart(v);
    auto it = c.slots.find(e);
    if (it == c.slots.end()) throw Error("edge " + e + " is not incident to " + v);
    if (it->second == EdgeSlot::Minus) return {-kOverlap.hi, -kOverlap.lo};
    return kOverlap;
}

bool sigma_membership(const ChartAtlas& atlas, const std::string& v, double q, double p) {
    const auto& c = atlas.chart(v);
    return c.domain.contains(q) && c.region.contains(q, p);
}

const GeneratingFamily& GlobalFamily::at(const std::string& v) const {
    auto it = families.find(v);
    if (it == families.end()) throw Error("global family has no family on vertex '" + v + "'");
    return it->second;
}

GlobalFamily zero_global_family(const ChartAtlas& atlas) {
    GlobalFamily gf;
    const auto& g = atlas.graph();
    for (const auto& c : atlas.charts()) {
        bool leg_leaf = false;
        if (c.valence == 1) {
            const auto& e = g.edge(c.slots.begin()->first);
            const auto& other = e.a == c.vertex ? e.b : e.a;
            leg_leaf = g.vertex(other).leg == e.id;
        }
        GeneratingFamily fam;
        if (leg_leaf)
            fam = GeneratingFamily("q", c.domain, {"xi"}, {{-1.0, 1.0}}, parse_function("xi", {"q", "xi"}));
        else
            fam = GeneratingFamily::function("q", c.domain, SmoothFunction::constant(0.0, {"q"}));
        fam.set_name(c.vertex);
        gf.families.emplace(c.vertex, std::move(fam));
    }
    return gf;
}

SampledCurve edge_side_curve(const GlobalFamily& gf, const ChartAtlas& atlas, const std::string& e,
                             const std::string& v, const TraceConfig& cfg) {
    const auto& fam = gf.at(v);
    const auto& c = atlas.chart(v);
    auto slot = c.slots.at(e);
    auto Te = atlas.to_edge(v, e);
    if (slot == EdgeSlot::Leg) {
        auto leg = restrict_to_leg(fam).family;
        auto side = restrict_family(leg, kOverlap);
        // Leg coordinates are W of chart coordinates.
        auto back = Symplectomorphism::compose({Symplectomorphism::quarter_turn_inverse(), Te});
        return transform_curve(back, critical_locus(side, cfg));
    }
    auto side = restrict_family(fam, atlas.overlap_interval(v, e));
    return transform_curve(Te, critical_locus(side, cfg));
}

bool ConsistencyReport::consistent() const {
    for (const auto& e : edges)
        if (!e.consistent) return false;
    for (const auto& c : charts)
        if (!c.in_sigma) return false;
    return true;
}

std::string ConsistencyReport::text() const {
    std::ostringstream os;
    for (const auto& e : edges) {
        os << "edge " << e.edge << ": " << (e.consistent ? "consistent" : "INCONSISTENT");
        if (e.both_empty) os << " (both sides empty)";
        else
            os << " distance " << e.hausdorff_distance << " index offset "
               << (e.index_offset ? std::to_string(*e.index_offset) : std::string("undetermined"))
               << (e.index_constant ? "" : " (not constant)");
        os << "\n";
    }
    for (const auto& c : charts)
        os << "chart " << c.vertex << ": " << c.samples << " samples, " << (c.in_sigma ? "inside" : "OUTSIDE")
           << " the chart region\n";
    return os.str();
}

ConsistencyReport check_global_consistency(const GlobalFamily& gf, const ChartAtlas& atlas, double tol,
                                           const TraceConfig& cfg) {
    ConsistencyReport rep;
    for (const auto& t : atlas.transitions()) {
        EdgeCheck ec;
        ec.edge = t.edge;
        auto ca = edge_side_curve(gf, atlas, t.edge, t.a, cfg);
        auto cb = edge_side_curve(gf, atlas, t.edge, t.b, cfg);
        if (ca.empty() && cb.empty()) {
            ec.both_empty = true;
            ec.consistent = true;
        } else {
            auto m = curves_match(ca, cb, tol);
            ec.hausdorff_distance = m.hausdorff_distance;
            ec.index_offset = m.index_offset;
            ec.index_constant = m.index_constant;
            ec.consistent = m.matched && m.index_constant;
        }
        rep.edges.push_back(ec);
    }
    for (const auto& c : atlas.charts()) {
        ChartCheck cc;
        cc.vertex = c.vertex;
        auto curve = critical_locus(gf.at(c.vertex), cfg);
        cc.samples = curve.num_samples();
        cc.in_sigma = bounded_in_region(curve, c.region);
        rep.charts.push_back(cc);
    }
    return rep;
}

std::size_t GlobalCurve::num_samples() const {
    std::size_t n = 0;
    for (const auto& [v, c] : charts) n += c.num_samples();
    return n;
}

GlobalCurve assemble_global_curve(const GlobalFamily& gf, const ChartAtlas& atlas, double tol,
                                  const TraceConfig& cfg) {
    auto rep = check_global_consistency(gf, atlas, tol, cfg);
    if (!rep.consistent()) throw Error("global family is not consistent:\n" + rep.text());
    const double cut = 0.5 * kEdgeLength;
    GlobalCurve out;
    for (const auto& c : atlas.charts()) {
        const auto& fam = gf.at(c.vertex);
        Interval keep = c.domain;
        std::optional<std::string> leg;
        for (const auto& [e, slot] : c.slots) {
            if (slot == EdgeSlot::Minus) keep.lo = -cut;
            if (slot == EdgeSlot::Plus) keep.hi = cut;
            if (slot == EdgeSlot::Leg) leg = e;
        }
        auto curve = filter_curve(critical_locus(fam, cfg), Region::box(keep, {-1e300, 1e300}));
        if (leg) {
            auto side = restrict_family(restrict_to_leg(fam).family, {0.0, cut});
            auto back = transform_curve(Symplectomorphism::quarter_turn_inverse(), critical_locus(side, cfg));
            for (auto& b : back.branches) curve.branches.push_back(std::move(b));
        }
        out.charts.emplace(c.vertex, std::move(curve));
    }
    return out;
}

}  // namespace gfc
