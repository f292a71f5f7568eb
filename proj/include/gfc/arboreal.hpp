#pragma once

// Arboreal ribbon graphs, their chart atlases, global generating families
// and the per-edge consistency check.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gfc/genfam.hpp"
#include "gfc/symplecto.hpp"

namespace gfc {

class ArborealGraph {
public:
    struct Vertex {
        std::string id;
        std::vector<std::string> cyclic;  // declared cyclic order of incident edges (may be empty)
        std::optional<std::string> leg;
    };
    struct Edge {
        std::string id, a, b;
    };

    ArborealGraph& add_vertex(const std::string& id);
    ArborealGraph& add_edge(const std::string& id, const std::string& a, const std::string& b);
    ArborealGraph& set_cyclic(const std::string& v, std::vector<std::string> edges);
    ArborealGraph& set_leg(const std::string& v, const std::string& e);

    const std::vector<Vertex>& vertices() const { return vertices_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Vertex* find_vertex(const std::string& id) const;
    const Edge* find_edge(const std::string& id) const;
    const Vertex& vertex(const std::string& id) const;
    const Edge& edge(const std::string& id) const;

    /// Incident edges in cyclic order (declared order, else insertion order).
    std::vector<std::string> incident(const std::string& v) const;
    int valence(const std::string& v) const;

    /// Center c with legs to a, b, l; leg of c is the edge to l.
    static ArborealGraph tripod();
    /// Cycle on n vertices v0..v{n-1} with edges e0..e{n-1}.
    static ArborealGraph cycle(int n);

private:
    std::vector<Vertex> vertices_;
    std::vector<Edge> edges_;
};

struct Violation {
    std::string code;  // valence, missing leg, double edge, self loop, ...
    std::string where;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool valid() const { return violations.empty(); }
    bool has(const std::string& code) const;
    std::string text() const;
};

ValidationReport validate_graph(const ArborealGraph& g);

/// Distance between neighboring vertices in edge coordinates.
inline constexpr double kEdgeLength = 4.0;
/// Half-width of a vertex chart along each edge.
inline constexpr double kChartReach = 3.2;
/// Edge coordinates where both endpoint charts are compared.
inline constexpr Interval kOverlap{1.0, 3.0};

/// Where an edge sits in the chart of a vertex: toward -q, toward +q, or along +p (leg).
enum class EdgeSlot { Minus, Plus, Leg };

struct Chart {
    std::string vertex;
    int valence = 0;
    Interval domain;
    std::map<std::string, EdgeSlot> slots;
    Region region;
};

enum class TransitionKind { Direct, ThroughLegOfA, ThroughLegOfB };

struct EdgeTransition {
    std::string edge, a, b;
    TransitionKind kind = TransitionKind::Direct;
};

std::string to_string(EdgeSlot s);
std::string to_string(TransitionKind k);

class ChartAtlas {
public:
    const std::vector<Chart>& charts() const { return charts_; }
    const std::vector<EdgeTransition>& transitions() const { return transitions_; }
    const Chart& chart(const std::string& v) const;
    const EdgeTransition& transition(const std::string& e) const;
    const ArborealGraph& graph() const { return graph_; }

    /// Affine map from chart coordinates of v to coordinates (s, p_s) on edge e,
    /// s = distance from the endpoint a.
    Symplectomorphism to_edge(const std::string& v, const std::string& e) const;
    /// Chart-v coordinates to chart-w coordinates across their common edge.
    Symplectomorphism transition_map(const std::string& v, const std::string& w) const;
    /// Edge joining v and w, if any.
    std::optional<std::string> edge_between(const std::string& v, const std::string& w) const;
    std::vector<std::string> neighbors(const std::string& v) const;

    /// Base interval of chart v covering the overlap of e (after rotation for legs).
    Interval overlap_interval(const std::string& v, const std::string& e) const;

private:
    friend ChartAtlas build_atlas(const ArborealGraph& g);
    ArborealGraph graph_;
    std::vector<Chart> charts_;
    std::vector<EdgeTransition> transitions_;
};

/// Throws if the graph does not validate.
ChartAtlas build_atlas(const ArborealGraph& g);

Region chart_region(int valence);
bool sigma_membership(const ChartAtlas& atlas, const std::string& v, double q, double p);

struct GlobalFamily {
    std::map<std::string, GeneratingFamily> families;  // by vertex id

    const GeneratingFamily& at(const std::string& v) const;
};

/// Zero sections on every chart, except that a univalent vertex whose edge is the
/// leg of its neighbor gets a family with empty curve (the leg restriction of a
/// zero section is empty).
GlobalFamily zero_global_family(const ChartAtlas& atlas);

/// Curve of one side of an edge, in edge coordinates, restricted to the overlap.
SampledCurve edge_side_curve(const GlobalFamily& gf, const ChartAtlas& atlas, const std::string& e,
                             const std::string& v, const TraceConfig& cfg = TraceConfig::defaults());

struct EdgeCheck {
    std::string edge;
    double hausdorff_distance = 0.0;
    std::optional<int> index_offset;
    bool index_constant = true;
    bool both_empty = false;
    bool consistent = false;
};

struct ChartCheck {
    std::string vertex;
    bool in_sigma = true;
    std::size_t samples = 0;
};

struct ConsistencyReport {
    std::vector<EdgeCheck> edges;
    std::vector<ChartCheck> charts;
    bool consistent() const;
    std::string text() const;
};

ConsistencyReport check_global_consistency(const GlobalFamily& gf, const ChartAtlas& atlas, double tol = 1e-6,
                                           const TraceConfig& cfg = TraceConfig::defaults());

struct GlobalCurve {
    /// Per chart, in chart coordinates; each overlap is kept only on the side of
    /// its nearer vertex. Leg pieces come from the leg restriction mapped back by W^{-1}.
    std::map<std::string, SampledCurve> charts;
    std::size_t num_samples() const;
};

/// Throws if the family is not consistent.
GlobalCurve assemble_global_curve(const GlobalFamily& gf, const ChartAtlas& atlas, double tol = 1e-6,
                                  const TraceConfig& cfg = TraceConfig::defaults());

}  // namespace gfc
