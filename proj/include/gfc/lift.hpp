#pragma once

// Lifting chart-local Hamiltonian isotopies to global generating families.

#include <string>
#include <vector>

#include "gfc/arboreal.hpp"
#include "gfc/symplecto.hpp"

namespace gfc {

struct IsotopyEntry {
    std::string chart;
    SmoothFunction H;  // over (t, q, p)
    double t0 = 0.0, t1 = 1.0;
    Box2 support;
};

struct AdmissibleIsotopy {
    std::vector<IsotopyEntry> entries;
};

struct AdmissibilityReport {
    std::vector<std::string> problems;  // one line per offending entry
    bool admissible() const { return problems.empty(); }
};

/// Support boxes must lie in the chart's part of Sigma(T) and avoid the part of a
/// univalent disk off its ribbon. An identically zero H is always admissible.
AdmissibilityReport check_ham_admissible(const AdmissibleIsotopy& iso, const ChartAtlas& atlas, int grid = 41);

struct LiftOptions {
    double threshold = 0.2;         // C^1 defect allowed per step
    int min_fragments = 1;          // per isotopy entry
    double step_tol = 1e-4;         // per-step transport tolerance
    double consistency_tol = 1e-4;  // edge agreement after a step
    double budget = -1.0;           // accumulated tolerance; negative: step_tol times the step count
    double genfam_margin = 0.1;     // box around the support for the near-identity family
    int genfam_grid = 81;
    double fiber_margin = 0.5;      // half-width added to |S - id| for the v box
    Interval t_box{-10.0, 10.0};
    bool verify = true;             // trace and compare after each step
    TraceConfig trace = TraceConfig::defaults();
};

struct ChartUpdate {
    std::string vertex;
    bool transported = false;  // Chekanov with the (conjugated) step map; else hyperbolic stabilization
    std::size_t rank_before = 0, rank_after = 0;
    double transport_error = 0.0;  // Hausdorff to the transported old curve (verify only)
};

struct LiftedStep {
    std::string chart;
    double t0 = 0.0, t1 = 0.0;
    double c1_defect = 0.0;
    std::vector<ChartUpdate> updates;
    bool consistent = true;
    std::string consistency;
    double error = 0.0;  // max transport error over charts
};

struct LiftReport {
    std::vector<LiftedStep> steps;
    double accumulated = 0.0;
    double budget = 0.0;
    bool ok = true;
    std::string text() const;
};

/// One C^1-small step at a chart: the step chart and every neighbor reached by the
/// conjugated support get Chekanov with the map's generating family, all other
/// charts are stabilized by a hyperbolic form on the same two fresh names.
GlobalFamily lift_step(const GlobalFamily& gf, const ChartAtlas& atlas, const std::string& chart,
                       const IsotopyStep& step, const Box2& support, const LiftOptions& opts = {},
                       LiftedStep* report = nullptr);

/// Fragments every entry and folds lift_step over the steps in order.
GlobalFamily lift_isotopy(const GlobalFamily& gf, const ChartAtlas& atlas, const AdmissibleIsotopy& iso,
                          const LiftOptions& opts = {}, LiftReport* report = nullptr);

/// Time-t0..t1 map of an isotopy entry (used as the transport oracle).
Symplectomorphism entry_map(const IsotopyEntry& e);

}  // namespace gfc
