#pragma once

// Text formats: .gf families, .ag graphs, .gfam global families, .iso
// isotopies; CSV curves and SVG plots.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gfc/arboreal.hpp"
#include "gfc/genfam.hpp"
#include "gfc/lift.hpp"

namespace gfc::io {

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

/// [family] section (name, base, domain, fiber, fiber_box, F, constraint = <expr> in lo hi)
/// plus optional [grid NAME] sections (axes, outside, values, dx, dy, dxy) referenced by F.
GeneratingFamily parse_family(const std::string& text, const std::string& origin = "<string>");
GeneratingFamily read_family(const std::string& path);
/// Writes F and constraints as expressions; grid kernels they call become [grid] sections.
std::string format_family(const GeneratingFamily& fam);
void write_family(const std::string& path, const GeneratingFamily& fam);

ArborealGraph parse_graph(const std::string& text, const std::string& origin = "<string>");
ArborealGraph read_graph(const std::string& path);
std::string format_graph(const ArborealGraph& g);

struct GlobalFamilyFile {
    std::string graph_path;  // as written in the file
    ArborealGraph graph;
    GlobalFamily family;
};

/// `graph <path>` and `vertex <id> <path>` lines; paths relative to the file.
GlobalFamilyFile read_global_family(const std::string& path);
/// Writes the .gfam plus one .gf per vertex next to it (<stem>.<vertex>.gf).
void write_global_family(const std::string& path, const std::string& graph_path, const GlobalFamily& gf);

/// Lines `step <chart> t0 t1 qmin qmax pmin pmax <H(t,q,p)>`.
AdmissibleIsotopy parse_isotopy(const std::string& text, const std::string& origin = "<string>");
AdmissibleIsotopy read_isotopy(const std::string& path);

/// Header `branch,q,p,f,index[,fiber...]`, numbers in %.17g.
std::string curve_csv(const SampledCurve& c);
SampledCurve parse_curve_csv(const std::string& text);

struct PlotLayer {
    std::string label;
    SampledCurve curve;
};

/// Polylines of the (q, p) branches; the overlay draws the region boundary lines.
std::string curve_svg(const std::vector<PlotLayer>& layers, std::optional<Region> overlay = {});

std::string format_number(double x);

}  // namespace gfc::io
