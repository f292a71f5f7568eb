#include "gfc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gfc::io {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& s) {
    auto h = s.find('#');
    return h == std::string::npos ? s : s.substr(0, h);
}

std::vector<std::string> words(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string w; is >> w;) out.push_back(w);
    return out;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
    throw Error(origin + ":" + std::to_string(line) + ": " + msg);
}

double to_double(const std::string& w, const std::string& origin, int line) {
    char* end = nullptr;
    double v = std::strtod(w.c_str(), &end);
    if (w.empty() || *end != '\0') fail(origin, line, "expected a number, got '" + w + "'");
    return v;
}

std::vector<double> numbers(const std::string& s, const std::string& origin, int line) {
    std::vector<double> out;
    for (const auto& w : words(s)) out.push_back(to_double(w, origin, line));
    return out;
}

struct Section {
    std::string kind;  // "family" or "grid"
    std::string arg;
    int line = 0;
    std::vector<std::pair<std::string, std::string>> entries;  // key, value
    std::vector<int> lines;

    std::optional<std::string> get(const std::string& key) const {
        for (const auto& [k, v] : entries)
            if (k == key) return v;
        return std::nullopt;
    }
};

std::vector<Section> sections(const std::string& text, const std::string& origin) {
    std::vector<Section> out;
    std::istringstream is(text);
    int n = 0;
    for (std::string raw; std::getline(is, raw);) {
        ++n;
        std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(origin, n, "unterminated section header");
            auto w = words(s.substr(1, s.size() - 2));
            if (w.empty()) fail(origin, n, "empty section header");
            Section sec;
            sec.kind = w[0];
            if (w.size() > 1) sec.arg = w[1];
            sec.line = n;
            out.push_back(sec);
            continue;
        }
        if (out.empty()) fail(origin, n, "key outside a section");
        auto eq = s.find('=');
        if (eq == std::string::npos) {
            // Continuation of a number list.
            if (out.back().entries.empty()) fail(origin, n, "expected key = value");
            out.back().entries.back().second += " " + s;
            continue;
        }
        out.back().entries.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        out.back().lines.push_back(n);
    }
    return out;
}

std::shared_ptr<const GridInterpolant> build_grid(const Section& sec, const std::string& origin) {
    if (sec.arg.empty()) fail(origin, sec.line, "grid section needs a name");
    std::vector<GridInterpolant::Axis> axes;
    for (std::size_t i = 0; i < sec.entries.size(); ++i) {
        const auto& [k, v] = sec.entries[i];
        if (k != "axis") continue;
        auto a = numbers(v, origin, sec.lines[i]);
        if (a.size() != 3 || a[2] < 2 || a[2] != std::floor(a[2])) fail(origin, sec.lines[i], "axis = lo hi n");
        axes.push_back({a[0], a[1], static_cast<int>(a[2])});
    }
    if (axes.empty() || axes.size() > 2) fail(origin, sec.line, "grid needs one or two axis lines");
    auto outside = GridInterpolant::Outside::Error;
    if (auto o = sec.get("outside")) {
        if (*o == "zero") outside = GridInterpolant::Outside::Zero;
        else if (*o != "error") fail(origin, sec.line, "outside = zero|error");
    }
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.count);
    auto list = [&](const char* key, bool required) {
        auto v = sec.get(key);
        if (!v) {
            if (required) fail(origin, sec.line, std::string("missing ") + key);
            return std::vector<double>{};
        }
        auto out = numbers(*v, origin, sec.line);
        if (out.size() != n) fail(origin, sec.line, std::string(key) + " has " + std::to_string(out.size()) +
                                                        " entries, expected " + std::to_string(n));
        return out;
    };
    auto values = list("values", true);
    auto dx = list("dx", false);
    if (dx.empty()) return GridInterpolant::from_values(sec.arg, axes, std::move(values), outside);
    auto dy = list("dy", axes.size() == 2);
    auto dxy = list("dxy", axes.size() == 2);
    return std::make_shared<GridInterpolant>(sec.arg, axes, std::move(values), std::move(dx), std::move(dy),
                                             std::move(dxy), outside);
}

std::pair<Interval, std::size_t> interval_at(const std::vector<double>& v, std::size_t i) {
    return {Interval{v[i], v[i + 1]}, i + 2};
}

void collect_grids(const expr::NodePtr& n, std::map<std::string, std::shared_ptr<const GridInterpolant>>& out) {
    if (!n) return;
    if (n->op == expr::Op::Call) {
        auto g = std::dynamic_pointer_cast<const GridInterpolant>(n->kernel);
        if (!g) throw Error("kernel '" + n->kernel->name() + "' cannot be written to a family file");
        auto [it, fresh] = out.emplace(g->name(), g);
        if (!fresh && it->second != g) throw Error("two different kernels are named '" + g->name() + "'");
    }
    for (const auto& a : n->args) collect_grids(a, out);
}

void write_list(std::ostringstream& os, const char* key, const std::vector<double>& v, std::size_t row) {
    os << key << " =";
    for (std::size_t i = 0; i < v.size(); ++i) {
        os << (i % row == 0 ? "\n  " : " ") << format_number(v[i]);
    }
    os << "\n";
}

std::string render(const SmoothFunction& f) { return expr::to_string(f.tree()); }

}  // namespace

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write to '" + path + "' failed");
}

GeneratingFamily parse_family(const std::string& text, const std::string& origin) {
    auto secs = sections(text, origin);
    expr::KernelRegistry registry;
    const Section* fam = nullptr;
    for (const auto& s : secs) {
        if (s.kind == "grid") {
            auto g = build_grid(s, origin);
            if (!registry.emplace(g->name(), g).second) fail(origin, s.line, "duplicate grid '" + g->name() + "'");
        } else if (s.kind == "family") {
            if (fam) fail(origin, s.line, "more than one [family] section");
            fam = &s;
        } else {
            fail(origin, s.line, "unknown section '" + s.kind + "'");
        }
    }
    if (!fam) throw Error(origin + ": no [family] section");

    std::string name, base = "q";
    Interval domain{-1, 1};
    std::vector<std::string> fiber;
    std::vector<double> box;
    std::optional<std::string> F;
    std::vector<std::pair<std::string, int>> constraints;
    bool have_domain = false;
    for (std::size_t i = 0; i < fam->entries.size(); ++i) {
        const auto& [k, v] = fam->entries[i];
        int line = fam->lines[i];
        if (k == "name") {
            name = v;
        } else if (k == "base") {
            auto w = words(v);
            if (w.size() != 1) fail(origin, line, "base = <variable>");
            base = w[0];
        } else if (k == "domain") {
            auto d = numbers(v, origin, line);
            if (d.size() != 2 || !(d[0] < d[1])) fail(origin, line, "domain = lo hi with lo < hi");
            domain = {d[0], d[1]};
            have_domain = true;
        } else if (k == "fiber") {
            fiber = words(v);
        } else if (k == "fiber_box") {
            box = numbers(v, origin, line);
        } else if (k == "F") {
            F = v;
        } else if (k == "constraint") {
            constraints.emplace_back(v, line);
        } else {
            fail(origin, line, "unknown key '" + k + "'");
        }
    }
    if (!have_domain) fail(origin, fam->line, "missing domain");
    if (!F) fail(origin, fam->line, "missing F");
    if (box.size() != 2 * fiber.size())
        fail(origin, fam->line, "fiber_box needs lo hi for each of the " + std::to_string(fiber.size()) + " fiber variables");
    std::vector<Interval> fbox;
    for (std::size_t i = 0; i < box.size(); i += 2) {
        auto [iv, next] = interval_at(box, i);
        if (!(iv.lo < iv.hi)) fail(origin, fam->line, "empty fiber interval");
        fbox.push_back(iv);
    }
    std::vector<std::string> vars{base};
    vars.insert(vars.end(), fiber.begin(), fiber.end());
    auto parse_expr = [&](const std::string& s, int line) {
        try {
            return parse_function(s, vars, &registry);
        } catch (const Error& e) {
            fail(origin, line, e.what());
        }
    };
    int fline = fam->line;
    for (std::size_t i = 0; i < fam->entries.size(); ++i)
        if (fam->entries[i].first == "F") fline = fam->lines[i];
    SmoothFunction f = parse_expr(*F, fline);
    std::vector<WindowConstraint> wc;
    for (const auto& [s, line] : constraints) {
        auto at = s.rfind(" in ");
        if (at == std::string::npos) fail(origin, line, "constraint = <expr> in lo hi");
        auto r = numbers(s.substr(at + 4), origin, line);
        if (r.size() != 2) fail(origin, line, "constraint = <expr> in lo hi");
        wc.push_back({parse_expr(trim(s.substr(0, at)), line), {r[0], r[1]}});
    }
    GeneratingFamily out(base, domain, fiber, fbox, f, wc);
    out.set_name(name);
    return out;
}

GeneratingFamily read_family(const std::string& path) { return parse_family(read_text(path), path); }

std::string format_family(const GeneratingFamily& fam) {
    std::map<std::string, std::shared_ptr<const GridInterpolant>> grids;
    collect_grids(fam.F().tree(), grids);
    for (const auto& c : fam.constraints()) collect_grids(c.c.tree(), grids);

    std::ostringstream os;
    os << "[family]\n";
    if (!fam.name().empty()) os << "name = " << fam.name() << "\n";
    os << "base = " << fam.base_var() << "\n";
    os << "domain = " << format_number(fam.base_domain().lo) << " " << format_number(fam.base_domain().hi) << "\n";
    os << "fiber =";
    for (const auto& v : fam.fiber_vars()) os << " " << v;
    os << "\nfiber_box =";
    for (const auto& b : fam.fiber_box()) os << " " << format_number(b.lo) << " " << format_number(b.hi);
    os << "\nF = " << render(fam.F()) << "\n";
    for (const auto& c : fam.constraints())
        os << "constraint = " << render(c.c) << " in " << format_number(c.range.lo) << " " << format_number(c.range.hi)
           << "\n";
    for (const auto& [name, g] : grids) {
        os << "\n[grid " << name << "]\n";
        for (const auto& a : g->axes()) os << "axis = " << format_number(a.lo) << " " << format_number(a.hi) << " " << a.count << "\n";
        os << "outside = " << (g->outside() == GridInterpolant::Outside::Zero ? "zero" : "error") << "\n";
        std::size_t row = static_cast<std::size_t>(g->axes().back().count);
        write_list(os, "values", g->values(), row);
        write_list(os, "dx", g->dx(), row);
        if (g->axes().size() == 2) {
            write_list(os, "dy", g->dy(), row);
            write_list(os, "dxy", g->dxy(), row);
        }
    }
    return os.str();
}

void write_family(const std::string& path, const GeneratingFamily& fam) { write_text(path, format_family(fam)); }

ArborealGraph parse_graph(const std::string& text, const std::string& origin) {
    ArborealGraph g;
    std::istringstream is(text);
    int n = 0;
    for (std::string raw; std::getline(is, raw);) {
        ++n;
        auto w = words(strip_comment(raw));
        if (w.empty()) continue;
        try {
            if (w[0] == "vertex" && w.size() == 2) {
                g.add_vertex(w[1]);
            } else if (w[0] == "edge" && w.size() == 4) {
                g.add_edge(w[1], w[2], w[3]);
            } else if (w[0] == "cyclic" && w.size() >= 2) {
                g.set_cyclic(w[1], std::vector<std::string>(w.begin() + 2, w.end()));
            } else if (w[0] == "leg" && w.size() == 3) {
                g.set_leg(w[1], w[2]);
            } else {
                fail(origin, n, "expected 'vertex <id>', 'edge <id> <v> <w>', 'cyclic <v> <e>...' or 'leg <v> <e>'");
            }
        } catch (const Error& e) {
            std::string msg = e.what();
            if (msg.rfind(origin + ":", 0) == 0) throw;
            fail(origin, n, msg);
        }
    }
    return g;
}

ArborealGraph read_graph(const std::string& path) { return parse_graph(read_text(path), path); }

std::string format_graph(const ArborealGraph& g) {
    std::ostringstream os;
    for (const auto& v : g.vertices()) os << "vertex " << v.id << "\n";
    for (const auto& e : g.edges()) os << "edge " << e.id << " " << e.a << " " << e.b << "\n";
    for (const auto& v : g.vertices()) {
        if (!v.cyclic.empty()) {
            os << "cyclic " << v.id;
            for (const auto& e : v.cyclic) os << " " << e;
            os << "\n";
        }
        if (v.leg) os << "leg " << v.id << " " << *v.leg << "\n";
    }
    return os.str();
}

GlobalFamilyFile read_global_family(const std::string& path) {
    auto text = read_text(path);
    fs::path dir = fs::path(path).parent_path();
    GlobalFamilyFile out;
    std::istringstream is(text);
    int n = 0;
    bool have_graph = false;
    for (std::string raw; std::getline(is, raw);) {
        ++n;
        auto w = words(strip_comment(raw));
        if (w.empty()) continue;
        if (w[0] == "graph" && w.size() == 2) {
            if (have_graph) fail(path, n, "second graph line");
            out.graph_path = w[1];
            out.graph = read_graph((dir / w[1]).string());
            have_graph = true;
        } else if (w[0] == "vertex" && w.size() == 3) {
            if (out.family.families.count(w[1])) fail(path, n, "vertex '" + w[1] + "' listed twice");
            out.family.families.emplace(w[1], read_family((dir / w[2]).string()));
        } else {
            fail(path, n, "expected 'graph <path>' or 'vertex <id> <path>'");
        }
    }
    if (!have_graph) throw Error(path + ": missing graph line");
    for (const auto& v : out.graph.vertices())
        if (!out.family.families.count(v.id)) throw Error(path + ": no family for vertex '" + v.id + "'");
    for (const auto& [v, f] : out.family.families)
        if (!out.graph.find_vertex(v)) throw Error(path + ": family for unknown vertex '" + v + "'");
    return out;
}

void write_global_family(const std::string& path, const std::string& graph_path, const GlobalFamily& gf) {
    fs::path p(path);
    std::string stem = p.stem().string();
    std::ostringstream os;
    os << "graph " << graph_path << "\n";
    for (const auto& [v, fam] : gf.families) {
        std::string file = stem + "." + v + ".gf";
        write_family((p.parent_path() / file).string(), fam);
        os << "vertex " << v << " " << file << "\n";
    }
    write_text(path, os.str());
}

AdmissibleIsotopy parse_isotopy(const std::string& text, const std::string& origin) {
    AdmissibleIsotopy iso;
    std::istringstream is(text);
    int n = 0;
    for (std::string raw; std::getline(is, raw);) {
        ++n;
        std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        std::istringstream ls(s);
        std::string kw, chart;
        double v[6];
        ls >> kw >> chart;
        bool ok = kw == "step" && !chart.empty();
        for (double& x : v) ok = ok && static_cast<bool>(ls >> x);
        std::string H;
        std::getline(ls, H);
        H = trim(H);
        if (!ok || H.empty()) fail(origin, n, "expected 'step <chart> t0 t1 qmin qmax pmin pmax <H(t,q,p)>'");
        IsotopyEntry e;
        e.chart = chart;
        e.t0 = v[0];
        e.t1 = v[1];
        e.support = Box2{{v[2], v[3]}, {v[4], v[5]}};
        try {
            e.H = parse_function(H, {"t", "q", "p"});
        } catch (const Error& err) {
            fail(origin, n, err.what());
        }
        iso.entries.push_back(std::move(e));
    }
    return iso;
}

AdmissibleIsotopy read_isotopy(const std::string& path) { return parse_isotopy(read_text(path), path); }

std::string curve_csv(const SampledCurve& c) {
    std::string out = "branch,q,p,f,index";
    for (const auto& v : c.fiber_vars) out += "," + v;
    out += "\n";
    for (std::size_t b = 0; b < c.branches.size(); ++b)
        for (const auto& s : c.branches[b].samples) {
            out += std::to_string(b) + "," + format_number(s.q) + "," + format_number(s.p) + "," + format_number(s.f) +
                   "," + std::to_string(s.index);
            for (double x : s.fiber) out += "," + format_number(x);
            out += "\n";
        }
    return out;
}

SampledCurve parse_curve_csv(const std::string& text) {
    SampledCurve c;
    c.has_tangents = false;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw Error("empty CSV");
    std::vector<std::string> head;
    {
        std::istringstream hs(trim(line));
        for (std::string cell; std::getline(hs, cell, ',');) head.push_back(trim(cell));
    }
    if (head.size() < 5 || head[0] != "branch" || head[1] != "q" || head[2] != "p" || head[3] != "f" || head[4] != "index")
        throw Error("CSV header must start with branch,q,p,f,index");
    c.fiber_vars.assign(head.begin() + 5, head.end());
    int n = 1;
    long last = -1;
    while (std::getline(is, line)) {
        ++n;
        line = trim(line);
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(trim(cell));
        if (cells.size() != head.size()) fail("<csv>", n, "wrong number of columns");
        long b = static_cast<long>(to_double(cells[0], "<csv>", n));
        if (b != last) {
            c.branches.emplace_back();
            last = b;
        }
        CurveSample s;
        s.q = to_double(cells[1], "<csv>", n);
        s.p = to_double(cells[2], "<csv>", n);
        s.f = to_double(cells[3], "<csv>", n);
        s.index = static_cast<int>(to_double(cells[4], "<csv>", n));
        for (std::size_t i = 5; i < cells.size(); ++i) s.fiber.push_back(to_double(cells[i], "<csv>", n));
        c.branches.back().samples.push_back(std::move(s));
    }
    return c;
}

std::string curve_svg(const std::vector<PlotLayer>& layers, std::optional<Region> overlay) {
    // Fixed viewport: [-4, 4]^2 widened to cover the data, same scale on both axes.
    double lo = -4, hi = 4;
    for (const auto& l : layers)
        for (const auto& b : l.curve.branches)
            for (const auto& s : b.samples) {
                if (!std::isfinite(s.q) || !std::isfinite(s.p)) continue;
                lo = std::min({lo, s.q, s.p});
                hi = std::max({hi, s.q, s.p});
            }
    lo = std::floor(lo);
    hi = std::ceil(hi);
    const double size = 600, pad = 20;
    const double scale = (size - 2 * pad) / (hi - lo);
    auto X = [&](double q) { return format_number(std::round((pad + (q - lo) * scale) * 100) / 100); };
    auto Y = [&](double p) { return format_number(std::round((size - pad - (p - lo) * scale) * 100) / 100); };
    auto line = [&](double q0, double p0, double q1, double p1, const char* style) {
        return "<line x1=\"" + X(q0) + "\" y1=\"" + Y(p0) + "\" x2=\"" + X(q1) + "\" y2=\"" + Y(p1) + "\" " + style + "/>\n";
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
    os << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
    os << line(lo, 0, hi, 0, "stroke=\"#bbb\"") << line(0, lo, 0, hi, "stroke=\"#bbb\"");
    if (overlay) {
        const char* dash = "stroke=\"#d08000\" stroke-dasharray=\"4 3\"";
        switch (overlay->kind) {
        case Region::Kind::Band:
            os << line(lo, overlay->band, hi, overlay->band, dash) << line(lo, -overlay->band, hi, -overlay->band, dash);
            break;
        case Region::Kind::Perp: {
            double w = overlay->alternative ? 2 : 1;
            os << line(lo, -1, hi, -1, dash) << line(-w, lo, -w, hi, dash) << line(w, lo, w, hi, dash)
               << line(lo, 1, hi, 1, dash);
            break;
        }
        case Region::Kind::HalfPlanePositive:
            os << line(0, lo, 0, hi, dash);
            break;
        case Region::Kind::Box:
            os << line(overlay->qbox.lo, overlay->pbox.lo, overlay->qbox.hi, overlay->pbox.lo, dash)
               << line(overlay->qbox.hi, overlay->pbox.lo, overlay->qbox.hi, overlay->pbox.hi, dash)
               << line(overlay->qbox.hi, overlay->pbox.hi, overlay->qbox.lo, overlay->pbox.hi, dash)
               << line(overlay->qbox.lo, overlay->pbox.hi, overlay->qbox.lo, overlay->pbox.lo, dash);
            break;
        case Region::Kind::Univalent:
            os << "<circle cx=\"" << X(0) << "\" cy=\"" << Y(0) << "\" r=\"" << format_number(scale) << "\" fill=\"none\" "
               << dash << "/>\n"
               << line(0, 1, hi, 1, dash) << line(0, -1, hi, -1, dash);
            break;
        case Region::Kind::Trivalent:
            os << line(lo, 1, hi, 1, dash) << line(lo, -1, hi, -1, dash) << line(-1, lo, -1, hi, dash)
               << line(1, lo, 1, hi, dash);
            break;
        case Region::Kind::Plane:
            break;
        }
    }
    static const char* colors[] = {"#1f4e9c", "#b02020", "#207020", "#7030a0", "#a06000"};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const char* color = colors[i % 5];
        for (const auto& b : layers[i].curve.branches) {
            if (b.samples.empty()) continue;
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < b.samples.size(); ++k)
                os << (k ? " " : "") << X(b.samples[k].q) << "," << Y(b.samples[k].p);
            if (b.closed) os << " " << X(b.samples[0].q) << "," << Y(b.samples[0].p);
            os << "\"/>\n";
        }
        if (!layers[i].label.empty())
            os << "<text x=\"" << 30 << "\" y=\"" << 40 + 18 * i << "\" fill=\"" << color
               << "\" font-family=\"sans-serif\" font-size=\"14\">" << layers[i].label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace gfc::io
