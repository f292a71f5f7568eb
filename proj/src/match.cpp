// Curve comparison: symmetric Hausdorff distance between sampled curves
// (segments interpolated by Hermite cubics), potential offsets and the
// fiber-index offset.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <unordered_map>

#include "gfc/genfam.hpp"
#include "hermite.hpp"

namespace gfc {

namespace {

using V2 = Eigen::Vector2d;

struct Segment {
    detail::HermiteSegment<V2> geo;
    const CurveSample* a = nullptr;
    const CurveSample* b = nullptr;
    double ds = 0.0;
    V2 lo, hi;
};

struct Hit {
    double distance = std::numeric_limits<double>::infinity();
    const Segment* seg = nullptr;
    double t = 0.0;
};

class SegmentIndex {
public:
    explicit SegmentIndex(const SampledCurve& c) {
        for (const auto& br : c.branches) {
            const auto& s = br.samples;
            if (s.empty()) continue;
            if (s.size() == 1) {
                add(s[0], s[0], false);
                continue;
            }
            for (std::size_t i = 0; i + 1 < s.size(); ++i) add(s[i], s[i + 1], c.has_tangents);
            if (br.closed) add(s.back(), s.front(), c.has_tangents);
        }
        if (segs_.empty()) return;
        lo_ = segs_[0].lo;
        hi_ = segs_[0].hi;
        std::vector<double> sizes;
        for (const auto& sg : segs_) {
            lo_ = lo_.cwiseMin(sg.lo);
            hi_ = hi_.cwiseMax(sg.hi);
            sizes.push_back((sg.hi - sg.lo).maxCoeff());
        }
        std::nth_element(sizes.begin(), sizes.begin() + sizes.size() / 2, sizes.end());
        double extent = std::max((hi_ - lo_).maxCoeff(), 1e-9);
        cell_ = std::max({sizes[sizes.size() / 2], extent / 4096.0, 1e-9});
        for (std::size_t i = 0; i < segs_.size(); ++i) {
            auto [x0, y0] = cell_of(segs_[i].lo);
            auto [x1, y1] = cell_of(segs_[i].hi);
            if (static_cast<std::int64_t>(x1 - x0 + 1) * (y1 - y0 + 1) > 4096) {
                big_.push_back(i);
                continue;
            }
            for (std::int64_t x = x0; x <= x1; ++x)
                for (std::int64_t y = y0; y <= y1; ++y) grid_[key(x, y)].push_back(i);
        }
        auto [cx0, cy0] = cell_of(lo_);
        auto [cx1, cy1] = cell_of(hi_);
        cmin_ = {cx0, cy0};
        cmax_ = {cx1, cy1};
    }

    bool empty() const { return segs_.empty(); }

    Hit nearest(const V2& x) const {
        Hit best;
        if (segs_.empty()) return best;
        for (std::size_t i : big_) test(i, x, best);
        auto [cx, cy] = cell_of(x);
        std::int64_t far = std::max({std::abs(cx - cmin_.first), std::abs(cx - cmax_.first),
                                     std::abs(cy - cmin_.second), std::abs(cy - cmax_.second)});
        // Distance from x to the populated box bounds where the ring search may start.
        std::int64_t r0 = std::max({cmin_.first - cx, cx - cmax_.first, cmin_.second - cy, cy - cmax_.second,
                                    std::int64_t{0}});
        if (r0 > 64) {
            for (std::size_t i = 0; i < segs_.size(); ++i) test(i, x, best);
            return best;
        }
        std::set<std::size_t> seen;
        for (std::int64_t r = r0; r <= far; ++r) {
            if (r > r0 + 64) {
                for (std::size_t i = 0; i < segs_.size(); ++i) test(i, x, best);
                return best;
            }
            for (std::int64_t ix = cx - r; ix <= cx + r; ++ix) {
                for (std::int64_t iy = cy - r; iy <= cy + r; ++iy) {
                    if (std::max(std::abs(ix - cx), std::abs(iy - cy)) != r) continue;
                    auto it = grid_.find(key(ix, iy));
                    if (it == grid_.end()) continue;
                    for (std::size_t i : it->second)
                        if (seen.insert(i).second) test(i, x, best);
                }
            }
            if (best.distance <= static_cast<double>(r) * cell_) break;
        }
        return best;
    }

private:
    void add(const CurveSample& a, const CurveSample& b, bool tangents) {
        Segment sg;
        sg.a = &a;
        sg.b = &b;
        sg.ds = std::fabs(b.s - a.s);
        V2 p0(a.q, a.p), p1(b.q, b.p);
        V2 m0 = tangents ? V2(a.dq, a.dp) * sg.ds : V2(p1 - p0);
        V2 m1 = tangents ? V2(b.dq, b.dp) * sg.ds : V2(p1 - p0);
        sg.geo = {p0, p1, m0, m1};
        V2 c1 = p0 + m0 / 3.0, c2 = p1 - m1 / 3.0;
        sg.lo = p0.cwiseMin(p1).cwiseMin(c1).cwiseMin(c2);
        sg.hi = p0.cwiseMax(p1).cwiseMax(c1).cwiseMax(c2);
        segs_.push_back(sg);
    }

    void test(std::size_t i, const V2& x, Hit& best) const {
        const Segment& sg = segs_[i];
        double dx = std::max({sg.lo.x() - x.x(), 0.0, x.x() - sg.hi.x()});
        double dy = std::max({sg.lo.y() - x.y(), 0.0, x.y() - sg.hi.y()});
        if (std::hypot(dx, dy) > best.distance) return;
        auto c = detail::closest_on(sg.geo, x);
        if (c.distance < best.distance) best = {c.distance, &sg, c.t};
    }

    std::pair<std::int64_t, std::int64_t> cell_of(const V2& x) const {
        return {static_cast<std::int64_t>(std::floor(x.x() / cell_)), static_cast<std::int64_t>(std::floor(x.y() / cell_))};
    }
    static std::int64_t key(std::int64_t x, std::int64_t y) { return (x << 32) ^ (y & 0xffffffff); }

    std::vector<Segment> segs_;
    std::vector<std::size_t> big_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> grid_;
    V2 lo_, hi_;
    double cell_ = 1.0;
    std::pair<std::int64_t, std::int64_t> cmin_, cmax_;
};

double potential_at(const Hit& h, bool tangents) {
    const Segment& s = *h.seg;
    double t = h.t;
    if (!tangents || s.a == s.b) return (1 - t) * s.a->f + t * s.b->f;
    double m0 = s.a->p * s.a->dq * s.ds;
    double m1 = s.b->p * s.b->dq * s.ds;
    double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * s.a->f + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * s.b->f + (t3 - t2) * m1;
}

bool in_window(const MatchOptions& o, const CurveSample& s) { return !o.window || o.window->contains(s.q, s.p); }

}  // namespace

std::string MatchReport::index_offset_text() const {
    if (!index_constant) return "nonconstant";
    if (!index_offset) return "undetermined";
    return std::to_string(*index_offset);
}

MatchReport curves_match(const SampledCurve& a, const SampledCurve& b, double tol, PotentialMode mode,
                         const MatchOptions& opts) {
    MatchReport rep;
    double ptol = opts.potential_tol < 0 ? std::max(tol, 1e-6) : opts.potential_tol;
    SegmentIndex ia(a), ib(b);

    bool a_has = false, b_has = false;
    for (const auto& br : a.branches)
        for (const auto& s : br.samples) a_has = a_has || in_window(opts, s);
    for (const auto& br : b.branches)
        for (const auto& s : br.samples) b_has = b_has || in_window(opts, s);
    if (!a_has && !b_has) {
        rep.matched = true;
        rep.potential_offset_per_branch.assign(a.branches.size(), 0.0);
        rep.potential_spread_per_branch.assign(a.branches.size(), 0.0);
        return rep;
    }
    if (ia.empty() || ib.empty()) {
        rep.hausdorff_distance = std::numeric_limits<double>::infinity();
        rep.potential_offset_per_branch.assign(a.branches.size(), 0.0);
        rep.potential_spread_per_branch.assign(a.branches.size(), 0.0);
        rep.index_offset.reset();
        return rep;
    }

    std::set<int> index_offsets;
    bool potential_ok = true;
    for (const auto& br : a.branches) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
        int count = 0;
        for (const auto& s : br.samples) {
            if (!in_window(opts, s)) continue;
            Hit h = ib.nearest(V2(s.q, s.p));
            rep.hausdorff_distance = std::max(rep.hausdorff_distance, h.distance);
            double off = s.f - potential_at(h, b.has_tangents);
            lo = std::min(lo, off);
            hi = std::max(hi, off);
            sum += off;
            ++count;
            if (mode == PotentialMode::Exact && std::fabs(off) > ptol) potential_ok = false;
            const CurveSample* e0 = h.seg->a;
            const CurveSample* e1 = h.seg->b;
            if (!s.fold && !e0->fold && !e1->fold && e0->index == e1->index)
                index_offsets.insert(e0->index - s.index);
        }
        rep.potential_offset_per_branch.push_back(count ? sum / count : 0.0);
        rep.potential_spread_per_branch.push_back(count ? hi - lo : 0.0);
        if (mode == PotentialMode::PerComponentOffset && count && hi - lo > ptol) potential_ok = false;
    }
    for (const auto& br : b.branches)
        for (const auto& s : br.samples) {
            if (!in_window(opts, s)) continue;
            rep.hausdorff_distance = std::max(rep.hausdorff_distance, ia.nearest(V2(s.q, s.p)).distance);
        }

    if (index_offsets.size() == 1) rep.index_offset = *index_offsets.begin();
    rep.index_constant = index_offsets.size() <= 1;
    rep.matched = rep.hausdorff_distance <= tol && (mode == PotentialMode::Ignore || potential_ok);
    return rep;
}

}  // namespace gfc
