// Critical locus tracing: seeded Gauss-Newton plus pseudo-arclength
// continuation in the total space (q, fiber).

#include <cmath>
#include <limits>
#include <sstream>

#include "gfc/genfam.hpp"
#include "hermite.hpp"

namespace gfc {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Point {
    Vec x;
    double F = 0.0;
    double Fq = 0.0;
    Vec R;      // fiber gradient
    Vec dFq;    // gradient of F_q over (q, fiber)
    Mat J;      // Jacobian of R over (q, fiber)
    Mat H;      // fiber Hessian
};

struct Bound {
    int var = -1;         // coordinate bound when >= 0
    int constraint = -1;  // window constraint otherwise
    double sign = 1.0;
    double level = 0.0;
};

double halton(std::size_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

class Locus {
public:
    Locus(const GeneratingFamily& fam, const TraceConfig& cfg) : fam_(fam), cfg_(cfg) {
        n_ = static_cast<int>(fam.fiber_dim());
        N_ = n_ + 1;
        auto vars = fam.total_variables();
        const auto& F = fam.F().tree();
        std::vector<expr::NodePtr> out = {F};
        auto Fq = expr::derivative(F, vars[0]);
        out.push_back(Fq);
        std::vector<expr::NodePtr> Fxi;
        for (int i = 0; i < n_; ++i) Fxi.push_back(expr::derivative(F, vars[i + 1]));
        out.insert(out.end(), Fxi.begin(), Fxi.end());
        for (int k = 0; k < N_; ++k) out.push_back(expr::derivative(Fq, vars[k]));
        for (int i = 0; i < n_; ++i)
            for (int k = 0; k < N_; ++k) out.push_back(expr::derivative(Fxi[i], vars[k]));
        prog_ = expr::Program(out, vars);

        std::vector<expr::NodePtr> cons;
        for (const auto& c : fam.constraints()) {
            cons.push_back(c.c.tree());
            for (int k = 0; k < N_; ++k) cons.push_back(expr::derivative(c.c.tree(), vars[k]));
        }
        cons_ = expr::Program(cons, vars);

        bounds_.push_back({0, -1, 1.0, fam.base_domain().lo});
        bounds_.push_back({0, -1, -1.0, fam.base_domain().hi});
        for (int i = 0; i < n_; ++i) {
            bounds_.push_back({i + 1, -1, 1.0, fam.fiber_box()[i].lo});
            bounds_.push_back({i + 1, -1, -1.0, fam.fiber_box()[i].hi});
        }
        for (std::size_t j = 0; j < fam.constraints().size(); ++j) {
            bounds_.push_back({-1, static_cast<int>(j), 1.0, fam.constraints()[j].range.lo});
            bounds_.push_back({-1, static_cast<int>(j), -1.0, fam.constraints()[j].range.hi});
        }
        out_.resize(prog_.num_outputs());
        cout_.resize(cons_.num_outputs());
    }

    int n() const { return n_; }
    int N() const { return N_; }

    void eval(const Vec& x, Point& P) const {
        prog_.evaluate(std::span<const double>(x.data(), x.size()), out_, scratch_);
        P.x = x;
        P.F = out_[0];
        P.Fq = out_[1];
        P.R.resize(n_);
        for (int i = 0; i < n_; ++i) P.R[i] = out_[2 + i];
        std::size_t at = 2 + n_;
        P.dFq.resize(N_);
        for (int k = 0; k < N_; ++k) P.dFq[k] = out_[at++];
        P.J.resize(n_, N_);
        for (int i = 0; i < n_; ++i)
            for (int k = 0; k < N_; ++k) P.J(i, k) = out_[at++];
        P.H = P.J.rightCols(n_);
        P.H = 0.5 * (P.H + P.H.transpose()).eval();
    }

    double bound_value(const Bound& b, const Vec& x, Vec* grad) const {
        if (b.var >= 0) {
            if (grad) {
                grad->setZero(N_);
                (*grad)[b.var] = b.sign;
            }
            return b.sign * (x[b.var] - b.level);
        }
        cons_.evaluate(std::span<const double>(x.data(), x.size()), cout_, cscratch_);
        std::size_t base = static_cast<std::size_t>(b.constraint) * (N_ + 1);
        if (grad) {
            grad->resize(N_);
            for (int k = 0; k < N_; ++k) (*grad)[k] = b.sign * cout_[base + 1 + k];
        }
        return b.sign * (cout_[base] - b.level);
    }

    /// Smallest bound value; negative means outside the window.
    double margin(const Vec& x, int* which = nullptr) const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < bounds_.size(); ++i) {
            double v = bound_value(bounds_[i], x, nullptr);
            if (v < m) {
                m = v;
                if (which) *which = static_cast<int>(i);
            }
        }
        return m;
    }

    const std::vector<Bound>& bounds() const { return bounds_; }

    double window_scale() const {
        double s = fam_.base_domain().length();
        for (const auto& b : fam_.fiber_box()) s = std::max(s, b.length());
        return s;
    }

    Vec window_point(std::size_t index) const {
        Vec x(N_);
        x[0] = fam_.base_domain().lo + halton(index, kPrimes[0]) * fam_.base_domain().length();
        for (int i = 0; i < n_; ++i) {
            const auto& b = fam_.fiber_box()[i];
            x[i + 1] = b.lo + halton(index, kPrimes[(i + 1) % 20]) * b.length();
        }
        return x;
    }

    /// Unit null vector of J, oriented along `prev` when given.
    Vec tangent(const Point& P, const Vec* prev) const {
        Vec t(N_);
        if (n_ == 0) {
            t.setZero();
            t[0] = 1.0;
        } else {
            Eigen::JacobiSVD<Mat> svd(P.J, Eigen::ComputeFullV);
            const auto& sv = svd.singularValues();
            double smax = sv[0];
            double smin = sv[n_ - 1];
            if (!(smin > cfg_.rank_tol * std::max(1.0, smax))) {
                std::ostringstream os;
                os << "transversality failure: fiber derivative is rank deficient at q=" << P.x[0]
                   << " (smallest singular value " << smin << ")";
                throw Error(os.str());
            }
            t = svd.matrixV().col(N_ - 1);
        }
        if (prev && t.dot(*prev) < 0) t = -t;
        else if (!prev && t[0] < 0) t = -t;
        return t;
    }

    /// Newton on {R = 0, dir . (x - anchor) = 0}.
    bool correct(Vec& x, const Vec& anchor, const Vec& dir, double radius) const {
        Point P;
        Mat A(N_, N_);
        Vec b(N_);
        for (int it = 0; it < 16; ++it) {
            eval(x, P);
            A.topRows(n_) = P.J;
            A.row(n_) = dir.transpose();
            b.head(n_) = P.R;
            b[n_] = dir.dot(x - anchor);
            Vec dx = A.partialPivLu().solve(b);
            if (!dx.allFinite()) return false;
            x -= dx;
            if ((x - anchor).norm() > radius) return false;
            if (dx.norm() <= 1e-14 * (1.0 + x.norm())) break;
        }
        eval(x, P);
        return P.R.size() == 0 || P.R.norm() <= cfg_.max_residual * 0.1;
    }

    /// Newton on {R = 0, bound = 0}.
    bool land(Vec& x, const Bound& bd, const Vec& anchor, double radius) const {
        Point P;
        Mat A(N_, N_);
        Vec b(N_), g(N_);
        for (int it = 0; it < 20; ++it) {
            eval(x, P);
            double gv = bound_value(bd, x, &g);
            A.topRows(n_) = P.J;
            A.row(n_) = g.transpose();
            b.head(n_) = P.R;
            b[n_] = gv;
            Vec dx = A.partialPivLu().solve(b);
            if (!dx.allFinite()) return false;
            x -= dx;
            if ((x - anchor).norm() > radius) return false;
            if (dx.norm() <= 1e-15 * (1.0 + x.norm())) break;
        }
        eval(x, P);
        return (P.R.size() == 0 || P.R.norm() <= cfg_.max_residual * 0.1) &&
               std::fabs(bound_value(bd, x, nullptr)) <= 1e-12 * (1.0 + x.norm());
    }

    /// Min-norm Gauss-Newton from a seed point.
    bool project(Vec& x) const {
        if (n_ == 0) return true;
        Point P;
        double scale = window_scale();
        Vec start = x;
        for (int it = 0; it < 40; ++it) {
            eval(x, P);
            if (!P.R.allFinite()) return false;
            if (P.R.norm() <= cfg_.newton_tol) break;
            Vec dx = P.J.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(P.R);
            if (!dx.allFinite()) return false;
            double len = dx.norm();
            if (len > scale) dx *= scale / len;
            x -= dx;
            if ((x - start).norm() > 4.0 * scale) return false;
        }
        eval(x, P);
        return P.R.allFinite() && P.R.norm() <= cfg_.max_residual * 0.1;
    }

    CurveSample sample(const Point& P, const Vec& t) const {
        CurveSample s;
        s.q = P.x[0];
        s.p = P.Fq;
        s.f = P.F;
        s.fiber.assign(P.x.data() + 1, P.x.data() + N_);
        s.dq = t[0];
        s.dp = P.dFq.dot(t);
        if (n_ > 0) {
            Eigen::SelfAdjointEigenSolver<Mat> es(P.H, Eigen::EigenvaluesOnly);
            const auto& ev = es.eigenvalues();
            double thr = cfg_.fold_tol * std::max(1.0, ev.cwiseAbs().maxCoeff());
            s.fold = ev.cwiseAbs().minCoeff() < thr;
            for (int i = 0; i < n_; ++i)
                if (ev[i] < -thr) ++s.index;
        }
        return s;
    }

private:
    const GeneratingFamily& fam_;
    const TraceConfig& cfg_;
    int n_ = 0, N_ = 1;
    expr::Program prog_, cons_;
    std::vector<Bound> bounds_;
    mutable std::vector<double> out_, cout_, scratch_, cscratch_;
};

struct Node {
    Vec x;
    Vec t;
};

struct Ray {
    std::vector<Node> nodes;  // excluding the start
    bool closed = false;
};

Eigen::Vector2d image(const Point& P) { return {P.x[0], P.Fq}; }
Eigen::Vector2d image_tangent(const Point& P, const Vec& t) { return {t[0], P.dFq.dot(t)}; }

Ray trace_ray(const Locus& L, const TraceConfig& cfg, const Vec& x0, const Vec& t0, std::vector<std::string>& warnings,
              std::size_t budget) {
    Ray ray;
    Vec x = x0, t = t0;
    Point P0, P1, Pm;
    L.eval(x, P0);
    double h = cfg.max_step * 0.25;
    double travelled = 0.0;
    const double cos_max = std::cos(0.35);
    while (ray.nodes.size() < budget) {
        if (h < cfg.min_step) {
            std::ostringstream os;
            os << "continuation step underflow near q=" << x[0];
            warnings.push_back(os.str());
            return ray;
        }
        Vec xp = x + h * t;
        Vec x1 = xp;
        if (!L.correct(x1, xp, t, 2.0 * h + 1e-12)) {
            h *= 0.5;
            continue;
        }
        L.eval(x1, P1);
        Vec t1 = L.tangent(P1, &t);
        if (t.dot(t1) < cos_max) {
            h *= 0.5;
            continue;
        }
        double img = (image(P1) - image(P0)).norm();
        if (img > cfg.max_image_step) {
            h *= std::max(0.1, 0.9 * cfg.max_image_step / img);
            continue;
        }
        // Window exit: land exactly on the first boundary crossed.
        int which = -1;
        if (L.margin(x1, &which) < -1e-12) {
            double best_tau = 2.0;
            int best = -1;
            for (std::size_t k = 0; k < L.bounds().size(); ++k) {
                double g1 = L.bound_value(L.bounds()[k], x1, nullptr);
                if (g1 >= 0) continue;
                double g0 = L.bound_value(L.bounds()[k], x, nullptr);
                double tau = g0 <= 0 ? 0.0 : g0 / (g0 - g1);
                if (tau < best_tau) {
                    best_tau = tau;
                    best = static_cast<int>(k);
                }
            }
            Vec y = x + best_tau * (x1 - x);
            double radius = 2.0 * (x1 - x).norm() + 1e-12;
            if (L.land(y, L.bounds()[best], x, radius) && L.margin(y) >= -1e-12) {
                if ((y - x).norm() > 1e-12) {
                    Point Py;
                    L.eval(y, Py);
                    Vec ty = L.tangent(Py, &t);
                    ray.nodes.push_back({y, ty});
                }
                return ray;
            }
            h *= 0.5;
            continue;
        }
        // Accuracy: compare the corrected midpoint with the Hermite cubic.
        double ds = (x1 - x).norm();
        Vec xm_pred = 0.5 * (x + x1) + ds / 8.0 * (t - t1);
        Vec dir = (x1 - x) / ds;
        Vec xm = xm_pred;
        if (!L.correct(xm, xm_pred, dir, ds)) {
            h *= 0.5;
            continue;
        }
        L.eval(xm, Pm);
        Eigen::Vector2d im_pred =
            0.5 * (image(P0) + image(P1)) + ds / 8.0 * (image_tangent(P0, t) - image_tangent(P1, t1));
        double dev = (image(Pm) - im_pred).norm();
        double dev_x = (xm - xm_pred).norm();
        double ratio = std::max(dev / cfg.cubic_tol, dev_x / (100.0 * cfg.cubic_tol));
        if (ratio > 1.0) {
            h *= std::clamp(0.9 * std::pow(ratio, -0.25), 0.2, 0.7);
            continue;
        }
        // Loop closure: the start lies on this segment.
        if (travelled > 2.0 * ds) {
            detail::HermiteSegment<Vec> seg{x, x1, t * ds, t1 * ds};
            if (detail::closest_on(seg, x0).distance <= 1e-6) {
                ray.closed = true;
                return ray;
            }
        }
        ray.nodes.push_back({x1, t1});
        travelled += ds;
        x = x1;
        t = t1;
        P0 = P1;
        h = std::min(cfg.max_step, h * std::clamp(0.9 * std::pow(std::max(ratio, 1e-12), -0.25), 1.0, 2.0));
    }
    std::ostringstream os;
    os << "sample budget exhausted near q=" << x[0];
    warnings.push_back(os.str());
    return ray;
}

struct TracedBranch {
    std::vector<Node> nodes;
    bool closed = false;
    Vec lo, hi;  // bounding box of segment control hulls
};

bool near_branch(const TracedBranch& b, const Vec& y, double tol) {
    if (((y - b.lo).array() < -tol).any() || ((y - b.hi).array() > tol).any()) return false;
    std::size_t m = b.nodes.size();
    if (m == 1) return (b.nodes[0].x - y).norm() <= tol;
    std::size_t segs = b.closed ? m : m - 1;
    for (std::size_t i = 0; i < segs; ++i) {
        const Node& a = b.nodes[i];
        const Node& c = b.nodes[(i + 1) % m];
        double ds = (c.x - a.x).norm();
        Vec c1 = a.x + a.t * ds / 3.0, c2 = c.x - c.t * ds / 3.0;
        Vec lo = a.x.cwiseMin(c.x).cwiseMin(c1).cwiseMin(c2);
        Vec hi = a.x.cwiseMax(c.x).cwiseMax(c1).cwiseMax(c2);
        if (((y - lo).array() < -tol).any() || ((y - hi).array() > tol).any()) continue;
        detail::HermiteSegment<Vec> seg{a.x, c.x, a.t * ds, c.t * ds};
        if (detail::closest_on(seg, y).distance <= tol) return true;
    }
    return false;
}

}  // namespace

SampledCurve critical_locus(const GeneratingFamily& fam, const TraceConfig& cfg) {
    Locus L(fam, cfg);
    SampledCurve curve;
    curve.fiber_vars = fam.fiber_vars();
    std::vector<TracedBranch> traced;
    std::size_t total = 0;
    int late_branches = 0;

    for (int pass = 0; pass < 2; ++pass) {
        for (int k = 0; k < cfg.seeds; ++k) {
            std::size_t idx = static_cast<std::size_t>(pass) * cfg.seeds + k + 1;
            Vec y = L.window_point(idx);
            if (!L.project(y)) continue;
            if (L.margin(y) < -1e-12) continue;
            bool known = false;
            for (const auto& b : traced)
                if (near_branch(b, y, cfg.dedupe_tol)) {
                    known = true;
                    break;
                }
            if (known) continue;

            Point P;
            L.eval(y, P);
            Vec t0 = L.tangent(P, nullptr);
            std::size_t budget = cfg.max_samples > total ? cfg.max_samples - total : 0;
            if (budget == 0) {
                curve.warnings.push_back("sample budget exhausted; remaining seeds skipped");
                break;
            }
            Ray fwd = trace_ray(L, cfg, y, t0, curve.warnings, budget);
            TracedBranch br;
            if (fwd.closed) {
                br.nodes.push_back({y, t0});
                br.nodes.insert(br.nodes.end(), fwd.nodes.begin(), fwd.nodes.end());
                br.closed = true;
            } else {
                Vec mt0 = -t0;
                Ray bwd = trace_ray(L, cfg, y, mt0, curve.warnings, budget - fwd.nodes.size());
                for (auto it = bwd.nodes.rbegin(); it != bwd.nodes.rend(); ++it) br.nodes.push_back({it->x, -it->t});
                br.nodes.push_back({y, t0});
                br.nodes.insert(br.nodes.end(), fwd.nodes.begin(), fwd.nodes.end());
            }
            br.lo = br.hi = br.nodes[0].x;
            for (const auto& nd : br.nodes) {
                br.lo = br.lo.cwiseMin(nd.x);
                br.hi = br.hi.cwiseMax(nd.x);
            }
            // Hermite bulge allowance for the prefilter.
            br.lo.array() -= cfg.max_step;
            br.hi.array() += cfg.max_step;
            total += br.nodes.size();
            if (pass == 1) ++late_branches;
            traced.push_back(std::move(br));
        }
    }
    if (late_branches > 0) {
        std::ostringstream os;
        os << "seed exhaustion: " << late_branches
           << " branch(es) found only by the second seed pass; the locus may have further components";
        curve.warnings.push_back(os.str());
    }

    for (const auto& br : traced) {
        Branch out;
        out.closed = br.closed;
        double s = 0.0;
        Point P;
        for (std::size_t i = 0; i < br.nodes.size(); ++i) {
            if (i > 0) s += (br.nodes[i].x - br.nodes[i - 1].x).norm();
            L.eval(br.nodes[i].x, P);
            CurveSample cs = L.sample(P, br.nodes[i].t);
            cs.s = s;
            out.samples.push_back(std::move(cs));
        }
        curve.branches.push_back(std::move(out));
    }
    return curve;
}

}  // namespace gfc
