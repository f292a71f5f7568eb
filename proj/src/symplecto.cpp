#include "gfc/symplecto.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace gfc {

namespace {

using State = std::array<double, 7>;  // q, p, J11, J12, J21, J22, h

constexpr double kFlowTol = 1e-9;

const std::vector<std::string> kFlowVars = {"t", "q", "p"};

// Potential correction of x -> A x + c: psi^* lambda - lambda = dh.
double affine_potential(const Mat2& A, const Vec2& c, const Vec2& x) {
    double a = A(0, 0), b = A(0, 1), g = A(1, 0), d = A(1, 1);
    double q = x[0], p = x[1];
    return a * g * q * q / 2 + b * d * p * p / 2 + b * g * q * p + c[1] * (a * q + b * p);
}

class FlowRhs {
public:
    explicit FlowRhs(const expr::Program& prog) : prog_(prog), out_(6) {}

    State operator()(double t, const State& y) {
        double x[3] = {t, y[0], y[1]};
        prog_.evaluate(x, out_, scratch_);
        double H = out_[0], Hq = out_[1], Hp = out_[2], Hqq = out_[3], Hqp = out_[4], Hpp = out_[5];
        State d;
        d[0] = Hp;
        d[1] = -Hq;
        // d/dt J = DX J with DX = [[Hpq, Hpp], [-Hqq, -Hqp]].
        d[2] = Hqp * y[2] + Hpp * y[4];
        d[3] = Hqp * y[3] + Hpp * y[5];
        d[4] = -Hqq * y[2] - Hqp * y[4];
        d[5] = -Hqq * y[3] - Hqp * y[5];
        d[6] = y[1] * Hp - H;
        return d;
    }

private:
    const expr::Program& prog_;
    std::vector<double> out_, scratch_;
};

State axpy(const State& y, double a, const State& k) {
    State r;
    for (int i = 0; i < 7; ++i) r[i] = y[i] + a * k[i];
    return r;
}

State rk4(FlowRhs& f, double t, const State& y, double dt) {
    State k1 = f(t, y);
    State k2 = f(t + dt / 2, axpy(y, dt / 2, k1));
    State k3 = f(t + dt / 2, axpy(y, dt / 2, k2));
    State k4 = f(t + dt, axpy(y, dt, k3));
    State r;
    for (int i = 0; i < 7; ++i) r[i] = y[i] + dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return r;
}

Symplectomorphism::Image integrate(const expr::Program& prog, double t0, double t1, const Vec2& x0) {
    FlowRhs f(prog);
    State y = {x0[0], x0[1], 1, 0, 0, 1, 0};
    double span = t1 - t0;
    Symplectomorphism::Image img;
    if (span != 0.0) {
        double dir = span > 0 ? 1.0 : -1.0;
        double t = t0;
        double dt = dir * std::min(std::fabs(span), 0.05);
        const double min_dt = 1e-12 * std::max(1.0, std::fabs(span));
        while (dir * (t1 - t) > 0) {
            if (dir * (t + dt - t1) > 0) dt = t1 - t;
            State full = rk4(f, t, y, dt);
            State half = rk4(f, t, y, dt / 2);
            half = rk4(f, t + dt / 2, half, dt / 2);
            double err = 0.0;
            for (int i : {0, 1, 6}) err = std::max(err, std::fabs(half[i] - full[i]) / 15.0);
            for (int i = 2; i < 6; ++i) err = std::max(err, std::fabs(half[i] - full[i]) / 15.0 * 1e-3);
            // The roundoff floor keeps tiny steps from chasing noise in the right-hand side.
            double scale = 1.0;
            for (int i = 0; i < 7; ++i) scale = std::max(scale, std::fabs(y[i]));
            double allowed = std::max(kFlowTol * std::fabs(dt), 1e3 * std::numeric_limits<double>::epsilon() * scale);
            if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
            if (err <= allowed) {
                for (int i = 0; i < 7; ++i) y[i] = half[i] + (half[i] - full[i]) / 15.0;
                t += dt;
                double grow = err > 0 ? 0.9 * std::pow(allowed / err, 0.25) : 2.0;
                dt *= std::clamp(grow, 1.0, 2.0);
            } else {
                dt *= std::clamp(0.9 * std::pow(allowed / err, 0.25), 0.1, 0.7);
                if (std::fabs(dt) < min_dt) {
                    std::ostringstream os;
                    os << "flow integration step underflow at t=" << t << " from (" << x0[0] << ", " << x0[1] << ")";
                    throw Error(os.str());
                }
            }
        }
    }
    img.x = Vec2(y[0], y[1]);
    img.J << y[2], y[3], y[4], y[5];
    img.h = y[6];
    return img;
}

}  // namespace

Symplectomorphism::Symplectomorphism() = default;

Symplectomorphism Symplectomorphism::identity() { return Symplectomorphism(); }

Symplectomorphism Symplectomorphism::quarter_turn() {
    Symplectomorphism s;
    s.kind_ = Kind::QuarterTurn;
    s.A_ << 0, 1, -1, 0;
    return s;
}

Symplectomorphism Symplectomorphism::quarter_turn_inverse() {
    Symplectomorphism s;
    s.kind_ = Kind::QuarterTurnInverse;
    s.A_ << 0, -1, 1, 0;
    return s;
}

Symplectomorphism Symplectomorphism::affine(const Mat2& A, const Vec2& c) {
    if (std::fabs(A.determinant() - 1.0) > 1e-12) throw Error("affine map is not symplectic (det != 1)");
    Symplectomorphism s;
    s.A_ = A;
    s.c_ = c;
    return s;
}

Symplectomorphism Symplectomorphism::flow(const SmoothFunction& H, double t0, double t1, std::optional<Box2> support) {
    Symplectomorphism s;
    s.kind_ = Kind::HamiltonianFlow;
    for (const auto& v : H.free_variables())
        if (v != "t" && v != "q" && v != "p") throw Error("Hamiltonian depends on '" + v + "'; expected t, q, p");
    s.H_ = H.with_variables(kFlowVars);
    s.t0_ = t0;
    s.t1_ = t1;
    s.support_ = support;
    const auto& T = s.H_.tree();
    auto Hq = expr::derivative(T, "q");
    auto Hp = expr::derivative(T, "p");
    s.prog_ = std::make_shared<expr::Program>(
        std::vector<expr::NodePtr>{T, Hq, Hp, expr::derivative(Hq, "q"), expr::derivative(Hq, "p"),
                                   expr::derivative(Hp, "p")},
        kFlowVars);
    return s;
}

Symplectomorphism Symplectomorphism::compose(std::vector<Symplectomorphism> maps) {
    Symplectomorphism s;
    s.kind_ = Kind::Composition;
    s.parts_ = std::move(maps);
    return s;
}

Symplectomorphism::Image Symplectomorphism::apply_full(const Vec2& x) const {
    Image img;
    switch (kind_) {
    case Kind::QuarterTurn:
    case Kind::QuarterTurnInverse:
    case Kind::Affine:
        img.x = A_ * x + c_;
        img.J = A_;
        img.h = affine_potential(A_, c_, x);
        return img;
    case Kind::HamiltonianFlow:
        if (support_ && !support_->contains(x)) {
            img.x = x;
            img.J = Mat2::Identity();
            img.h = 0.0;
            return img;
        }
        return integrate(*prog_, t0_, t1_, x);
    case Kind::Composition: {
        img.x = x;
        img.J = Mat2::Identity();
        img.h = 0.0;
        for (const auto& m : parts_) {
            Image step = m.apply_full(img.x);
            img.h += step.h;
            img.J = step.J * img.J;
            img.x = step.x;
        }
        return img;
    }
    }
    return img;
}

Symplectomorphism Symplectomorphism::inverse() const {
    switch (kind_) {
    case Kind::QuarterTurn: return quarter_turn_inverse();
    case Kind::QuarterTurnInverse: return quarter_turn();
    case Kind::Affine: {
        Mat2 Ai = A_.inverse();
        return affine(Ai, -Ai * c_);
    }
    case Kind::HamiltonianFlow: return flow(H_, t1_, t0_, support_);
    case Kind::Composition: {
        std::vector<Symplectomorphism> inv;
        for (auto it = parts_.rbegin(); it != parts_.rend(); ++it) inv.push_back(it->inverse());
        return compose(std::move(inv));
    }
    }
    return identity();
}

Symplectomorphism Symplectomorphism::conjugate_by(const Symplectomorphism& T) const {
    if (T.kind_ == Kind::HamiltonianFlow || T.kind_ == Kind::Composition)
        throw Error("conjugation requires an affine map");
    switch (kind_) {
    case Kind::HamiltonianFlow: {
        // T o phi_H o T^{-1} is the flow of H o T^{-1}.
        Mat2 Ai = T.A_.inverse();
        Vec2 ci = -Ai * T.c_;
        auto q = SmoothFunction::variable("q"), p = SmoothFunction::variable("p");
        auto lin = [&](double a, double b, double c) {
            return SmoothFunction::constant(a, {"t", "q", "p"}) * q + SmoothFunction::constant(b, {"t", "q", "p"}) * p +
                   SmoothFunction::constant(c, {"t", "q", "p"});
        };
        auto Hc = H_.substitute({{"q", lin(Ai(0, 0), Ai(0, 1), ci[0])}, {"p", lin(Ai(1, 0), Ai(1, 1), ci[1])}},
                                kFlowVars);
        std::optional<Box2> sup;
        if (support_) {
            Vec2 corners[4] = {{support_->q.lo, support_->p.lo}, {support_->q.lo, support_->p.hi},
                               {support_->q.hi, support_->p.lo}, {support_->q.hi, support_->p.hi}};
            Vec2 lo = T.apply(corners[0]), hi = lo;
            for (const auto& c : corners) {
                lo = lo.cwiseMin(T.apply(c));
                hi = hi.cwiseMax(T.apply(c));
            }
            sup = Box2{{lo[0], hi[0]}, {lo[1], hi[1]}};
        }
        return flow(Hc, t0_, t1_, sup);
    }
    case Kind::Composition: {
        std::vector<Symplectomorphism> c;
        for (const auto& m : parts_) c.push_back(m.conjugate_by(T));
        return compose(std::move(c));
    }
    default: {
        Mat2 Ti = T.A_.inverse();
        Mat2 A = T.A_ * A_ * Ti;
        Vec2 c = T.A_ * (c_ - A_ * Ti * T.c_) + T.c_;
        return affine(A, c);
    }
    }
}

std::string Symplectomorphism::describe() const {
    std::ostringstream os;
    switch (kind_) {
    case Kind::QuarterTurn: os << "W"; break;
    case Kind::QuarterTurnInverse: os << "W^-1"; break;
    case Kind::Affine: os << "affine[" << A_(0, 0) << " " << A_(0, 1) << "; " << A_(1, 0) << " " << A_(1, 1) << "] + (" << c_[0] << ", " << c_[1] << ")"; break;
    case Kind::HamiltonianFlow: os << "flow of " << H_.to_string() << " over [" << t0_ << ", " << t1_ << "]"; break;
    case Kind::Composition:
        os << "compose(";
        for (std::size_t i = 0; i < parts_.size(); ++i) os << (i ? ", " : "") << parts_[i].describe();
        os << ")";
        break;
    }
    return os.str();
}

SampledCurve transform_curve(const Symplectomorphism& S, const SampledCurve& c) {
    SampledCurve out = c;
    for (auto& br : out.branches)
        for (auto& s : br.samples) {
            auto img = S.apply_full(Vec2(s.q, s.p));
            Vec2 tan = img.J * Vec2(s.dq, s.dp);
            s.q = img.x[0];
            s.p = img.x[1];
            s.f += img.h;
            s.dq = tan[0];
            s.dp = tan[1];
        }
    return out;
}

Eigen::Vector4d varpi(const Eigen::Vector4d& x) {
    double u = x[0], l = x[1], s = x[2], v = x[3];
    return {(u + s) / 2, (l + v) / 2, v - l, u - s};
}

Eigen::Vector4d varpi_inv(const Eigen::Vector4d& y) {
    double q1 = y[0], q2 = y[1], p1 = y[2], p2 = y[3];
    return {q1 + p2 / 2, q2 - p1 / 2, q1 - p2 / 2, p1 / 2 + q2};
}

std::vector<std::string> SympGenFam::variables() const {
    std::vector<std::string> v = {base1, base2};
    v.insert(v.end(), fiber_vars.begin(), fiber_vars.end());
    return v;
}

SympGenFam make_W_genfam(bool inverse) {
    SympGenFam sg;
    Eigen::Matrix2d m = Eigen::Matrix2d::Identity() * (inverse ? 1.0 : -1.0);
    sg.G = SmoothFunction::quadratic_form({sg.base1, sg.base2}, m);
    Box2 box{{-2, 2}, {-2, 2}};
    sg.certified_residual = sympgenfam_residual(
        sg, inverse ? Symplectomorphism::quarter_turn_inverse() : Symplectomorphism::quarter_turn(), box);
    if (sg.certified_residual > 1e-9) throw Error("quarter-turn generating function failed its section check");
    return sg;
}

double sympgenfam_residual(const SympGenFam& sg, const Symplectomorphism& S, const Box2& box, int grid) {
    if (!sg.fiber_vars.empty()) throw Error("section check implemented for fiberless generating families only");
    auto vars = sg.variables();
    auto g1 = sg.G.differentiate(sg.base1).with_variables(vars);
    auto g2 = sg.G.differentiate(sg.base2).with_variables(vars);
    expr::Program prog({g1.tree(), g2.tree()}, vars);
    std::vector<double> out(2), scratch;
    double worst = 0.0;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            Vec2 x(box.q.lo + box.q.length() * i / (grid - 1), box.p.lo + box.p.length() * j / (grid - 1));
            Vec2 y = S.apply(x);
            Eigen::Vector4d L = varpi({x[0], x[1], y[0], y[1]});
            double Q[2] = {L[0], L[1]};
            prog.evaluate(Q, out, scratch);
            worst = std::max(worst, std::hypot(out[0] - L[2], out[1] - L[3]));
        }
    return worst;
}

double c1_defect(const Symplectomorphism& S, const Box2& box, int grid) {
    double worst = 0.0;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            Vec2 x(box.q.lo + box.q.length() * i / (grid - 1), box.p.lo + box.p.length() * j / (grid - 1));
            auto img = S.apply_full(x);
            worst = std::max(worst, (img.x - x).norm() + (img.J - Mat2::Identity()).norm());
        }
    return worst;
}

double symplectic_defect(const Symplectomorphism& S, const Box2& box, int grid) {
    double worst = 0.0;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            Vec2 x(box.q.lo + box.q.length() * i / (grid - 1), box.p.lo + box.p.length() * j / (grid - 1));
            worst = std::max(worst, std::fabs(S.apply_full(x).J.determinant() - 1.0));
        }
    return worst;
}

SympGenFam genfam_of_near_identity(const Symplectomorphism& S, const Box2& box, const NearIdentityOptions& opts) {
    const int n = opts.grid;
    if (n < 3) throw Error("near-identity grid needs at least 3 nodes per axis");
    double defect = c1_defect(S, box, std::min(n, 41));
    if (!(defect < opts.max_defect)) {
        std::ostringstream os;
        os << "section condition violated: C1 defect " << defect << " exceeds " << opts.max_defect;
        throw Error(os.str());
    }
    GridInterpolant::Axis ax{box.q.lo, box.q.hi, n}, ay{box.p.lo, box.p.hi, n};
    const double hx = ax.spacing(), hy = ay.spacing();
    std::vector<double> P1(n * n), P2(n * n), D11(n * n), D12(n * n), D21(n * n), D22(n * n);
    bool vanishes_on_boundary = true;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Vec2 Q(ax.node(i), ay.node(j));
            // Solve (x + S(x)) / 2 = Q.
            Vec2 x = Q;
            Symplectomorphism::Image img;
            bool ok = false;
            for (int it = 0; it < 50; ++it) {
                img = S.apply_full(x);
                Vec2 r = 0.5 * (x + img.x) - Q;
                if (r.norm() <= 1e-14 * (1 + Q.norm())) {
                    ok = true;
                    break;
                }
                Mat2 M = 0.5 * (Mat2::Identity() + img.J);
                x -= M.inverse() * r;
            }
            if (!ok) {
                img = S.apply_full(x);
                ok = (0.5 * (x + img.x) - Q).norm() <= 1e-12 * (1 + Q.norm());
            }
            if (!ok) throw Error("section condition violated: varpi(graph S) is not a graph over V");
            const Mat2& J = img.J;
            std::size_t k = static_cast<std::size_t>(i) * n + j;
            P1[k] = img.x[1] - x[1];
            P2[k] = x[0] - img.x[0];
            // dP/dQ = dP/dx * dx/dQ with dx/dQ = 2 (I + J)^{-1}.
            Mat2 dPdx;
            dPdx << J(1, 0), J(1, 1) - 1.0, 1.0 - J(0, 0), -J(0, 1);
            Mat2 dP = dPdx * (2.0 * (Mat2::Identity() + J).inverse());
            D11[k] = dP(0, 0);
            D12[k] = dP(0, 1);
            D21[k] = dP(1, 0);
            D22[k] = dP(1, 1);
            bool edge = i == 0 || j == 0 || i == n - 1 || j == n - 1;
            if (edge && (std::fabs(P1[k]) > 1e-13 || std::fabs(P2[k]) > 1e-13)) vanishes_on_boundary = false;
        }
    auto at = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
    // Integrate dG = P1 dQ1 + P2 dQ2 with the end-corrected trapezoid rule.
    auto step_x = [&](int i, int j) {  // from (i, j) to (i+1, j)
        return hx / 2 * (P1[at(i, j)] + P1[at(i + 1, j)]) + hx * hx / 12 * (D11[at(i, j)] - D11[at(i + 1, j)]);
    };
    auto step_y = [&](int i, int j) {  // from (i, j) to (i, j+1)
        return hy / 2 * (P2[at(i, j)] + P2[at(i, j + 1)]) + hy * hy / 12 * (D22[at(i, j)] - D22[at(i, j + 1)]);
    };
    std::vector<double> G(n * n), Galt(n * n);
    for (int i = 0; i < n; ++i) {
        G[at(i, 0)] = i == 0 ? 0.0 : G[at(i - 1, 0)] + step_x(i - 1, 0);
        for (int j = 1; j < n; ++j) G[at(i, j)] = G[at(i, j - 1)] + step_y(i, j - 1);
    }
    for (int j = 0; j < n; ++j) {
        Galt[at(0, j)] = j == 0 ? 0.0 : Galt[at(0, j - 1)] + step_y(0, j - 1);
        for (int i = 1; i < n; ++i) Galt[at(i, j)] = Galt[at(i - 1, j)] + step_x(i - 1, j);
    }
    double path = 0.0;
    for (std::size_t k = 0; k < G.size(); ++k) path = std::max(path, std::fabs(G[k] - Galt[k]));
    if (path > opts.path_tol) {
        std::ostringstream os;
        os << "path-independence residual " << path << " exceeds " << opts.path_tol;
        throw Error(os.str());
    }
    for (std::size_t k = 0; k < G.size(); ++k) G[k] = 0.5 * (G[k] + Galt[k]);
    // A map supported inside the box has G constant near the boundary: pin that
    // constant to zero so the interpolant extends by zero. Otherwise pin the center.
    double pin = vanishes_on_boundary ? G[at(0, 0)] : G[at(n / 2, n / 2)];
    for (auto& g : G) g -= pin;
    std::vector<double> mixed(n * n);
    for (std::size_t k = 0; k < mixed.size(); ++k) mixed[k] = 0.5 * (D12[k] + D21[k]);
    static int counter = 0;
    auto kernel = std::make_shared<GridInterpolant>(
        "nearid" + std::to_string(counter++), std::vector<GridInterpolant::Axis>{ax, ay}, G, P1, P2, mixed,
        vanishes_on_boundary ? GridInterpolant::Outside::Zero : GridInterpolant::Outside::Error);
    SympGenFam sg;
    sg.G = SmoothFunction::grid(kernel, {sg.base1, sg.base2});
    sg.certified_residual = path;
    return sg;
}

std::vector<IsotopyStep> fragment(const SmoothFunction& H, double t0, double t1, const Box2& box, double threshold,
                                  int chart, std::optional<Box2> support, int grid) {
    auto slices = [&](int n) {
        std::vector<IsotopyStep> steps;
        for (int k = 0; k < n; ++k) {
            double a = t0 + (t1 - t0) * k / n, b = t0 + (t1 - t0) * (k + 1) / n;
            IsotopyStep st{Symplectomorphism::flow(H, a, b, support), chart, 0.0, a, b};
            st.c1_defect = c1_defect(st.map, box, grid);
            steps.push_back(std::move(st));
        }
        return steps;
    };
    auto passes = [&](const std::vector<IsotopyStep>& s) {
        for (const auto& st : s)
            if (!(st.c1_defect < threshold)) return false;
        return true;
    };
    int n = 1;
    auto best = slices(1);
    while (!passes(best)) {
        n *= 2;
        if (n > 4096) throw Error("fragmentation threshold unreachable");
        best = slices(n);
    }
    // Fewest slices: bisect between the last failing count and n.
    int lo = n / 2, hi = n;
    while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        auto s = slices(mid);
        if (passes(s)) {
            hi = mid;
            best = std::move(s);
        } else {
            lo = mid;
        }
    }
    return best;
}

}  // namespace gfc
