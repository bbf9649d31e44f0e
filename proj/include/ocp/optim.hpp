#ifndef OCP_OPTIM_HPP
#define OCP_OPTIM_HPP

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>

namespace ocp {

/// Objective callback: returns the loss and fills the gradient.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

enum class OptMethod { QuasiNewton, AdaptiveMoment };

/// Per-parameter optimizer buffers. Quasi-newton keeps limited-memory
/// curvature pairs (memory 20); adaptive-moment keeps the standard
/// first/second moment estimates (beta1 0.9, beta2 0.999, eps 1e-8).
struct OptimizerState {
    OptMethod method = OptMethod::QuasiNewton;
    double step_size = 1e-4; // adaptive-moment learning rate

    // adaptive-moment buffers
    Eigen::VectorXd m1, m2;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    // quasi-newton buffers
    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs; // (s, y)
    int memory = 20;
    long curvature_skips = 0; // non-positive s.y encountered, update skipped

    void reset() {
        m1.resize(0);
        m2.resize(0);
        t = 0;
        pairs.clear();
        curvature_skips = 0;
    }
};

inline void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad,
                      OptimizerState& st) {
    if (!grad.allFinite()) throw std::runtime_error("adam_step: non-finite gradient");
    if (st.m1.size() != theta.size()) {
        st.m1 = Eigen::VectorXd::Zero(theta.size());
        st.m2 = Eigen::VectorXd::Zero(theta.size());
        st.t = 0;
    }
    ++st.t;
    st.m1 = st.beta1 * st.m1 + (1.0 - st.beta1) * grad;
    st.m2 = st.beta2 * st.m2.array().matrix() +
            (1.0 - st.beta2) * grad.array().square().matrix();
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    theta.array() -= st.step_size * (st.m1.array() / c1) /
                     ((st.m2.array() / c2).sqrt() + st.eps);
}

namespace detail {

/// Strong-Wolfe line search (bracket + zoom), c1 = 1e-4, c2 = 0.9.
/// phi(a) = f(x + a d). Returns accepted step and updates fa/ga (grad at x+a d).
inline double wolfe_search(const Objective& f, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& d, double f0, double g0,
                           Eigen::VectorXd& xa, double& fa, Eigen::VectorXd& ga) {
    constexpr double c1 = 1e-4, c2 = 0.9;
    constexpr int max_iter = 30;
    auto phi = [&](double a, double& dphi) {
        xa = x + a * d;
        double v = f(xa, ga);
        dphi = ga.dot(d);
        return v;
    };

    double a_prev = 0.0, f_prev = f0, g_prev = g0;
    double a = 1.0;
    double a_lo = 0.0, a_hi = 0.0, f_lo = f0, g_lo = g0;
    bool bracketed = false;

    for (int it = 0; it < max_iter && !bracketed; ++it) {
        double dphi;
        double fv = phi(a, dphi);
        if (fv > f0 + c1 * a * g0 || (it > 0 && fv >= f_prev)) {
            a_lo = a_prev; f_lo = f_prev; g_lo = g_prev;
            a_hi = a;
            bracketed = true;
            break;
        }
        if (std::fabs(dphi) <= -c2 * g0) {
            fa = fv;
            return a;
        }
        if (dphi >= 0.0) {
            a_lo = a; f_lo = fv; g_lo = dphi;
            a_hi = a_prev;
            bracketed = true;
            break;
        }
        a_prev = a; f_prev = fv; g_prev = dphi;
        a *= 2.0;
    }
    if (!bracketed) {
        fa = f_prev;
        xa = x + a_prev * d;
        double dphi;
        fa = phi(a_prev, dphi);
        return a_prev;
    }

    for (int it = 0; it < max_iter; ++it) {
        double aj = 0.5 * (a_lo + a_hi); // bisection zoom
        double dphi;
        double fj = phi(aj, dphi);
        if (fj > f0 + c1 * aj * g0 || fj >= f_lo) {
            a_hi = aj;
        } else {
            if (std::fabs(dphi) <= -c2 * g0) {
                fa = fj;
                return aj;
            }
            if (dphi * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
            a_lo = aj; f_lo = fj; g_lo = dphi;
        }
        if (std::fabs(a_hi - a_lo) < 1e-16) break;
    }
    double dphi;
    fa = phi(a_lo, dphi);
    return a_lo;
}

} // namespace detail

struct LbfgsResult {
    double loss = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
};

/// Limited-memory BFGS with strong-Wolfe line search. Runs up to max_iters
/// iterations (or until the gradient norm drops below gtol), reusing and
/// extending the curvature pairs in st across calls.
inline LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd& theta,
                                  int max_iters, OptimizerState& st,
                                  double gtol = 1e-12) {
    Eigen::VectorXd g(theta.size());
    double loss = f(theta, g);
    if (!std::isfinite(loss)) throw std::runtime_error("lbfgs: non-finite initial loss");

    LbfgsResult res;
    Eigen::VectorXd xa(theta.size()), ga(theta.size());
    for (int it = 0; it < max_iters; ++it) {
        const double gn = g.norm();
        if (gn <= gtol) break;

        // Two-loop recursion.
        Eigen::VectorXd q = g;
        const int k = static_cast<int>(st.pairs.size());
        std::vector<double> alpha(k), rho(k);
        for (int i = k - 1; i >= 0; --i) {
            const auto& [s, y] = st.pairs[i];
            rho[i] = 1.0 / y.dot(s);
            alpha[i] = rho[i] * s.dot(q);
            q -= alpha[i] * y;
        }
        if (k > 0) {
            const auto& [s, y] = st.pairs.back();
            q *= s.dot(y) / y.squaredNorm();
        } else {
            q *= 1.0 / std::max(1.0, gn); // cautious first step
        }
        for (int i = 0; i < k; ++i) {
            const auto& [s, y] = st.pairs[i];
            double beta = rho[i] * y.dot(q);
            q += (alpha[i] - beta) * s;
        }
        Eigen::VectorXd d = -q;

        double g0 = g.dot(d);
        if (g0 >= 0.0) { // not a descent direction, fall back to steepest
            d = -g;
            g0 = -gn * gn;
        }

        double fa = loss;
        double a = detail::wolfe_search(f, theta, d, loss, g0, xa, fa, ga);
        if (a <= 0.0 || !std::isfinite(fa)) break;

        Eigen::VectorXd s = xa - theta;
        Eigen::VectorXd y = ga - g;
        theta = xa;
        loss = fa;
        g = ga;
        ++res.iterations;

        const double step_inf = s.lpNorm<Eigen::Infinity>();
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            st.pairs.emplace_back(std::move(s), std::move(y));
            if (static_cast<int>(st.pairs.size()) > st.memory) st.pairs.pop_front();
        } else {
            ++st.curvature_skips; // flag and continue, never crash
        }
        if (step_inf < 1e-15) break;
    }
    res.loss = loss;
    res.grad_norm = g.norm();
    return res;
}

/// Single optimizer step on a flat parameter vector. Adaptive-moment uses
/// only the supplied gradient; quasi-newton needs the objective for its
/// line search.
inline double optimizer_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad,
                             OptimizerState& st, const Objective* f = nullptr) {
    if (!grad.allFinite()) throw std::runtime_error("optimizer_step: non-finite gradient");
    if (st.method == OptMethod::AdaptiveMoment) {
        adam_step(theta, grad, st);
        return 0.0;
    }
    if (f == nullptr)
        throw std::invalid_argument("optimizer_step: quasi-newton step requires the objective");
    return lbfgs_minimize(*f, theta, 1, st).loss;
}

} // namespace ocp

#endif
