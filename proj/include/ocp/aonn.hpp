#ifndef OCP_AONN_HPP
#define OCP_AONN_HPP

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ocp/optim.hpp"
#include "ocp/problem.hpp"
#include "ocp/surrogate.hpp"

namespace ocp {

/// The three surrogates of the direct-adjoint loop plus their optimizer
/// buffers. The control network's input is the problem's control-feature map;
/// state and adjoint consume the joint coordinates.
struct SurrogateTriplet {
    std::shared_ptr<Surrogate> y, p, u;
    OptimizerState opt_y, opt_p, opt_u;
};

struct DalHyperparams {
    double gamma = 0.985;   // step-size decay in (0, 1]
    double c0 = 100.0;      // initial projected-gradient step
    int n0 = 200;           // initial optimizer epochs per network per iteration
    int n_aug = 4;          // epoch increment per iteration
    int n_ep = 2000;        // outer DAL iterations
    Eigen::Index m = 2000;  // collocation batch size
    Eigen::Index boundary_m = 4096; // boundary batch size (where applicable)
    std::vector<int> hidden = {20, 20, 20, 20, 20};
    OptMethod method = OptMethod::QuasiNewton;
    double adam_lr = 1e-4;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw std::invalid_argument("DalHyperparams: gamma must lie in (0, 1]");
        if (c0 <= 0.0) throw std::invalid_argument("DalHyperparams: c0 must be positive");
        if (n0 < 1 || n_ep < 1 || m < 1 || boundary_m < 1 || n_aug < 0)
            throw std::invalid_argument("DalHyperparams: counts must be positive");
        if (hidden.empty()) throw std::invalid_argument("DalHyperparams: no hidden layers");
    }
};

/// Mutable per-run trainer state: current step size and epoch budget, the
/// shuffled without-replacement batch cursor, and the run's generator.
struct DalState {
    double c = 100.0;
    int n = 200;
    int epoch = 0;
    Rng rng{1};
    std::vector<Eigen::Index> order;
    Eigen::Index cursor = 0;
};

struct DalLogRow {
    int epoch = 0;
    double L_s = 0.0, L_a = 0.0, L_u = 0.0;
    double c = 0.0;
    int n = 0;
    double wall_seconds = 0.0;
};

namespace detail {

inline void check_finite(const Eigen::ArrayXd& r, const char* what) {
    if (!r.isFinite().all()) {
        Eigen::Index bad = 0;
        for (Eigen::Index i = 0; i < r.size(); ++i)
            if (!std::isfinite(r[i])) { bad = i; break; }
        throw std::runtime_error(std::string(what) + ": non-finite residual at batch point " +
                                 std::to_string(bad));
    }
}

/// Scale affine residual partials by the loss adjoints dL/dr.
inline BatchSeed scale_seed(const BatchSeed& coeff, const Eigen::ArrayXd& w) {
    BatchSeed s;
    s.value = coeff.value * w;
    s.grad = (coeff.grad.array().rowwise() * w.transpose()).matrix();
    s.hess = (coeff.hess.array().rowwise() * w.transpose()).matrix();
    return s;
}

/// Wrapped control values at joint points Xc (and optionally the chain
/// partial d u / d raw-net value).
inline Eigen::ArrayXd control_values(const SurrogateTriplet& t, const ProblemSpec& prob,
                                     const Eigen::MatrixXd& Xc) {
    BatchDerivs d;
    t.u->eval(prob.control_features(Xc), {}, 0, d);
    Eigen::ArrayXd u;
    prob.wrap_control(Xc, d.value, u);
    return u;
}

inline Eigen::ArrayXd state_values(const SurrogateTriplet& t, const ProblemSpec& prob,
                                   const Eigen::MatrixXd& X) {
    BatchDerivs d;
    t.y->eval(X, {}, 0, d);
    Eigen::ArrayXd y;
    prob.wrap_state(X, d.value, y);
    return y;
}

/// Loss core shared by the public ops and the training phases: the control
/// (state loss) and state (adjoint loss) enter as frozen value arrays.
inline double state_loss_core(const Surrogate& ysur, const ProblemSpec& prob,
                              const Eigen::MatrixXd& X, const Eigen::ArrayXd& u_at_X,
                              const Eigen::MatrixXd& Xb, const Eigen::ArrayXd& u_at_Xb,
                              Eigen::VectorXd* grad) {
    if (X.cols() == 0) throw std::invalid_argument("loss_state: empty batch");
    BatchDerivs dy;
    auto ctx = ysur.eval(X, prob.deriv_indices(), 2, dy);
    Eigen::ArrayXd r;
    BatchSeed coeff;
    prob.state_residual(X, dy, u_at_X, r, coeff);
    check_finite(r, "loss_state");

    Eigen::ArrayXd rb;
    BatchSeed bcoeff;
    std::unique_ptr<EvalContext> bctx;
    BatchDerivs dyb;
    if (prob.has_state_boundary_term() && Xb.cols() > 0) {
        bctx = ysur.eval(Xb, {}, 0, dyb);
        prob.state_boundary_residual(Xb, dyb, u_at_Xb, rb, bcoeff);
        check_finite(rb, "loss_state(boundary)");
    }

    double mse = r.square().mean();
    if (rb.size() > 0) mse += rb.square().mean();
    const double L = std::sqrt(mse);
    if (grad) {
        grad->setZero(ysur.param_count());
        if (L > 0.0) {
            *grad += ctx->backprop(scale_seed(coeff, r / (static_cast<double>(r.size()) * L)));
            if (rb.size() > 0)
                *grad += bctx->backprop(
                    scale_seed(bcoeff, rb / (static_cast<double>(rb.size()) * L)));
        }
    }
    return L;
}

inline double adjoint_loss_core(const Surrogate& psur, const ProblemSpec& prob,
                                const Eigen::MatrixXd& X, const Eigen::ArrayXd& y_at_X,
                                Eigen::VectorXd* grad) {
    if (X.cols() == 0) throw std::invalid_argument("loss_adjoint: empty batch");
    BatchDerivs dp;
    auto ctx = psur.eval(X, prob.deriv_indices(), 2, dp);
    Eigen::ArrayXd r;
    BatchSeed coeff;
    prob.adjoint_residual(X, dp, y_at_X, r, coeff);
    check_finite(r, "loss_adjoint");
    const double L = std::sqrt(r.square().mean());
    if (grad) {
        grad->setZero(psur.param_count());
        if (L > 0.0)
            *grad = ctx->backprop(scale_seed(coeff, r / (static_cast<double>(r.size()) * L)));
    }
    return L;
}

inline double control_loss_core(const Surrogate& usur, const ProblemSpec& prob,
                                const Eigen::MatrixXd& Xc, const Eigen::ArrayXd& targets,
                                Eigen::VectorXd* grad) {
    if (Xc.cols() != targets.size())
        throw std::invalid_argument("loss_control: targets misaligned with batch");
    if (Xc.cols() == 0) throw std::invalid_argument("loss_control: empty batch");
    BatchDerivs d;
    auto ctx = usur.eval(prob.control_features(Xc), {}, 0, d);
    Eigen::ArrayXd u, du;
    prob.wrap_control(Xc, d.value, u, &du);
    Eigen::ArrayXd r = u - targets;
    check_finite(r, "loss_control");
    const double L = std::sqrt(r.square().mean());
    if (grad) {
        grad->setZero(usur.param_count());
        if (L > 0.0) {
            BatchSeed seed;
            seed.value = du * r / (static_cast<double>(r.size()) * L);
            seed.grad.resize(0, Xc.cols());
            seed.hess.resize(0, Xc.cols());
            *grad = ctx->backprop(seed);
        }
    }
    return L;
}

/// Run one optimizer phase over a surrogate; quasi-newton consumes the full
/// epoch budget as line-searched iterations, adaptive-moment as single steps.
/// Guards against divergence (10x loss increase aborts the stage).
inline double train_phase(Surrogate& sur, OptimizerState& st, const DalHyperparams& hp,
                          int epochs, const Objective& obj, const char* phase) {
    Eigen::VectorXd theta = sur.params();
    Eigen::VectorXd g(theta.size());
    const double initial = obj(theta, g);
    double final_loss = initial;
    if (hp.method == OptMethod::QuasiNewton) {
        st.pairs.clear();
        final_loss = lbfgs_minimize(obj, theta, epochs, st).loss;
    } else {
        st.step_size = hp.adam_lr;
        for (int e = 0; e < epochs; ++e) {
            final_loss = obj(theta, g);
            adam_step(theta, g, st);
        }
    }
    sur.set_params(theta);
    if (final_loss > 10.0 * initial && final_loss > 1e-12)
        throw std::runtime_error(std::string("dal_iterate: ") + phase +
                                 " phase diverged (loss " + std::to_string(initial) + " -> " +
                                 std::to_string(final_loss) + ")");
    return final_loss;
}

/// Objective adapter: evaluate a loss core at a parameter vector.
template <typename Core>
Objective make_objective(Surrogate& sur, Core core) {
    return [&sur, core](const Eigen::VectorXd& theta, Eigen::VectorXd& g) {
        sur.set_params(theta);
        return core(&g);
    };
}

} // namespace detail

// ---------------------------------------------------------------------------
// Public loss operations
// ---------------------------------------------------------------------------

/// Square root of the mean squared state-equation residual over the batch
/// (plus the soft boundary term for problems that carry one).
inline double loss_state(const SurrogateTriplet& t, const ProblemSpec& prob,
                         const Eigen::MatrixXd& X, const Eigen::MatrixXd& Xb = {},
                         Eigen::VectorXd* grad = nullptr) {
    Eigen::ArrayXd u_at_X = Eigen::ArrayXd::Zero(X.cols());
    if (prob.control_domain() == ControlDomain::Interior)
        u_at_X = detail::control_values(t, prob, X);
    Eigen::ArrayXd u_at_Xb;
    if (prob.has_state_boundary_term() && Xb.cols() > 0)
        u_at_Xb = detail::control_values(t, prob, Xb);
    return detail::state_loss_core(*t.y, prob, X, u_at_X, Xb, u_at_Xb, grad);
}

inline double loss_adjoint(const SurrogateTriplet& t, const ProblemSpec& prob,
                           const Eigen::MatrixXd& X, Eigen::VectorXd* grad = nullptr) {
    return detail::adjoint_loss_core(*t.p, prob, X, detail::state_values(t, prob, X), grad);
}

/// Projected-gradient control target P_Uad(u - c dJ/du) at the control
/// points Xc (the interior batch for distributed control, a boundary batch
/// for boundary control). Always lies in [u_a, u_b].
inline Eigen::ArrayXd compute_u_step(const SurrogateTriplet& t, const ProblemSpec& prob,
                                     const Eigen::MatrixXd& Xc, double c) {
    if (c <= 0.0) throw std::invalid_argument("compute_u_step: step must be positive");
    Eigen::ArrayXd u = detail::control_values(t, prob, Xc);
    BatchDerivs dp;
    t.p->eval(Xc, {}, 0, dp);
    Eigen::ArrayXd term;
    prob.adjoint_term_at_control(Xc, dp, term);
    Eigen::ArrayXd duj = prob.alpha() * u + term;
    Eigen::ArrayXd lo, hi;
    prob.control_bounds(Xc, lo, hi);
    return project_admissible(u - c * duj, lo, hi);
}

inline double loss_control(const SurrogateTriplet& t, const ProblemSpec& prob,
                           const Eigen::MatrixXd& Xc, const Eigen::ArrayXd& targets,
                           Eigen::VectorXd* grad = nullptr) {
    return detail::control_loss_core(*t.u, prob, Xc, targets, grad);
}

// ---------------------------------------------------------------------------
// The DAL iteration
// ---------------------------------------------------------------------------

/// Next batch of m points, uniform without replacement with reshuffle on
/// exhaustion (batches never straddle a reshuffle).
inline Eigen::MatrixXd next_batch(const TrainingSet& ts, DalState& st, Eigen::Index m) {
    const Eigen::Index n = ts.size();
    if (n == 0) throw std::invalid_argument("next_batch: empty training set");
    m = std::min(m, n);
    if (st.order.size() != static_cast<std::size_t>(n) || st.cursor + m > n) {
        st.order.resize(static_cast<std::size_t>(n));
        std::iota(st.order.begin(), st.order.end(), Eigen::Index{0});
        for (Eigen::Index i = n - 1; i > 0; --i)
            std::swap(st.order[static_cast<std::size_t>(i)],
                      st.order[st.rng.below(static_cast<std::uint64_t>(i + 1))]);
        st.cursor = 0;
    }
    Eigen::MatrixXd X(ts.points.rows(), m);
    for (Eigen::Index i = 0; i < m; ++i)
        X.col(i) = ts.points.col(st.order[static_cast<std::size_t>(st.cursor + i)]);
    st.cursor += m;
    return X;
}

/// Parameter columns resampled (with replacement) from a joint batch. Boundary
/// batches pair fresh boundary geometry with these, so boundary-based phases
/// (soft boundary residuals, boundary-control targets) follow the collocation
/// set's parameter distribution; sampling xi afresh there would leave them
/// untouched by adaptive refinement.
inline Eigen::MatrixXd resample_params(const ProblemSpec& prob, const Eigen::MatrixXd& X,
                                       Eigen::Index count, Rng& rng) {
    const int sd = prob.spatial_dim(), pd = prob.param_dim();
    if (X.cols() == 0) throw std::invalid_argument("resample_params: empty batch");
    Eigen::MatrixXd Xi(pd, count);
    for (Eigen::Index i = 0; i < count; ++i) {
        const Eigen::Index j =
            static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(X.cols())));
        Xi.col(i) = X.block(sd, j, pd, 1);
    }
    return Xi;
}

/// One direct-adjoint-loop iteration: fit the state, fit the adjoint, take a
/// projected-gradient step on the control targets, fit the control; then
/// decay c and grow the epoch budget. Surrogates without parameters are left
/// untouched (their losses are still reported).
inline void dal_iterate(SurrogateTriplet& t, const ProblemSpec& prob, const DalHyperparams& hp,
                        const TrainingSet& ts, DalState& st, DalLogRow* row = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::MatrixXd X = next_batch(ts, st, hp.m);
    const bool needs_boundary =
        prob.has_state_boundary_term() || prob.control_domain() == ControlDomain::Boundary;
    const Eigen::MatrixXd Xb =
        needs_boundary
            ? prob.sample_boundary_at(resample_params(prob, X, hp.boundary_m, st.rng), st.rng)
            : Eigen::MatrixXd();

    // state phase (control frozen)
    Eigen::ArrayXd u_at_X = Eigen::ArrayXd::Zero(X.cols());
    if (prob.control_domain() == ControlDomain::Interior)
        u_at_X = detail::control_values(t, prob, X);
    Eigen::ArrayXd u_at_Xb;
    if (prob.has_state_boundary_term())
        u_at_Xb = detail::control_values(t, prob, Xb);
    double Ls;
    if (t.y->trainable()) {
        Ls = detail::train_phase(
            *t.y, t.opt_y, hp, st.n,
            detail::make_objective(*t.y,
                                   [&](Eigen::VectorXd* g) {
                                       return detail::state_loss_core(*t.y, prob, X, u_at_X, Xb,
                                                                      u_at_Xb, g);
                                   }),
            "state");
    } else {
        Ls = detail::state_loss_core(*t.y, prob, X, u_at_X, Xb, u_at_Xb, nullptr);
    }

    // adjoint phase (state frozen)
    const Eigen::ArrayXd y_at_X = detail::state_values(t, prob, X);
    double La;
    if (t.p->trainable()) {
        La = detail::train_phase(
            *t.p, t.opt_p, hp, st.n,
            detail::make_objective(*t.p,
                                   [&](Eigen::VectorXd* g) {
                                       return detail::adjoint_loss_core(*t.p, prob, X, y_at_X, g);
                                   }),
            "adjoint");
    } else {
        La = detail::adjoint_loss_core(*t.p, prob, X, y_at_X, nullptr);
    }

    // projected-gradient targets, frozen for the whole control phase
    const Eigen::MatrixXd& Xc = prob.control_domain() == ControlDomain::Interior ? X : Xb;
    const Eigen::ArrayXd targets = compute_u_step(t, prob, Xc, st.c);

    double Lu;
    if (t.u->trainable()) {
        Lu = detail::train_phase(
            *t.u, t.opt_u, hp, st.n,
            detail::make_objective(*t.u,
                                   [&](Eigen::VectorXd* g) {
                                       return detail::control_loss_core(*t.u, prob, Xc, targets,
                                                                        g);
                                   }),
            "control");
    } else {
        Lu = detail::control_loss_core(*t.u, prob, Xc, targets, nullptr);
    }

    st.c *= hp.gamma;
    st.n += hp.n_aug;
    ++st.epoch;
    if (row) {
        row->epoch = st.epoch;
        row->L_s = Ls;
        row->L_a = La;
        row->L_u = Lu;
        row->c = st.c;
        row->n = st.n;
        row->wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
}

inline SurrogateTriplet make_mlp_triplet(const ProblemSpec& prob, const DalHyperparams& hp,
                                         std::uint64_t seed) {
    auto sizes = [&](int in) {
        std::vector<int> s;
        s.push_back(in);
        s.insert(s.end(), hp.hidden.begin(), hp.hidden.end());
        s.push_back(1);
        return s;
    };
    SurrogateTriplet t;
    t.y = std::make_shared<MlpSurrogate>(sizes(prob.joint_dim()), seed);
    t.p = std::make_shared<MlpSurrogate>(sizes(prob.joint_dim()), seed + 1);
    t.u = std::make_shared<MlpSurrogate>(sizes(prob.control_feature_dim()), seed + 2);
    return t;
}

inline void save_training_log(const std::string& path, const std::vector<DalLogRow>& rows) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_training_log: cannot open " + path);
    std::fprintf(f, "epoch,L_s,L_a,L_u,c,n,wall_seconds\n");
    for (const auto& r : rows)
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%d,%.6f\n", r.epoch, r.L_s, r.L_a, r.L_u,
                     r.c, r.n, r.wall_seconds);
    std::fclose(f);
}

/// Plain direct-adjoint-looping training on a fixed collocation set.
inline SurrogateTriplet run_aonn(const ProblemSpec& prob, const DalHyperparams& hp,
                                 const TrainingSet& ts, std::uint64_t seed,
                                 std::vector<DalLogRow>* log = nullptr,
                                 SurrogateTriplet* warm = nullptr, DalState* state = nullptr) {
    hp.validate();
    if (ts.size() == 0) throw std::invalid_argument("run_aonn: empty training set");
    SurrogateTriplet t = warm ? *warm : make_mlp_triplet(prob, hp, seed);
    DalState local;
    DalState& st = state ? *state : local;
    if (!state) {
        st.c = hp.c0;
        st.n = hp.n0;
        st.rng = Rng(seed ^ 0x9e3779b97f4a7c15ull);
    }
    for (int i = 0; i < hp.n_ep; ++i) {
        DalLogRow row;
        dal_iterate(t, prob, hp, ts, st, &row);
        if (log) log->push_back(row);
    }
    return t;
}

} // namespace ocp

#endif
