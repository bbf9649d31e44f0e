#ifndef OCP_ADAPTIVE_HPP
#define OCP_ADAPTIVE_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocp/aonn.hpp"
#include "ocp/flow.hpp"
#include "ocp/metrics.hpp"
#include "ocp/problem.hpp"

namespace ocp {

struct AdaptiveConfig {
    int N_adaptive = 10;     // refinement stages
    Eigen::Index n_r = 2000; // collocation points added per stage
    DalHyperparams dal;
    int flow_blocks = 2;
    int flow_layers = 6;
    int flow_width = 24;
    double flow_scale_cap = 2.0;
    int flow_epochs = 500;
    Eigen::Index flow_batch = 1000;
    double flow_lr = 1e-4;
    int flow_rounds = 3;               // self-proposal rounds per refit
    Eigen::Index flow_reservoir = 8000; // proposal reservoir per round
    int das2_epochs = 2000; // joint-training epochs per stage for the baseline
    std::uint64_t seed = 1;
    Eigen::VectorXd eval_xi; // parameter value for error columns; empty = zeros
    int eval_res_x = 64, eval_res_y = 32;

    void validate() const {
        if (N_adaptive < 1)
            throw std::invalid_argument("AdaptiveConfig: N_adaptive must be >= 1");
        if (n_r < 1) throw std::invalid_argument("AdaptiveConfig: n_r must be >= 1");
        if (flow_epochs < 0 || flow_batch < 1 || flow_lr <= 0.0 || flow_blocks < 1 ||
            flow_layers < 1 || flow_width < 1 || flow_rounds < 1 || flow_reservoir < 1)
            throw std::invalid_argument("AdaptiveConfig: bad flow settings");
        if (das2_epochs < 1) throw std::invalid_argument("AdaptiveConfig: das2_epochs must be >= 1");
        dal.validate();
    }
};

struct RunRecord {
    struct StageRow {
        int stage = 0;
        Eigen::Index set_size = 0;
        double L_s = 0.0, L_a = 0.0, L_u = 0.0;
        double flow_CE = std::numeric_limits<double>::quiet_NaN();
        double rel_l2_u = std::numeric_limits<double>::quiet_NaN();
        double rel_l2_y = std::numeric_limits<double>::quiet_NaN();
        double wall_seconds = 0.0;
    };
    std::string method;
    std::vector<StageRow> stages;
};

inline void save_run_record(const std::string& path, const RunRecord& rec) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_run_record: cannot open " + path);
    std::fprintf(f, "stage,set_size,L_s,L_a,L_u,flow_CE,rel_l2_u,rel_l2_y,wall_seconds\n");
    for (const auto& r : rec.stages)
        std::fprintf(f, "%d,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.stage,
                     static_cast<long long>(r.set_size), r.L_s, r.L_a, r.L_u, r.flow_CE,
                     r.rel_l2_u, r.rel_l2_y, r.wall_seconds);
    std::fclose(f);
}

/// Unnormalized refinement density at one joint point: squared state plus
/// adjoint residuals, weighted by the boundary cutoff. The control misfit is
/// deliberately excluded. Identically zero outside the bounding box because
/// the cutoff vanishes there.
inline double residual_density(const SurrogateTriplet& t, const ProblemSpec& prob,
                               const Eigen::VectorXd& point) {
    const double h = cutoff(point, prob);
    if (h == 0.0) return 0.0;
    Eigen::MatrixXd X = point;
    Eigen::ArrayXd u = Eigen::ArrayXd::Zero(1);
    if (prob.control_domain() == ControlDomain::Interior)
        u = detail::control_values(t, prob, X);

    BatchDerivs dy;
    t.y->eval(X, prob.deriv_indices(), 2, dy);
    Eigen::ArrayXd r_s;
    BatchSeed cs;
    prob.state_residual(X, dy, u, r_s, cs);

    BatchDerivs dp;
    t.p->eval(X, prob.deriv_indices(), 2, dp);
    Eigen::ArrayXd y_val = detail::state_values(t, prob, X);
    Eigen::ArrayXd r_a;
    BatchSeed ca;
    prob.adjoint_residual(X, dp, y_val, r_a, ca);

    return (r_s[0] * r_s[0] + r_a[0] * r_a[0]) * h;
}

inline DensityTarget make_density_target(const SurrogateTriplet& t, const ProblemSpec& prob) {
    return DensityTarget{
        [&t, &prob](const Eigen::VectorXd& x) { return residual_density(t, prob, x); }};
}

/// Grow the collocation set by exactly n_r flow samples that pass the domain
/// membership filter. The union keeps duplicates on purpose: repeated points
/// act as importance weights in the empirical losses.
inline TrainingSet refine_training_set(const TrainingSet& S, const CouplingFlow& flow,
                                       const ProblemSpec& prob, Eigen::Index n_r, int stage,
                                       Rng& rng) {
    if (n_r < 1) throw std::invalid_argument("refine_training_set: n_r must be >= 1");
    TrainingSet out = S;
    Eigen::MatrixXd kept(prob.joint_dim(), n_r);
    Eigen::Index accepted = 0, drawn = 0;
    while (accepted < n_r) {
        Eigen::MatrixXd batch = flow_sample(flow, 4 * n_r, rng);
        drawn += batch.cols();
        for (Eigen::Index i = 0; i < batch.cols() && accepted < n_r; ++i)
            if (prob.membership(batch.col(i))) kept.col(accepted++) = batch.col(i);
        if (drawn >= 100 * n_r && accepted * 100 < drawn)
            throw std::runtime_error(
                "refine_training_set: sampler collapse, acceptance below 1% after " +
                std::to_string(drawn) + " draws");
    }
    out.append(kept, stage, SampleSource::Flow);
    return out;
}

/// Control field induced by the projected optimality map u = P(-term/alpha),
/// exposed as a fixed closure over the (frozen) adjoint surrogate. Inputs are
/// control features; boundary-control problems reconstruct the boundary point
/// from them.
inline std::shared_ptr<Surrogate> optimality_map_control(const ProblemSpec& prob,
                                                         std::shared_ptr<Surrogate> p) {
    const bool boundary = prob.control_domain() == ControlDomain::Boundary;
    const double r_out = prob.hull_hi()[0];
    return std::make_shared<ClosureSurrogate>(
        [&prob, p, boundary, r_out](const Eigen::VectorXd& f) {
            Eigen::VectorXd x;
            if (boundary) {
                x.resize(prob.joint_dim());
                x[0] = r_out;
                double th = std::atan2(f[1], f[0]);
                if (th < 0.0) th += 2.0 * M_PI;
                x[1] = th;
                x.tail(prob.param_dim()) = f.tail(prob.param_dim());
            } else {
                x = f;
            }
            Eigen::MatrixXd X = x;
            BatchDerivs dp;
            p->eval(X, {}, 0, dp);
            Eigen::ArrayXd term;
            prob.adjoint_term_at_control(X, dp, term);
            Eigen::ArrayXd lo, hi;
            prob.control_bounds(X, lo, hi);
            return project_admissible(-term[0] / prob.alpha(), lo[0], hi[0]);
        },
        prob.control_feature_dim());
}

struct AdaptiveResult {
    SurrogateTriplet triplet;
    CouplingFlow flow;
    RunRecord record;
    TrainingSet set;
    std::vector<DalLogRow> training_log;
};

namespace detail {

/// Coupling layers need at least two coordinates; a 1-D problem can still run
/// the non-adaptive drivers, so leave the flow empty there.
inline CouplingFlow make_problem_flow(const ProblemSpec& prob, const AdaptiveConfig& cfg) {
    if (prob.joint_dim() < 2) return CouplingFlow{};
    return make_flow(prob.joint_dim(), cfg.flow_blocks, cfg.flow_layers, cfg.flow_width,
                     prob.box_lo(), prob.box_hi(), cfg.seed ^ 0xf1047ull, cfg.flow_scale_cap);
}

inline void checkpoint_stage(const std::string& dir, int stage, const SurrogateTriplet& t,
                             const CouplingFlow& flow) {
    if (dir.empty()) return;
    namespace fs = std::filesystem;
    const fs::path sd = fs::path(dir) / ("stage_" + std::to_string(stage));
    fs::create_directories(sd);
    auto save_net = [&](const std::shared_ptr<Surrogate>& s, const char* name) {
        auto* mlp = dynamic_cast<const MlpSurrogate*>(s.get());
        if (mlp) save_network(mlp->network(), (sd / name).string());
    };
    save_net(t.y, "y.ckpt");
    save_net(t.p, "p.ckpt");
    save_net(t.u, "u.ckpt");
    if (flow.dim >= 2) save_flow(flow, (sd / "flow.ckpt").string());
}

inline void fill_error_columns(RunRecord::StageRow& row, const SurrogateTriplet& t,
                               const ProblemSpec& prob, const AdaptiveConfig& cfg) {
    if (!prob.has_analytic()) return;
    Eigen::VectorXd xi =
        cfg.eval_xi.size() ? cfg.eval_xi : Eigen::VectorXd::Zero(prob.param_dim());
    FieldErrors e = analytic_errors(t, prob, xi, cfg.eval_res_x, cfg.eval_res_y);
    row.rel_l2_u = e.rel_l2_u;
    row.rel_l2_y = e.rel_l2_y;
}

/// One flow refit + set refinement step shared by all adaptive drivers.
inline void refit_and_refine(AdaptiveResult& res, const ProblemSpec& prob,
                             const AdaptiveConfig& cfg, int stage, Rng& rng,
                             RunRecord::StageRow& row) {
    DensityTarget raw = make_density_target(res.triplet, prob);
    Rng frng(cfg.seed ^ (0xadab0ull + static_cast<std::uint64_t>(stage)));

    // After training, the residual density sits on a near-constant background
    // (the converged noise level of the surrogates) with a narrow peak where
    // they remain wrong. In a high-dimensional parameter box the background
    // can hold almost all of the probability mass even when it is orders of
    // magnitude below the peak, so a flow fitted to the raw density would
    // just reproduce the background. Subtracting an upper quantile of the
    // background (estimated once per refit from a uniform probe, so the
    // target stays a fixed density) and tempering with a square root removes
    // the uninformative mass and widens the basin the importance weights can
    // see, while keeping the target nonnegative and peaked exactly where the
    // residuals are largest.
    const TrainingSet probe = sample_uniform(prob, 512, frng);
    std::vector<double> levels(static_cast<std::size_t>(probe.size()));
    for (Eigen::Index i = 0; i < probe.size(); ++i)
        levels[static_cast<std::size_t>(i)] = raw.unnormalized(probe.points.col(i));
    const std::size_t q = levels.size() - levels.size() / 20 - 1;
    std::nth_element(levels.begin(), levels.begin() + static_cast<std::ptrdiff_t>(q),
                     levels.end());
    const double background = levels[q];
    DensityTarget target{[base = std::move(raw.unnormalized), background](const Eigen::VectorXd& x) {
        return std::sqrt(std::max(base(x) - background, 0.0));
    }};

    // Sampling-importance-resampling rounds: each round refreshes the frozen
    // proposal with the current flow, so coverage of the informative region
    // compounds instead of relying on rare hits from a broad proposal. The
    // epoch budget is shared across the rounds.
    CouplingFlow round_proposal = proposal;
    const int per_round = std::max(1, cfg.flow_epochs / cfg.flow_rounds);
    for (int rd = 0; rd < cfg.flow_rounds; ++rd) {
        std::vector<double> trace =
            train_flow_sir(res.flow, target, round_proposal, per_round, cfg.flow_batch,
                           cfg.flow_reservoir, frng, cfg.flow_lr);
        if (!trace.empty()) row.flow_CE = trace.back();
        if (rd + 1 < cfg.flow_rounds) round_proposal = res.flow;
    }
    res.set = refine_training_set(res.set, res.flow, prob, cfg.n_r, stage + 1, rng);
}

} // namespace detail

/// Adaptive direct-adjoint looping: train on the current set, refit the flow
/// to the residual-induced density (previous flow as frozen proposal), grow
/// the set, repeat. Surrogates and the step schedule warm-start across
/// stages. Checkpoints land under checkpoint_dir/stage_<k>/ when given.
inline AdaptiveResult run_adaptive_aonn(const ProblemSpec& prob, const AdaptiveConfig& cfg,
                                        const std::string& checkpoint_dir = "") {
    cfg.validate();
    AdaptiveResult res;
    res.record.method = "adaptive-aonn";
    Rng rng(cfg.seed);
    res.set = sample_uniform(prob, cfg.n_r, rng, 0);
    res.flow = detail::make_problem_flow(prob, cfg);
    res.triplet = make_mlp_triplet(prob, cfg.dal, cfg.seed);
    DalState st;
    st.c = cfg.dal.c0;
    st.n = cfg.dal.n0;
    st.rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    for (int k = 0; k < cfg.N_adaptive; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<DalLogRow> log;
        run_aonn(prob, cfg.dal, res.set, cfg.seed, &log, &res.triplet, &st);

        RunRecord::StageRow row;
        row.stage = k;
        row.set_size = res.set.size();
        row.L_s = log.back().L_s;
        row.L_a = log.back().L_a;
        row.L_u = log.back().L_u;
        res.training_log.insert(res.training_log.end(), log.begin(), log.end());

        if (k + 1 < cfg.N_adaptive) detail::refit_and_refine(res, prob, cfg, k, rng, row);
        detail::fill_error_columns(row, res.triplet, prob, cfg);
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.record.stages.push_back(row);
        detail::checkpoint_stage(checkpoint_dir, k, res.triplet, res.flow);
    }
    return res;
}

/// Plain direct-adjoint looping at matched budget: all N_adaptive * n_r
/// points drawn uniformly up front, N_adaptive * n_ep iterations.
inline AdaptiveResult run_aonn_baseline(const ProblemSpec& prob, const AdaptiveConfig& cfg,
                                        const std::string& checkpoint_dir = "") {
    cfg.validate();
    AdaptiveResult res;
    res.record.method = "aonn";
    Rng rng(cfg.seed);
    res.set = sample_uniform(prob, cfg.n_r * cfg.N_adaptive, rng, 0);
    res.flow = detail::make_problem_flow(prob, cfg);
    DalHyperparams hp = cfg.dal;
    hp.n_ep = cfg.dal.n_ep * cfg.N_adaptive;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<DalLogRow> log;
    res.triplet = run_aonn(prob, hp, res.set, cfg.seed, &log);
    res.training_log = log;
    RunRecord::StageRow row;
    row.stage = 0;
    row.set_size = res.set.size();
    row.L_s = log.back().L_s;
    row.L_a = log.back().L_a;
    row.L_u = log.back().L_u;
    detail::fill_error_columns(row, res.triplet, prob, cfg);
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.record.stages.push_back(row);
    detail::checkpoint_stage(checkpoint_dir, 0, res.triplet, res.flow);
    return res;
}

namespace detail {

/// Joint state-plus-adjoint loss with the control eliminated through the
/// projected optimality map u = P(-term/alpha). Parameters are the
/// concatenation (theta_y, theta_p); the state loss's control dependence is
/// routed back to theta_p through the map wherever the projection is slack.
inline double das2_joint_loss(const Surrogate& ysur, const Surrogate& psur,
                              const ProblemSpec& prob, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& Xb, Eigen::VectorXd* grad) {
    const double alpha = prob.alpha();
    const bool boundary_control = prob.control_domain() == ControlDomain::Boundary;
    const Eigen::MatrixXd& Xc = boundary_control ? Xb : X;
    if (Xc.cols() == 0) throw std::invalid_argument("das2_joint_loss: empty control batch");

    // control from the optimality map
    BatchDerivs dp_c;
    auto pctx_c = psur.eval(Xc, {}, 0, dp_c);
    Eigen::ArrayXd term;
    BatchSeed dterm;
    prob.adjoint_term_at_control(Xc, dp_c, term, &dterm);
    Eigen::ArrayXd lo, hi;
    prob.control_bounds(Xc, lo, hi);
    Eigen::ArrayXd u_free = -term / alpha;
    Eigen::ArrayXd u = project_admissible(u_free, lo, hi);
    Eigen::ArrayXd slack = ((u_free > lo) && (u_free < hi)).cast<double>();

    // state loss
    BatchDerivs dy;
    auto yctx = ysur.eval(X, prob.deriv_indices(), 2, dy);
    Eigen::ArrayXd u_at_X =
        boundary_control ? Eigen::ArrayXd::Zero(X.cols()).eval() : u;
    Eigen::ArrayXd r_s;
    BatchSeed cs;
    Eigen::ArrayXd drs_du;
    prob.state_residual(X, dy, u_at_X, r_s, cs, &drs_du);
    check_finite(r_s, "das2(state)");

    Eigen::ArrayXd rb;
    BatchSeed cb;
    Eigen::ArrayXd drb_du;
    std::unique_ptr<EvalContext> bctx;
    BatchDerivs dyb;
    if (prob.has_state_boundary_term() && Xb.cols() > 0) {
        bctx = ysur.eval(Xb, {}, 0, dyb);
        Eigen::ArrayXd u_at_Xb =
            boundary_control ? u : Eigen::ArrayXd::Zero(Xb.cols()).eval();
        prob.state_boundary_residual(Xb, dyb, u_at_Xb, rb, cb, &drb_du);
        check_finite(rb, "das2(state boundary)");
    }
    double mse_s = r_s.square().mean();
    if (rb.size() > 0) mse_s += rb.square().mean();
    const double L_s = std::sqrt(mse_s);

    // adjoint loss; the state enters through its wrapped values
    Eigen::ArrayXd y_val, dy_dnet;
    prob.wrap_state(X, dy.value, y_val, &dy_dnet);
    BatchDerivs dp;
    auto pctx = psur.eval(X, prob.deriv_indices(), 2, dp);
    Eigen::ArrayXd r_a;
    BatchSeed ca;
    Eigen::ArrayXd dra_dy;
    prob.adjoint_residual(X, dp, y_val, r_a, ca, &dra_dy);
    check_finite(r_a, "das2(adjoint)");
    const double L_a = std::sqrt(r_a.square().mean());

    if (grad) {
        const Eigen::Index ny = ysur.param_count(), np = psur.param_count();
        grad->setZero(ny + np);
        Eigen::ArrayXd du_w = Eigen::ArrayXd::Zero(Xc.cols());
        if (L_s > 0.0) {
            const Eigen::ArrayXd ws = r_s / (static_cast<double>(r_s.size()) * L_s);
            grad->head(ny) += yctx->backprop(scale_seed(cs, ws));
            if (!boundary_control && drs_du.size() > 0) du_w += ws * drs_du;
            if (rb.size() > 0) {
                const Eigen::ArrayXd wb = rb / (static_cast<double>(rb.size()) * L_s);
                grad->head(ny) += bctx->backprop(scale_seed(cb, wb));
                if (boundary_control && drb_du.size() > 0) du_w += wb * drb_du;
            }
        }
        if (L_a > 0.0) {
            const Eigen::ArrayXd wa = r_a / (static_cast<double>(r_a.size()) * L_a);
            grad->tail(np) += pctx->backprop(scale_seed(ca, wa));
            if (dra_dy.size() > 0) {
                BatchSeed ys;
                ys.value = dy_dnet;
                ys.grad.resize(0, X.cols());
                ys.hess.resize(0, X.cols());
                grad->head(ny) += yctx->backprop(scale_seed(ys, wa * dra_dy));
            }
        }
        // du/dterm = -1/alpha where the projection is slack
        const Eigen::ArrayXd dterm_w = du_w * slack * (-1.0 / alpha);
        if ((dterm_w != 0.0).any()) grad->tail(np) += pctx_c->backprop(scale_seed(dterm, dterm_w));
    }
    return L_s + L_a;
}

} // namespace detail

/// Baseline without the looping projection: state and adjoint networks are
/// trained jointly with the control eliminated in closed form, under the
/// same adaptive flow refinement.
inline AdaptiveResult run_das2_baseline(const ProblemSpec& prob, const AdaptiveConfig& cfg,
                                        const std::string& checkpoint_dir = "") {
    cfg.validate();
    AdaptiveResult res;
    res.record.method = "das2";
    Rng rng(cfg.seed);
    res.set = sample_uniform(prob, cfg.n_r, rng, 0);
    res.flow = detail::make_problem_flow(prob, cfg);

    std::vector<int> sizes{prob.joint_dim()};
    for (int h : cfg.dal.hidden) sizes.push_back(h);
    sizes.push_back(1);
    auto y = std::make_shared<MlpSurrogate>(sizes, cfg.seed);
    auto p = std::make_shared<MlpSurrogate>(sizes, cfg.seed + 1);
    res.triplet.y = y;
    res.triplet.p = p;
    res.triplet.u = optimality_map_control(prob, p);

    Eigen::VectorXd theta(y->param_count() + p->param_count());
    theta << y->params(), p->params();
    OptimizerState opt;
    opt.method = cfg.dal.method;
    opt.step_size = cfg.dal.adam_lr;

    const bool needs_boundary =
        prob.has_state_boundary_term() || prob.control_domain() == ControlDomain::Boundary;

    for (int k = 0; k < cfg.N_adaptive; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const Eigen::MatrixXd X = res.set.points;
        Eigen::MatrixXd Xb;
        if (needs_boundary) {
            Rng brng(cfg.seed ^ (0xb0d7ull + static_cast<std::uint64_t>(k)));
            Xb = prob.sample_boundary_at(resample_params(prob, X, cfg.dal.boundary_m, brng),
                                         brng);
        }

        Objective obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
            y->set_params(th.head(y->param_count()));
            p->set_params(th.tail(p->param_count()));
            return detail::das2_joint_loss(*y, *p, prob, X, Xb, &g);
        };

        double L = 0.0;
        if (cfg.dal.method == OptMethod::QuasiNewton) {
            opt.pairs.clear();
            L = lbfgs_minimize(obj, theta, cfg.das2_epochs, opt).loss;
        } else {
            Eigen::VectorXd g;
            for (int e = 0; e < cfg.das2_epochs; ++e) {
                L = obj(theta, g);
                adam_step(theta, g, opt);
            }
        }
        y->set_params(theta.head(y->param_count()));
        p->set_params(theta.tail(p->param_count()));

        RunRecord::StageRow row;
        row.stage = k;
        row.set_size = res.set.size();
        row.L_s = L; // joint objective; components not tracked separately

        DalLogRow lr;
        lr.epoch = k;
        lr.L_s = L;
        res.training_log.push_back(lr);

        if (k + 1 < cfg.N_adaptive) detail::refit_and_refine(res, prob, cfg, k, rng, row);
        detail::fill_error_columns(row, res.triplet, prob, cfg);
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.record.stages.push_back(row);
        detail::checkpoint_stage(checkpoint_dir, k, res.triplet, res.flow);
    }
    return res;
}

} // namespace ocp

#endif // OCP_ADAPTIVE_HPP
