#ifndef OCP_FLOW_HPP
#define OCP_FLOW_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocp/netgrad.hpp"
#include "ocp/network.hpp"
#include "ocp/optim.hpp"
#include "ocp/rng.hpp"

namespace ocp {

/// Unnormalized density to fit; must be >= 0 everywhere and 0 outside the
/// region of interest.
struct DensityTarget {
    std::function<double(const Eigen::VectorXd&)> unnormalized;
};

/// Invertible coupling model on the open box (box_lo, box_hi).
///
/// Generative direction (latent z -> point x): `blocks` groups of
/// `layers_per_block` affine coupling layers, coordinates reversed between
/// consecutive groups, then an elementwise scaled logistic squash onto the
/// box. Each coupling layer transforms one half of the coordinates,
/// b' = b * exp(s~(a)) + t(a), conditioned on the untouched half, with
/// s~ = scale_cap * tanh(raw) so a single layer can never stretch any
/// direction by more than exp(scale_cap). Conditioners are small dense
/// networks whose final layers start at zero, so a fresh flow is the plain
/// squashed standard normal.
struct CouplingFlow {
    struct Layer {
        Network s_net;
        Network t_net;
        bool swap = false; // true: transform the first half instead of the second
    };

    int dim = 0;
    int blocks = 0;
    int layers_per_block = 0;
    double scale_cap = 2.0;
    Eigen::VectorXd box_lo, box_hi;
    std::vector<Layer> layers;

    int cond_dim(bool swap) const {
        const int d1 = (dim + 1) / 2;
        return swap ? dim - d1 : d1;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.s_net.param_count() + l.t_net.param_count();
        return n;
    }

    Eigen::VectorXd params() const {
        Eigen::VectorXd theta(param_count());
        Eigen::Index k = 0;
        for (const auto& l : layers) {
            Eigen::VectorXd s = flatten_params(l.s_net);
            Eigen::VectorXd t = flatten_params(l.t_net);
            theta.segment(k, s.size()) = s;
            k += s.size();
            theta.segment(k, t.size()) = t;
            k += t.size();
        }
        return theta;
    }

    void set_params(const Eigen::VectorXd& theta) {
        if (theta.size() != static_cast<Eigen::Index>(param_count()))
            throw std::invalid_argument("CouplingFlow::set_params: size mismatch");
        Eigen::Index k = 0;
        for (auto& l : layers) {
            const auto ns = static_cast<Eigen::Index>(l.s_net.param_count());
            unflatten_params(l.s_net, theta.segment(k, ns));
            k += ns;
            const auto nt = static_cast<Eigen::Index>(l.t_net.param_count());
            unflatten_params(l.t_net, theta.segment(k, nt));
            k += nt;
        }
    }
};

inline CouplingFlow make_flow(int dim, int blocks, int layers_per_block, int width,
                              const Eigen::VectorXd& box_lo, const Eigen::VectorXd& box_hi,
                              std::uint64_t seed, double scale_cap = 2.0) {
    if (dim < 2) throw std::invalid_argument("make_flow: need dimension >= 2");
    if (blocks < 1 || layers_per_block < 1 || width < 1)
        throw std::invalid_argument("make_flow: blocks, layers, and width must be positive");
    if (box_lo.size() != dim || box_hi.size() != dim ||
        !((box_hi.array() > box_lo.array()).all()))
        throw std::invalid_argument("make_flow: invalid bounding box");
    if (scale_cap <= 0.0) throw std::invalid_argument("make_flow: scale_cap must be positive");

    CouplingFlow f;
    f.dim = dim;
    f.blocks = blocks;
    f.layers_per_block = layers_per_block;
    f.scale_cap = scale_cap;
    f.box_lo = box_lo;
    f.box_hi = box_hi;
    Rng rng(seed);
    for (int i = 0; i < blocks * layers_per_block; ++i) {
        CouplingFlow::Layer layer;
        layer.swap = (i % 2) == 1;
        const int c = f.cond_dim(layer.swap);
        const int t = dim - c;
        layer.s_net = mlp_init({c, width, t}, rng.below(UINT64_MAX));
        layer.s_net.weights.back().setZero();
        layer.t_net = mlp_init({c, width, t}, rng.below(UINT64_MAX));
        layer.t_net.weights.back().setZero();
        f.layers.push_back(std::move(layer));
    }
    return f;
}

namespace flow_detail {

inline Eigen::MatrixXd reverse_rows(const Eigen::MatrixXd& v) { return v.colwise().reverse(); }

/// Activations kept by a traced density evaluation, consumed by the
/// cross-entropy backward sweep.
struct Trace {
    std::vector<MlpVjp> s_vjp, t_vjp;
    std::vector<Eigen::MatrixXd> s_tilde; // bounded scales per layer
    std::vector<Eigen::MatrixXd> b_in;    // transformed half after the layer
};

} // namespace flow_detail

/// Map points (dim x m, strictly inside the box) to latents; accumulates the
/// exact log|det| of the map in log_det. A trace may be supplied to enable
/// parameter backpropagation.
inline Eigen::MatrixXd flow_forward(const CouplingFlow& f, const Eigen::MatrixXd& X,
                                    Eigen::ArrayXd& log_det,
                                    flow_detail::Trace* trace = nullptr) {
    if (X.rows() != f.dim) throw std::invalid_argument("flow_forward: dimension mismatch");
    const Eigen::Index m = X.cols();
    const Eigen::ArrayXd w = (f.box_hi - f.box_lo).array();
    for (Eigen::Index i = 0; i < m; ++i)
        for (int j = 0; j < f.dim; ++j)
            if (!(X(j, i) > f.box_lo[j] && X(j, i) < f.box_hi[j]))
                throw std::domain_error("flow_forward: point not strictly inside the box");

    // invert the squash: v = logit((x - lo) / w)
    Eigen::ArrayXXd u = ((X.colwise() - f.box_lo).array().colwise() / w);
    Eigen::MatrixXd v = (u / (1.0 - u)).log().matrix();
    log_det = Eigen::ArrayXd::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (int j = 0; j < f.dim; ++j) log_det[i] -= std::log(w[j] * u(j, i) * (1.0 - u(j, i)));

    const int L = f.layers_per_block;
    if (trace) {
        trace->s_vjp.resize(f.layers.size());
        trace->t_vjp.resize(f.layers.size());
        trace->s_tilde.resize(f.layers.size());
        trace->b_in.resize(f.layers.size());
    }
    const int d1 = (f.dim + 1) / 2;
    for (int b = f.blocks - 1; b >= 0; --b) {
        // odd blocks act on reversed coordinates, so an identity block stays
        // the identity end to end
        if (b % 2 == 1) v = flow_detail::reverse_rows(v);
        for (int l = L - 1; l >= 0; --l) {
            const std::size_t idx = static_cast<std::size_t>(b * L + l);
            const auto& layer = f.layers[idx];
            const int c = f.cond_dim(layer.swap);
            const int t = f.dim - c;
            const int c0 = layer.swap ? t : 0;  // rows of the conditioning half
            const int t0 = layer.swap ? 0 : d1; // rows of the transformed half
            Eigen::MatrixXd A = v.middleRows(c0, c);
            Eigen::MatrixXd raw_s, T;
            if (trace) {
                raw_s = trace->s_vjp[idx].forward(layer.s_net, A);
                T = trace->t_vjp[idx].forward(layer.t_net, A);
            } else {
                raw_s = mlp_forward_batch(layer.s_net, A);
                T = mlp_forward_batch(layer.t_net, A);
            }
            Eigen::MatrixXd st = (f.scale_cap * raw_s.array().tanh()).matrix();
            Eigen::MatrixXd B =
                ((v.middleRows(t0, t) - T).array() * (-st.array()).exp()).matrix();
            v.middleRows(t0, t) = B;
            log_det -= st.colwise().sum().transpose().array();
            if (trace) {
                trace->s_tilde[idx] = std::move(st);
                trace->b_in[idx] = std::move(B);
            }
        }
        if (b % 2 == 1) v = flow_detail::reverse_rows(v);
    }
    return v;
}

/// Map latents back to points; always lands strictly inside the box.
inline Eigen::MatrixXd flow_inverse(const CouplingFlow& f, const Eigen::MatrixXd& Z) {
    if (Z.rows() != f.dim) throw std::invalid_argument("flow_inverse: dimension mismatch");
    if (!Z.allFinite()) throw std::invalid_argument("flow_inverse: non-finite latent");
    Eigen::MatrixXd v = Z;
    const int L = f.layers_per_block;
    const int d1 = (f.dim + 1) / 2;
    for (int b = 0; b < f.blocks; ++b) {
        if (b % 2 == 1) v = flow_detail::reverse_rows(v);
        for (int l = 0; l < L; ++l) {
            const auto& layer = f.layers[static_cast<std::size_t>(b * L + l)];
            const int c = f.cond_dim(layer.swap);
            const int t = f.dim - c;
            const int c0 = layer.swap ? t : 0;
            const int t0 = layer.swap ? 0 : d1;
            Eigen::MatrixXd A = v.middleRows(c0, c);
            Eigen::ArrayXXd st = f.scale_cap * mlp_forward_batch(layer.s_net, A).array().tanh();
            Eigen::MatrixXd T = mlp_forward_batch(layer.t_net, A);
            v.middleRows(t0, t) =
                (v.middleRows(t0, t).array() * st.exp() + T.array()).matrix();
        }
        if (b % 2 == 1) v = flow_detail::reverse_rows(v);
    }
    const Eigen::ArrayXd w = (f.box_hi - f.box_lo).array();
    // clamp away from the edges: the logistic saturates in double precision
    // for |v| beyond ~36, which would place samples exactly on the boundary
    Eigen::ArrayXXd sig = (1.0 / (1.0 + (-v.array()).exp())).max(1e-12).min(1.0 - 1e-12);
    return ((sig.colwise() * w).colwise() + f.box_lo.array()).matrix();
}

/// Log-density at each column of X; -infinity outside the box.
inline Eigen::ArrayXd flow_logpdf(const CouplingFlow& f, const Eigen::MatrixXd& X) {
    if (X.rows() != f.dim) throw std::invalid_argument("flow_logpdf: dimension mismatch");
    const Eigen::Index m = X.cols();
    Eigen::ArrayXd out =
        Eigen::ArrayXd::Constant(m, -std::numeric_limits<double>::infinity());
    std::vector<Eigen::Index> inside;
    for (Eigen::Index i = 0; i < m; ++i) {
        bool ok = true;
        for (int j = 0; j < f.dim; ++j)
            if (!(X(j, i) > f.box_lo[j] && X(j, i) < f.box_hi[j])) ok = false;
        if (ok) inside.push_back(i);
    }
    if (inside.empty()) return out;
    Eigen::MatrixXd Xi(f.dim, static_cast<Eigen::Index>(inside.size()));
    for (std::size_t k = 0; k < inside.size(); ++k) Xi.col(static_cast<Eigen::Index>(k)) = X.col(inside[k]);
    Eigen::ArrayXd ld;
    Eigen::MatrixXd Z = flow_forward(f, Xi, ld);
    const double c = -0.5 * f.dim * std::log(2.0 * M_PI);
    Eigen::ArrayXd lp = c - 0.5 * Z.colwise().squaredNorm().transpose().array() + ld;
    for (std::size_t k = 0; k < inside.size(); ++k) out[inside[k]] = lp[static_cast<Eigen::Index>(k)];
    return out;
}

/// Draw `count` points by pushing standard-normal latents through the
/// inverse map. Deterministic given the generator state.
inline Eigen::MatrixXd flow_sample(const CouplingFlow& f, Eigen::Index count, Rng& rng) {
    if (count < 1) throw std::invalid_argument("flow_sample: count must be >= 1");
    Eigen::MatrixXd Z(f.dim, count);
    for (Eigen::Index i = 0; i < count; ++i)
        for (int j = 0; j < f.dim; ++j) Z(j, i) = rng.normal();
    return flow_inverse(f, Z);
}

namespace flow_detail {

/// Weighted negative log-likelihood H = -(1/M) sum w_i log p_flow(x_i) and,
/// if grad is given, dH/dtheta for the flow. The workhorse shared by the
/// cross-entropy objectives; the weights are treated as frozen constants.
inline double weighted_nll(CouplingFlow& flow, const Eigen::ArrayXd& w, const Eigen::MatrixXd& X,
                           Eigen::VectorXd* grad = nullptr) {
    const Eigen::Index m = X.cols();
    if (m < 1) throw std::invalid_argument("weighted_nll: empty batch");
    flow_detail::Trace trace;
    Eigen::ArrayXd ld;
    Eigen::MatrixXd Z = flow_forward(flow, X, ld, grad ? &trace : nullptr);
    const double c = -0.5 * flow.dim * std::log(2.0 * M_PI);
    Eigen::ArrayXd lp = c - 0.5 * Z.colwise().squaredNorm().transpose().array() + ld;
    const double H = -(w * lp).mean();
    if (!grad) return H;

    grad->setZero(static_cast<Eigen::Index>(flow.param_count()));
    // per-point loss coefficient: d(-w_i lp_i / M)
    Eigen::ArrayXd coef = w / static_cast<double>(m);
    // dH/dz = coef * z, dH/dlog_det = -coef
    Eigen::MatrixXd vbar = (Z.array().rowwise() * coef.transpose()).matrix();

    // walk the forward pass in reverse: blocks 0..K-1, layers 0..L-1
    const int L = flow.layers_per_block;
    const int d1 = (flow.dim + 1) / 2;
    // parameter segment offsets per layer
    std::vector<Eigen::Index> seg(flow.layers.size() + 1, 0);
    for (std::size_t i = 0; i < flow.layers.size(); ++i)
        seg[i + 1] = seg[i] + static_cast<Eigen::Index>(flow.layers[i].s_net.param_count() +
                                                        flow.layers[i].t_net.param_count());
    for (int b = 0; b < flow.blocks; ++b) {
        if (b % 2 == 1) vbar = flow_detail::reverse_rows(vbar);
        for (int l = 0; l < L; ++l) {
            const std::size_t idx = static_cast<std::size_t>(b * L + l);
            const auto& layer = flow.layers[idx];
            const int cd = flow.cond_dim(layer.swap);
            const int t = flow.dim - cd;
            const int c0 = layer.swap ? t : 0;
            const int t0 = layer.swap ? 0 : d1;
            const Eigen::MatrixXd& st = trace.s_tilde[idx];
            const Eigen::MatrixXd& B = trace.b_in[idx];
            Eigen::MatrixXd bar_b = vbar.middleRows(t0, t);
            // b = (b' - t) * exp(-s~); layer adds -sum(s~) to log_det
            Eigen::MatrixXd bar_st =
                ((-bar_b.array() * B.array()).rowwise() + coef.transpose()).matrix();
            Eigen::MatrixXd bar_bprime = (bar_b.array() * (-st.array()).exp()).matrix();
            Eigen::MatrixXd bar_t = -bar_bprime;
            Eigen::MatrixXd bar_raw =
                (bar_st.array() * flow.scale_cap *
                 (1.0 - (st.array() / flow.scale_cap).square()))
                    .matrix();
            const auto ns = static_cast<Eigen::Index>(layer.s_net.param_count());
            Eigen::VectorXd gs = Eigen::VectorXd::Zero(ns);
            Eigen::MatrixXd bar_a_s = trace.s_vjp[idx].backward(bar_raw, gs);
            const auto nt = static_cast<Eigen::Index>(layer.t_net.param_count());
            Eigen::VectorXd gt = Eigen::VectorXd::Zero(nt);
            Eigen::MatrixXd bar_a_t = trace.t_vjp[idx].backward(bar_t, gt);
            grad->segment(seg[idx], ns) += gs;
            grad->segment(seg[idx] + ns, nt) += gt;
            vbar.middleRows(t0, t) = bar_bprime;
            vbar.middleRows(c0, cd) += bar_a_s + bar_a_t;
        }
        if (b % 2 == 1) vbar = flow_detail::reverse_rows(vbar);
    }
    return H;
}

} // namespace flow_detail

/// Importance-weighted cross entropy H = -(1/M) sum w_i log p_flow(x_i) with
/// frozen weights w_i = target(x_i) / p_proposal(x_i). The batch must come
/// from the proposal, whose density must be positive at every batch point.
/// If grad is given it receives dH/dtheta_f for the flow being fitted.
inline double cross_entropy_loss(CouplingFlow& flow, const CouplingFlow& proposal,
                                 const DensityTarget& target, const Eigen::MatrixXd& X,
                                 Eigen::VectorXd* grad = nullptr) {
    const Eigen::Index m = X.cols();
    if (m < 1) throw std::invalid_argument("cross_entropy_loss: empty batch");
    Eigen::ArrayXd lp_prop = flow_logpdf(proposal, X);
    Eigen::ArrayXd w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!std::isfinite(lp_prop[i]))
            throw std::runtime_error("cross_entropy_loss: proposal density vanishes at a batch point");
        const double r = target.unnormalized(X.col(i));
        if (!(r >= 0.0) || !std::isfinite(r))
            throw std::runtime_error("cross_entropy_loss: target must be finite and nonnegative");
        w[i] = r * std::exp(-lp_prop[i]);
    }
    // The target is unnormalized, so the weights carry an arbitrary overall
    // scale that can over- or underflow; self-normalizing fixes the scale of
    // H (and its gradient) without changing the minimizer.
    const double wbar = w.mean();
    if (wbar > 0.0) w /= wbar;
    return flow_detail::weighted_nll(flow, w, X, grad);
}

/// Fit the flow to the target by stochastic gradient on the cross entropy,
/// drawing a fresh proposal batch per epoch. Aborts on a non-finite loss,
/// restoring the last good parameters. Returns the loss trace.
inline std::vector<double> train_flow(CouplingFlow& flow, const DensityTarget& target,
                                      const CouplingFlow& proposal, int epochs,
                                      Eigen::Index batch_size, Rng& rng, double lr = 1e-4) {
    if (epochs < 0) throw std::invalid_argument("train_flow: negative epoch count");
    std::vector<double> trace;
    OptimizerState st;
    st.step_size = lr;
    Eigen::VectorXd theta = flow.params();
    Eigen::VectorXd good = theta;
    for (int e = 0; e < epochs; ++e) {
        Eigen::MatrixXd X = flow_sample(proposal, batch_size, rng);
        Eigen::VectorXd g;
        const double H = cross_entropy_loss(flow, proposal, target, X, &g);
        if (!std::isfinite(H) || !g.allFinite()) {
            flow.set_params(good);
            break;
        }
        good = theta;
        trace.push_back(H);
        adam_step(theta, g, st);
        flow.set_params(theta);
    }
    return trace;
}

/// One sampling-importance-resampling round: draw a reservoir from the frozen
/// proposal, weight each point by target/proposal, then fit the flow by
/// maximum likelihood on batches resampled from the reservoir in proportion
/// to the weights. Unlike train_flow, a rare high-weight reservoir point is
/// revisited every epoch instead of appearing once, which is what makes a
/// sharply concentrated target learnable from a broad proposal. If the
/// target vanishes on the whole reservoir there is nothing to fit; the flow
/// is left untouched and the trace comes back empty.
inline std::vector<double> train_flow_sir(CouplingFlow& flow, const DensityTarget& target,
                                          const CouplingFlow& proposal, int epochs,
                                          Eigen::Index batch_size, Eigen::Index reservoir_size,
                                          Rng& rng, double lr = 1e-4) {
    if (epochs < 0) throw std::invalid_argument("train_flow_sir: negative epoch count");
    if (batch_size < 1 || reservoir_size < 1)
        throw std::invalid_argument("train_flow_sir: batch and reservoir sizes must be >= 1");
    const Eigen::MatrixXd R = flow_sample(proposal, reservoir_size, rng);
    const Eigen::ArrayXd lp_prop = flow_logpdf(proposal, R);
    // Log-domain weights shifted by their maximum: immune to the
    // over/underflow a concentrated proposal density would otherwise cause.
    Eigen::ArrayXd logw =
        Eigen::ArrayXd::Constant(reservoir_size, -std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < reservoir_size; ++i) {
        const double r = target.unnormalized(R.col(i));
        if (!(r >= 0.0) || !std::isfinite(r))
            throw std::runtime_error("train_flow_sir: target must be finite and nonnegative");
        if (r > 0.0 && std::isfinite(lp_prop[i])) logw[i] = std::log(r) - lp_prop[i];
    }
    std::vector<double> trace;
    const double wmax = logw.maxCoeff();
    if (!std::isfinite(wmax)) return trace;
    std::vector<double> cum(static_cast<std::size_t>(reservoir_size));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < reservoir_size; ++i) {
        acc += std::exp(logw[i] - wmax);
        cum[static_cast<std::size_t>(i)] = acc;
    }

    OptimizerState st;
    st.step_size = lr;
    Eigen::VectorXd theta = flow.params();
    Eigen::VectorXd good = theta;
    const Eigen::ArrayXd ones = Eigen::ArrayXd::Ones(batch_size);
    Eigen::MatrixXd X(flow.dim, batch_size);
    for (int e = 0; e < epochs; ++e) {
        for (Eigen::Index i = 0; i < batch_size; ++i) {
            const double u = rng.uniform(0.0, acc);
            const auto it = std::lower_bound(cum.begin(), cum.end(), u);
            const Eigen::Index j = std::min<Eigen::Index>(
                static_cast<Eigen::Index>(it - cum.begin()), reservoir_size - 1);
            X.col(i) = R.col(j);
        }
        Eigen::VectorXd g;
        const double H = flow_detail::weighted_nll(flow, ones, X, &g);
        if (!std::isfinite(H) || !g.allFinite()) {
            flow.set_params(good);
            break;
        }
        good = theta;
        trace.push_back(H);
        adam_step(theta, g, st);
        flow.set_params(theta);
    }
    return trace;
}

// --- checkpointing: text manifest then flat little-endian f64 payload ---

inline void save_flow(const CouplingFlow& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_flow: cannot open " + path);
    out << "ocp-checkpoint-v1\n";
    out << "kind: flow\n";
    out << "dim: " << f.dim << '\n';
    out << "blocks: " << f.blocks << '\n';
    out << "layers_per_block: " << f.layers_per_block << '\n';
    out << "scale_cap: " << f.scale_cap << '\n';
    out << "hidden_width: " << f.layers.front().s_net.sizes[1] << '\n';
    out << "box_lo:";
    for (int j = 0; j < f.dim; ++j) out << ' ' << f.box_lo[j];
    out << '\n';
    out << "box_hi:";
    for (int j = 0; j < f.dim; ++j) out << ' ' << f.box_hi[j];
    out << '\n';
    out << "split: alternating-halves\n";
    out << "params: " << f.param_count() << '\n';
    out << "data:\n";
    Eigen::VectorXd theta = f.params();
    out.write(reinterpret_cast<const char*>(theta.data()),
              static_cast<std::streamsize>(sizeof(double) * theta.size()));
}

inline CouplingFlow load_flow(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_flow: cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "ocp-checkpoint-v1") throw std::runtime_error("load_flow: bad magic in " + path);
    int dim = 0, blocks = 0, lpb = 0, width = 0;
    double cap = 2.0;
    Eigen::VectorXd lo, hi;
    std::size_t nparams = 0;
    while (std::getline(in, line)) {
        if (line == "data:") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "kind:") {
            std::string kind;
            ls >> kind;
            if (kind != "flow") throw std::runtime_error("load_flow: not a flow checkpoint");
        } else if (key == "dim:") {
            ls >> dim;
        } else if (key == "blocks:") {
            ls >> blocks;
        } else if (key == "layers_per_block:") {
            ls >> lpb;
        } else if (key == "scale_cap:") {
            ls >> cap;
        } else if (key == "hidden_width:") {
            ls >> width;
        } else if (key == "box_lo:") {
            std::vector<double> v;
            double x;
            while (ls >> x) v.push_back(x);
            lo = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        } else if (key == "box_hi:") {
            std::vector<double> v;
            double x;
            while (ls >> x) v.push_back(x);
            hi = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        } else if (key == "params:") {
            ls >> nparams;
        }
    }
    CouplingFlow f = make_flow(dim, blocks, lpb, width, lo, hi, 0, cap);
    if (f.param_count() != nparams) throw std::runtime_error("load_flow: parameter count mismatch");
    Eigen::VectorXd theta(static_cast<Eigen::Index>(nparams));
    in.read(reinterpret_cast<char*>(theta.data()),
            static_cast<std::streamsize>(sizeof(double) * theta.size()));
    if (!in) throw std::runtime_error("load_flow: truncated payload in " + path);
    f.set_params(theta);
    return f;
}

} // namespace ocp

#endif // OCP_FLOW_HPP
