#ifndef OCP_NETGRAD_HPP
#define OCP_NETGRAD_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "ocp/network.hpp"

namespace ocp {

/// Batched evaluation of a scalar-output MLP together with first and pure
/// second input derivatives along selected coordinates. Derivatives are
/// propagated forward through the layers (tangent recursions alongside the
/// activations); parameter gradients of any scalar function of
/// (value, grad, hess) come from the matching reverse sweep below. All
/// per-layer quantities are width x batch matrices, so everything is GEMM.
struct BatchDerivs {
    Eigen::ArrayXd value;  // m
    Eigen::MatrixXd grad;  // s x m, d(out)/d x_{didx[i]}
    Eigen::MatrixXd hess;  // s x m, d2(out)/d x_{didx[i]}^2
};

/// Adjoint seeds: d(scalar objective)/d value, grad, hess per point.
struct BatchSeed {
    Eigen::ArrayXd value;
    Eigen::MatrixXd grad;
    Eigen::MatrixXd hess;
};

class MlpDerivEval {
public:
    /// order: 0 = values only, 1 = + first derivatives, 2 = + pure seconds.
    void forward(const Network& net, const Eigen::MatrixXd& X,
                 const std::vector<int>& didx, int order, BatchDerivs& out) {
        if (net.output_dim() != 1)
            throw std::invalid_argument("MlpDerivEval: scalar-output network required");
        if (X.rows() != net.input_dim())
            throw std::invalid_argument("MlpDerivEval: input dim mismatch");
        for (int i : didx)
            if (i < 0 || i >= net.input_dim())
                throw std::out_of_range("MlpDerivEval: derivative index out of range");
        if (net.activation != Activation::Tanh && net.num_layers() > 1 && order > 0)
            throw std::invalid_argument("MlpDerivEval: derivatives implemented for tanh hidden layers");

        net_ = &net;
        didx_ = didx;
        order_ = order;
        const int L = net.num_layers();
        const auto m = X.cols();
        const int s = static_cast<int>(didx.size());

        A_.assign(static_cast<std::size_t>(L) + 1, {});
        G_.assign(static_cast<std::size_t>(L) + 1, {});
        H_.assign(static_cast<std::size_t>(L) + 1, {});
        U_.assign(L, {});
        V_.assign(L, {});
        A_[0] = X;
        if (order >= 1) {
            G_[0].resize(s);
            H_[0].resize(s);
        }

        for (int l = 0; l < L; ++l) {
            const auto& W = net.weights[l];
            const bool hidden = l + 1 < L;
            Eigen::MatrixXd Z = (W * A_[l]).colwise() + net.biases[l];
            if (order >= 1) {
                U_[l].resize(s);
                V_[l].resize(s);
                G_[l + 1].resize(s);
                H_[l + 1].resize(s);
                for (int i = 0; i < s; ++i) {
                    if (l == 0)
                        U_[l][i] = W.col(didx[i]) * Eigen::RowVectorXd::Ones(m);
                    else
                        U_[l][i] = W * G_[l][i];
                    if (order >= 2) {
                        if (l == 0)
                            V_[l][i] = Eigen::MatrixXd::Zero(W.rows(), m);
                        else
                            V_[l][i] = W * H_[l][i];
                    }
                }
            }
            if (hidden) {
                Eigen::ArrayXXd T = Z.array().tanh();
                Eigen::ArrayXXd d1 = 1.0 - T.square();
                for (int i = 0; i < s && order >= 1; ++i) {
                    G_[l + 1][i] = (d1 * U_[l][i].array()).matrix();
                    if (order >= 2)
                        H_[l + 1][i] = (-2.0 * T * d1 * U_[l][i].array().square() +
                                        d1 * V_[l][i].array())
                                           .matrix();
                }
                A_[l + 1] = T.matrix();
            } else {
                for (int i = 0; i < s && order >= 1; ++i) {
                    G_[l + 1][i] = U_[l][i];
                    if (order >= 2) H_[l + 1][i] = V_[l][i];
                }
                A_[l + 1] = std::move(Z);
            }
        }

        out.value = A_[L].row(0).array();
        out.grad.resize(s, m);
        out.hess.resize(order >= 2 ? s : 0, m);
        for (int i = 0; i < s && order >= 1; ++i) {
            out.grad.row(i) = G_[L][i].row(0);
            if (order >= 2) out.hess.row(i) = H_[L][i].row(0);
        }
    }

    /// Reverse sweep for the last forward() call. Returns the gradient with
    /// respect to the flat parameter vector of sum_points seeded objective.
    Eigen::VectorXd backward_params(const BatchSeed& seed) const {
        const Network& net = *net_;
        const int L = net.num_layers();
        const int s = order_ >= 1 ? static_cast<int>(didx_.size()) : 0;
        const auto m = A_[0].cols();

        std::vector<Eigen::MatrixXd> Wg(L);
        std::vector<Eigen::VectorXd> bg(L);

        // Adjoints of the current layer's outputs (activation-level).
        Eigen::MatrixXd Abar = Eigen::MatrixXd::Zero(1, m);
        Abar.row(0) = seed.value.matrix().transpose();
        std::vector<Eigen::MatrixXd> Gbar(s), Hbar(s);
        for (int i = 0; i < s; ++i) {
            Gbar[i] = Eigen::MatrixXd::Zero(1, m);
            if (seed.grad.rows() == s) Gbar[i].row(0) = seed.grad.row(i);
            Hbar[i] = Eigen::MatrixXd::Zero(1, m);
            if (order_ >= 2 && seed.hess.rows() == s) Hbar[i].row(0) = seed.hess.row(i);
        }

        for (int l = L - 1; l >= 0; --l) {
            const auto& W = net.weights[l];
            const bool hidden = l + 1 < L;
            Eigen::MatrixXd Zbar;
            std::vector<Eigen::MatrixXd> Ubar(s), Vbar(s);
            if (hidden) {
                const Eigen::ArrayXXd T = A_[l + 1].array();
                const Eigen::ArrayXXd d1 = 1.0 - T.square();
                const Eigen::ArrayXXd d2 = -2.0 * T * d1;
                Eigen::ArrayXXd zb = Abar.array() * d1;
                for (int i = 0; i < s; ++i) {
                    const Eigen::ArrayXXd Ui = U_[l][i].array();
                    if (order_ >= 1) zb += Gbar[i].array() * d2 * Ui;
                    if (order_ >= 2) {
                        const Eigen::ArrayXXd d3 = d1 * (6.0 * T.square() - 2.0);
                        zb += Hbar[i].array() *
                              (d3 * Ui.square() + d2 * V_[l][i].array());
                    }
                    Eigen::ArrayXXd ub = Gbar[i].array() * d1;
                    if (order_ >= 2) ub += Hbar[i].array() * d2 * 2.0 * Ui;
                    Ubar[i] = ub.matrix();
                    if (order_ >= 2) Vbar[i] = (Hbar[i].array() * d1).matrix();
                }
                Zbar = zb.matrix();
            } else {
                Zbar = Abar;
                for (int i = 0; i < s; ++i) {
                    Ubar[i] = Gbar[i];
                    if (order_ >= 2) Vbar[i] = Hbar[i];
                }
            }

            Wg[l] = Zbar * A_[l].transpose();
            bg[l] = Zbar.rowwise().sum();
            for (int i = 0; i < s && order_ >= 1; ++i) {
                if (l == 0) {
                    // Layer-0 tangents are W.col(didx), constant over batch.
                    Wg[l].col(didx_[i]) += Ubar[i].rowwise().sum();
                } else {
                    Wg[l] += Ubar[i] * G_[l][i].transpose();
                    if (order_ >= 2) Wg[l] += Vbar[i] * H_[l][i].transpose();
                }
            }

            if (l > 0) {
                Abar = W.transpose() * Zbar;
                for (int i = 0; i < s && order_ >= 1; ++i) {
                    Gbar[i] = W.transpose() * Ubar[i];
                    if (order_ >= 2) Hbar[i] = W.transpose() * Vbar[i];
                }
            }
        }

        Eigen::VectorXd flat(net.param_count());
        Eigen::Index k = 0;
        for (int l = 0; l < L; ++l) {
            const auto& wg = Wg[l];
            for (Eigen::Index i = 0; i < wg.rows(); ++i)
                for (Eigen::Index j = 0; j < wg.cols(); ++j) flat[k++] = wg(i, j);
            for (Eigen::Index i = 0; i < bg[l].size(); ++i) flat[k++] = bg[l][i];
        }
        return flat;
    }

private:
    const Network* net_ = nullptr;
    std::vector<int> didx_;
    int order_ = 0;
    std::vector<Eigen::MatrixXd> A_;                // activations, A_[0] = X
    std::vector<std::vector<Eigen::MatrixXd>> G_;   // d A / d x_i per layer
    std::vector<std::vector<Eigen::MatrixXd>> H_;   // d2 A / d x_i^2 per layer
    std::vector<std::vector<Eigen::MatrixXd>> U_;   // pre-activation tangents
    std::vector<std::vector<Eigen::MatrixXd>> V_;
};

// ---------------------------------------------------------------------------
// diffcore public operations
// ---------------------------------------------------------------------------

/// d(output)/d(input_j) for a scalar-output network, exact for the graph.
inline Eigen::VectorXd grad_input(const Network& net, const Eigen::VectorXd& x) {
    if (net.output_dim() != 1)
        throw std::invalid_argument("grad_input: scalar-output network required "
                                    "(differentiate components separately)");
    std::vector<int> didx(net.input_dim());
    for (int i = 0; i < net.input_dim(); ++i) didx[i] = i;
    MlpDerivEval ev;
    BatchDerivs d;
    ev.forward(net, x, didx, 1, d);
    return d.grad.col(0);
}

/// Sum of pure second derivatives over the given input coordinates.
inline double laplacian(const Network& net, const Eigen::VectorXd& x,
                        const std::vector<int>& spatial_indices) {
    MlpDerivEval ev;
    BatchDerivs d;
    ev.forward(net, x, spatial_indices, 2, d);
    return d.hess.col(0).sum();
}

/// Exact reverse-mode parameter gradient of a recorded scalar loss: the
/// tape route. Training uses the batched kernels above; this is the
/// general-purpose (and independently testable) path.
inline Eigen::VectorXd grad_params(ad::Tape& tape, ad::Var loss,
                                   const TapedNetwork& rec) {
    if (!std::isfinite(tape.value(loss)))
        throw std::runtime_error("grad_params: non-finite loss at node " +
                                 std::to_string(loss.idx));
    auto gs = tape.gradient(loss, rec.params);
    Eigen::VectorXd out(gs.size());
    for (std::size_t i = 0; i < gs.size(); ++i) out[static_cast<Eigen::Index>(i)] = tape.value(gs[i]);
    return out;
}

// ---------------------------------------------------------------------------
// First-order batched VJP for multi-output networks (flow conditioners).
// ---------------------------------------------------------------------------

class MlpVjp {
public:
    const Eigen::MatrixXd& forward(const Network& net, const Eigen::MatrixXd& X) {
        net_ = &net;
        const int L = net.num_layers();
        A_.assign(static_cast<std::size_t>(L) + 1, {});
        A_[0] = X;
        for (int l = 0; l < L; ++l) {
            Eigen::MatrixXd Z = (net.weights[l] * A_[l]).colwise() + net.biases[l];
            if (l + 1 < L && net.activation == Activation::Tanh)
                A_[l + 1] = Z.array().tanh().matrix();
            else
                A_[l + 1] = std::move(Z);
        }
        return A_[L];
    }

    /// Backward from output adjoints (out_dim x m). Accumulates the flat
    /// parameter gradient into param_grad and returns input adjoints.
    Eigen::MatrixXd backward(const Eigen::MatrixXd& out_bar, Eigen::VectorXd& param_grad) const {
        const Network& net = *net_;
        const int L = net.num_layers();
        Eigen::MatrixXd bar = out_bar;
        std::vector<Eigen::MatrixXd> Wg(L);
        std::vector<Eigen::VectorXd> bg(L);
        for (int l = L - 1; l >= 0; --l) {
            if (l + 1 < L && net.activation == Activation::Tanh) {
                // bar arrives w.r.t. activations; convert to pre-activation.
                bar = (bar.array() * (1.0 - A_[l + 1].array().square())).matrix();
            }
            Wg[l] = bar * A_[l].transpose();
            bg[l] = bar.rowwise().sum();
            bar = net.weights[l].transpose() * bar;
        }
        Eigen::Index k = 0;
        for (int l = 0; l < L; ++l) {
            const auto& wg = Wg[l];
            for (Eigen::Index i = 0; i < wg.rows(); ++i)
                for (Eigen::Index j = 0; j < wg.cols(); ++j) param_grad[k++] += wg(i, j);
            for (Eigen::Index i = 0; i < bg[l].size(); ++i) param_grad[k++] += bg[l][i];
        }
        return bar;
    }

private:
    const Network* net_ = nullptr;
    std::vector<Eigen::MatrixXd> A_;
};

} // namespace ocp

#endif
