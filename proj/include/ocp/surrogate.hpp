#ifndef OCP_SURROGATE_HPP
#define OCP_SURROGATE_HPP

#include <functional>
#include <memory>
#include <stdexcept>

#include "ocp/netgrad.hpp"
#include "ocp/network.hpp"

namespace ocp {

/// Handle to one batched evaluation; keeps whatever intermediate state the
/// reverse sweep needs, so several evaluations of the same surrogate (e.g.
/// interior and boundary batches) can coexist within one loss.
class EvalContext {
public:
    virtual ~EvalContext() = default;
    /// Flat parameter gradient of sum_i seeded objective.
    virtual Eigen::VectorXd backprop(const BatchSeed& seed) const = 0;
};

/// A scalar field surrogate: either a trainable network or a fixed closure.
class Surrogate {
public:
    virtual ~Surrogate() = default;
    virtual int input_dim() const = 0;
    virtual bool trainable() const = 0;
    virtual Eigen::Index param_count() const = 0;
    virtual Eigen::VectorXd params() const = 0;
    virtual void set_params(const Eigen::VectorXd& theta) = 0;
    /// order: 0 values, 1 + first, 2 + pure second derivatives along didx.
    virtual std::unique_ptr<EvalContext> eval(const Eigen::MatrixXd& F,
                                              const std::vector<int>& didx, int order,
                                              BatchDerivs& out) const = 0;
};

class MlpSurrogate final : public Surrogate {
    class Ctx final : public EvalContext {
    public:
        MlpDerivEval ev;
        Eigen::VectorXd backprop(const BatchSeed& seed) const override {
            return ev.backward_params(seed);
        }
    };

public:
    explicit MlpSurrogate(Network net) : net_(std::move(net)) {}
    MlpSurrogate(const std::vector<int>& layer_sizes, std::uint64_t seed)
        : net_(mlp_init(layer_sizes, seed)) {}

    int input_dim() const override { return net_.input_dim(); }
    bool trainable() const override { return true; }
    Eigen::Index param_count() const override { return net_.param_count(); }
    Eigen::VectorXd params() const override { return flatten_params(net_); }
    void set_params(const Eigen::VectorXd& theta) override { unflatten_params(net_, theta); }

    std::unique_ptr<EvalContext> eval(const Eigen::MatrixXd& F, const std::vector<int>& didx,
                                      int order, BatchDerivs& out) const override {
        auto ctx = std::make_unique<Ctx>();
        ctx->ev.forward(net_, F, didx, order, out);
        return ctx;
    }

    const Network& network() const { return net_; }
    Network& network() { return net_; }

private:
    Network net_;
};

/// Fixed analytic field; derivatives by fourth-order central differences.
/// Useful for planting a known solution inside the training loop.
class ClosureSurrogate final : public Surrogate {
    class Ctx final : public EvalContext {
    public:
        Eigen::VectorXd backprop(const BatchSeed&) const override {
            throw std::logic_error("ClosureSurrogate has no parameters to differentiate");
        }
    };

public:
    ClosureSurrogate(std::function<double(const Eigen::VectorXd&)> f, int dim, double h = 1e-3)
        : f_(std::move(f)), dim_(dim), h_(h) {}

    int input_dim() const override { return dim_; }
    bool trainable() const override { return false; }
    Eigen::Index param_count() const override { return 0; }
    Eigen::VectorXd params() const override { return Eigen::VectorXd(); }
    void set_params(const Eigen::VectorXd&) override {
        throw std::logic_error("ClosureSurrogate has no parameters");
    }

    std::unique_ptr<EvalContext> eval(const Eigen::MatrixXd& F, const std::vector<int>& didx,
                                      int order, BatchDerivs& out) const override {
        const Eigen::Index m = F.cols();
        const int s = static_cast<int>(didx.size());
        out.value.resize(m);
        out.grad.resize(order >= 1 ? s : 0, m);
        out.hess.resize(order >= 2 ? s : 0, m);
        Eigen::VectorXd x(dim_);
        for (Eigen::Index i = 0; i < m; ++i) {
            x = F.col(i);
            const double f0 = f_(x);
            out.value[i] = f0;
            for (int k = 0; k < s && order >= 1; ++k) {
                const int j = didx[static_cast<std::size_t>(k)];
                const double c = x[j];
                x[j] = c + h_;
                const double fp = f_(x);
                x[j] = c - h_;
                const double fm = f_(x);
                x[j] = c + 2.0 * h_;
                const double fpp = f_(x);
                x[j] = c - 2.0 * h_;
                const double fmm = f_(x);
                x[j] = c;
                out.grad(k, i) = (-fpp + 8.0 * fp - 8.0 * fm + fmm) / (12.0 * h_);
                if (order >= 2)
                    out.hess(k, i) =
                        (-fpp + 16.0 * fp - 30.0 * f0 + 16.0 * fm - fmm) / (12.0 * h_ * h_);
            }
        }
        return std::make_unique<Ctx>();
    }

private:
    std::function<double(const Eigen::VectorXd&)> f_;
    int dim_;
    double h_;
};

} // namespace ocp

#endif
