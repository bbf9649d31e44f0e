#ifndef OCP_PROBLEMS_ORACLE1D_HPP
#define OCP_PROBLEMS_ORACLE1D_HPP

#include <cmath>
#include <memory>

#include "ocp/problem.hpp"

namespace ocp {

/// Desk-scale 1-D oracle with a fully analytic optimum:
///   minimize 1/2||y - y_d||^2 + alpha/2||u||^2
///   s.t. -y'' = u on (0,1), y(0) = y(1) = 0,
/// with y_d = -sin(pi x)/pi^2 - alpha pi^2 sin(pi x), whose optimal triple is
///   u* = -sin(pi x), y* = -sin(pi x)/pi^2, p* = alpha sin(pi x).
/// Both y and p are hard-enforced through the length factor l = x(1-x).
/// The control is distributed; the box [-10, 10] never activates.
class Oracle1dProblem final : public ProblemSpec {
public:
    explicit Oracle1dProblem(double alpha = 0.01) : alpha_(alpha) {}

    std::string name() const override { return "oracle1d"; }
    int spatial_dim() const override { return 1; }
    int param_dim() const override { return 0; }
    double alpha() const override { return alpha_; }

    Eigen::VectorXd hull_lo() const override { return Eigen::VectorXd::Zero(1); }
    Eigen::VectorXd hull_hi() const override { return Eigen::VectorXd::Ones(1); }

    bool membership(const Eigen::VectorXd& pt) const override {
        return pt[0] > 0.0 && pt[0] < 1.0;
    }

    std::vector<int> deriv_indices() const override { return {0}; }
    ControlDomain control_domain() const override { return ControlDomain::Interior; }

    void control_bounds(const Eigen::MatrixXd& X, Eigen::ArrayXd& lo,
                        Eigen::ArrayXd& hi) const override {
        lo = Eigen::ArrayXd::Constant(X.cols(), -10.0);
        hi = Eigen::ArrayXd::Constant(X.cols(), 10.0);
    }

    Eigen::ArrayXd desired_state(const Eigen::MatrixXd& X) const override {
        const double pi = M_PI;
        const Eigen::ArrayXd s = (pi * X.row(0).array()).sin();
        return -s / (pi * pi) - alpha_ * pi * pi * s;
    }

    void wrap_state(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                    Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const override {
        const Eigen::ArrayXd l = X.row(0).array() * (1.0 - X.row(0).array());
        field = l * net;
        if (dvalue) *dvalue = l;
    }
    void wrap_adjoint(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                      Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const override {
        wrap_state(X, net, field, dvalue);
    }

    // -Delta(l q) = -(q l'' + 2 l' q' + l q'') with l = x(1-x).
    void state_residual(const Eigen::MatrixXd& X, const BatchDerivs& y,
                        const Eigen::ArrayXd& u, Eigen::ArrayXd& r, BatchSeed& dr_dy,
                        Eigen::ArrayXd* dr_du = nullptr) const override {
        const Eigen::Index m = X.cols();
        wrapped_seed(X, dr_dy);
        r = dr_dy.value * y.value + dr_dy.grad.row(0).transpose().array() * y.grad.row(0).transpose().array() +
            dr_dy.hess.row(0).transpose().array() * y.hess.row(0).transpose().array() - u;
        if (dr_du) *dr_du = Eigen::ArrayXd::Constant(m, -1.0);
    }

    void adjoint_residual(const Eigen::MatrixXd& X, const BatchDerivs& p,
                          const Eigen::ArrayXd& y_val, Eigen::ArrayXd& r, BatchSeed& dr_dp,
                          Eigen::ArrayXd* dr_dyval = nullptr) const override {
        wrapped_seed(X, dr_dp);
        r = dr_dp.value * p.value + dr_dp.grad.row(0).transpose().array() * p.grad.row(0).transpose().array() +
            dr_dp.hess.row(0).transpose().array() * p.hess.row(0).transpose().array() -
            (y_val - desired_state(X));
        if (dr_dyval) *dr_dyval = Eigen::ArrayXd::Constant(X.cols(), -1.0);
    }

    void adjoint_term_at_control(const Eigen::MatrixXd& Xc, const BatchDerivs& p,
                                 Eigen::ArrayXd& term, BatchSeed* dterm = nullptr) const override {
        Eigen::ArrayXd l;
        wrap_adjoint(Xc, p.value, term, &l);
        if (dterm) {
            dterm->value = l;
            dterm->grad.resize(0, Xc.cols());
            dterm->hess.resize(0, Xc.cols());
        }
    }

    Eigen::MatrixXd sample_boundary_at(const Eigen::MatrixXd& Xi, Rng& rng) const override {
        Eigen::MatrixXd pts(1, Xi.cols());
        for (Eigen::Index i = 0; i < Xi.cols(); ++i)
            pts(0, i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
        return pts;
    }

    bool has_analytic() const override { return true; }
    double exact_state(const Eigen::VectorXd& pt) const override {
        return -std::sin(M_PI * pt[0]) / (M_PI * M_PI);
    }
    double exact_control(const Eigen::VectorXd& pt) const override {
        return -std::sin(M_PI * pt[0]);
    }
    double exact_adjoint(const Eigen::VectorXd& pt) const override {
        return alpha_ * std::sin(M_PI * pt[0]);
    }

    std::function<double(const Eigen::VectorXd&)> exact_raw_state() const override {
        return [](const Eigen::VectorXd& x) {
            return -std::sin(M_PI * x[0]) / (M_PI * M_PI * x[0] * (1.0 - x[0]));
        };
    }
    std::function<double(const Eigen::VectorXd&)> exact_raw_adjoint() const override {
        const double a = alpha_;
        return [a](const Eigen::VectorXd& x) {
            return a * std::sin(M_PI * x[0]) / (x[0] * (1.0 - x[0]));
        };
    }
    std::function<double(const Eigen::VectorXd&)> exact_raw_control() const override {
        return [](const Eigen::VectorXd& x) { return -std::sin(M_PI * x[0]); };
    }

private:
    // Partials of -Delta(l q) w.r.t. the raw net (value, q', q'').
    void wrapped_seed(const Eigen::MatrixXd& X, BatchSeed& seed) const {
        const Eigen::Index m = X.cols();
        const Eigen::ArrayXd x = X.row(0).array();
        seed.value = Eigen::ArrayXd::Constant(m, 2.0);          // -l'' = 2
        seed.grad.resize(1, m);
        seed.grad.row(0) = (-2.0 * (1.0 - 2.0 * x)).matrix();   // -2 l'
        seed.hess.resize(1, m);
        seed.hess.row(0) = (-(x * (1.0 - x))).matrix();         // -l
    }

    double alpha_;
};

inline std::shared_ptr<ProblemSpec> make_oracle1d(double alpha = 0.01) {
    return std::make_shared<Oracle1dProblem>(alpha);
}

} // namespace ocp

#endif
