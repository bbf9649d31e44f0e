#ifndef OCP_PROBLEMS_TEST3_HPP
#define OCP_PROBLEMS_TEST3_HPP

#include <cmath>
#include <memory>

#include "ocp/problem.hpp"

namespace ocp {

/// Boundary control of the Laplace equation on the unit disk, posed in polar
/// coordinates (r, theta) with a 10-dimensional parameter:
///   minimize 1/2||y - y_d||^2_Omega + alpha/2||u||^2_bd,  alpha = 0.01,
///   s.t. -Delta y = 0 in Omega, y = u + f on the boundary, 0 <= u <= 1,
/// with g(xi) = exp(-10||xi||^2), xi in [-1,1]^10,
///   y_d = (1/2 + r^2/2 cos 2theta) g,   f = -alpha (1 + 3 r^2 cos 2theta) g,
/// adjoint -Delta p = y - y_d with p = 0 on the boundary, control gradient
/// d_uJ = alpha u - dp/dn, and exact optimum
///   y* = ((1/2 - alpha) + (1/2 - 3 alpha) r^2 cos 2theta) g,
///   u* = clamp(cos^2 theta g, 0, 1),
///   p* = -alpha/4 ((1 - r^2) + (r^2 - r^4) cos 2theta) g.
/// The adjoint is hard-enforced via p = (1 - r^2) p_hat; the state boundary
/// condition involves the unknown control, so it enters the state loss as a
/// soft term on boundary collocation points. Interior residuals are the polar
/// Laplacian scaled by r^2 (same zero set, no coordinate singularity at the
/// origin). The control network sees (cos theta, sin theta, xi), which bakes
/// in periodicity.
class Test3Problem final : public ProblemSpec {
public:
    std::string name() const override { return "test3"; }
    int spatial_dim() const override { return 2; }
    int param_dim() const override { return 10; }
    double alpha() const override { return 0.01; }

    Eigen::VectorXd hull_lo() const override {
        Eigen::VectorXd lo = Eigen::VectorXd::Constant(12, -1.0);
        lo[0] = 0.0;
        lo[1] = 0.0;
        return lo;
    }
    Eigen::VectorXd hull_hi() const override {
        Eigen::VectorXd hi = Eigen::VectorXd::Ones(12);
        hi[1] = 2.0 * M_PI;
        return hi;
    }

    bool membership(const Eigen::VectorXd& pt) const override {
        if (pt[0] <= 0.0 || pt[0] >= 1.0) return false;
        if (pt[1] < 0.0 || pt[1] > 2.0 * M_PI) return false;
        for (int j = 2; j < 12; ++j)
            if (pt[j] < -1.0 || pt[j] > 1.0) return false;
        return true;
    }

    std::vector<int> deriv_indices() const override { return {0, 1}; }
    ControlDomain control_domain() const override { return ControlDomain::Boundary; }

    int control_feature_dim() const override { return 12; }
    Eigen::MatrixXd control_features(const Eigen::MatrixXd& X) const override {
        Eigen::MatrixXd F(12, X.cols());
        F.row(0) = X.row(1).array().cos().matrix();
        F.row(1) = X.row(1).array().sin().matrix();
        F.bottomRows(10) = X.bottomRows(10);
        return F;
    }

    void control_bounds(const Eigen::MatrixXd& X, Eigen::ArrayXd& lo,
                        Eigen::ArrayXd& hi) const override {
        lo = Eigen::ArrayXd::Zero(X.cols());
        hi = Eigen::ArrayXd::Ones(X.cols());
    }

    Eigen::ArrayXd desired_state(const Eigen::MatrixXd& X) const override {
        const Eigen::ArrayXd r2 = X.row(0).array().square();
        const Eigen::ArrayXd c2 = (2.0 * X.row(1).array()).cos();
        return (0.5 + 0.5 * r2 * c2) * gain(X);
    }

    void wrap_state(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                    Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const override {
        field = net;
        if (dvalue) *dvalue = Eigen::ArrayXd::Ones(X.cols());
    }
    void wrap_adjoint(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                      Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const override {
        const Eigen::ArrayXd l = 1.0 - X.row(0).array().square();
        field = l * net;
        if (dvalue) *dvalue = l;
    }

    // r^2-scaled harmonicity residual: -(r^2 y_rr + r y_r + y_tt).
    void state_residual(const Eigen::MatrixXd& X, const BatchDerivs& y,
                        const Eigen::ArrayXd& /*u*/, Eigen::ArrayXd& r, BatchSeed& dr_dy,
                        Eigen::ArrayXd* dr_du = nullptr) const override {
        const Eigen::Index m = X.cols();
        const Eigen::ArrayXd rr = X.row(0).array();
        dr_dy.value = Eigen::ArrayXd::Zero(m);
        dr_dy.grad.resize(2, m);
        dr_dy.grad.row(0) = (-rr).matrix();
        dr_dy.grad.row(1).setZero();
        dr_dy.hess.resize(2, m);
        dr_dy.hess.row(0) = (-rr.square()).matrix();
        dr_dy.hess.row(1) = Eigen::RowVectorXd::Constant(m, -1.0);
        r = dr_dy.grad.row(0).transpose().array() * y.grad.row(0).transpose().array() +
            dr_dy.hess.row(0).transpose().array() * y.hess.row(0).transpose().array() -
            y.hess.row(1).transpose().array();
        if (dr_du) *dr_du = Eigen::ArrayXd::Zero(m);
    }

    bool has_state_boundary_term() const override { return true; }
    void state_boundary_residual(const Eigen::MatrixXd& Xb, const BatchDerivs& y,
                                 const Eigen::ArrayXd& u, Eigen::ArrayXd& r, BatchSeed& dr_dy,
                                 Eigen::ArrayXd* dr_du = nullptr) const override {
        const Eigen::Index m = Xb.cols();
        const Eigen::ArrayXd c2 = (2.0 * Xb.row(1).array()).cos();
        const Eigen::ArrayXd f = -alpha() * (1.0 + 3.0 * c2) * gain(Xb); // r = 1
        r = y.value - u - f;
        dr_dy.value = Eigen::ArrayXd::Ones(m);
        dr_dy.grad.resize(0, m);
        dr_dy.hess.resize(0, m);
        if (dr_du) *dr_du = Eigen::ArrayXd::Constant(m, -1.0);
    }

    // r^2-scaled adjoint residual with p = (1 - r^2) q:
    // -(r^2 Delta p) - r^2 (y - y_d), where
    // r^2 Delta p = (1-r^2)(r^2 q_rr + r q_r + q_tt) - 4 r^3 q_r - 4 r^2 q.
    void adjoint_residual(const Eigen::MatrixXd& X, const BatchDerivs& p,
                          const Eigen::ArrayXd& y_val, Eigen::ArrayXd& r, BatchSeed& dr_dp,
                          Eigen::ArrayXd* dr_dyval = nullptr) const override {
        const Eigen::Index m = X.cols();
        const Eigen::ArrayXd rr = X.row(0).array();
        const Eigen::ArrayXd r2 = rr.square();
        const Eigen::ArrayXd l = 1.0 - r2;
        dr_dp.value = 4.0 * r2;
        dr_dp.grad.resize(2, m);
        dr_dp.grad.row(0) = (-l * rr + 4.0 * rr * r2).matrix();
        dr_dp.grad.row(1).setZero();
        dr_dp.hess.resize(2, m);
        dr_dp.hess.row(0) = (-l * r2).matrix();
        dr_dp.hess.row(1) = (-l).matrix();
        r = dr_dp.value * p.value +
            dr_dp.grad.row(0).transpose().array() * p.grad.row(0).transpose().array() +
            dr_dp.hess.row(0).transpose().array() * p.hess.row(0).transpose().array() +
            dr_dp.hess.row(1).transpose().array() * p.hess.row(1).transpose().array() -
            r2 * (y_val - desired_state(X));
        if (dr_dyval) *dr_dyval = -r2;
    }

    // d_uJ = alpha u - dp/dn on the boundary; with p = (1 - r^2) q,
    // dp/dn = p_r(1, theta) = -2 q(1, theta), so the adjoint term is +2 q.
    void adjoint_term_at_control(const Eigen::MatrixXd& Xc, const BatchDerivs& p,
                                 Eigen::ArrayXd& term, BatchSeed* dterm = nullptr) const override {
        term = 2.0 * p.value;
        if (dterm) {
            dterm->value = Eigen::ArrayXd::Constant(Xc.cols(), 2.0);
            dterm->grad.resize(0, Xc.cols());
            dterm->hess.resize(0, Xc.cols());
        }
    }

    Eigen::MatrixXd sample_boundary_at(const Eigen::MatrixXd& Xi, Rng& rng) const override {
        const Eigen::Index count = Xi.cols();
        Eigen::MatrixXd pts(12, count);
        for (Eigen::Index i = 0; i < count; ++i) {
            pts(0, i) = 1.0;
            pts(1, i) = rng.uniform(0.0, 2.0 * M_PI);
            pts.block(2, i, 10, 1) = Xi.col(i);
        }
        return pts;
    }

    bool has_analytic() const override { return true; }
    double exact_state(const Eigen::VectorXd& pt) const override {
        const double a = alpha();
        return ((0.5 - a) + (0.5 - 3.0 * a) * pt[0] * pt[0] * std::cos(2.0 * pt[1])) * gain(pt);
    }
    double exact_control(const Eigen::VectorXd& pt) const override {
        const double c = std::cos(pt[1]);
        return project_admissible(c * c * gain(pt), 0.0, 1.0);
    }
    double exact_adjoint(const Eigen::VectorXd& pt) const override {
        const double r2 = pt[0] * pt[0];
        return -0.25 * alpha() * ((1.0 - r2) + (r2 - r2 * r2) * std::cos(2.0 * pt[1])) * gain(pt);
    }

    std::function<double(const Eigen::VectorXd&)> exact_raw_state() const override {
        return [this](const Eigen::VectorXd& x) { return exact_state(x); };
    }
    std::function<double(const Eigen::VectorXd&)> exact_raw_adjoint() const override {
        // p* / (1 - r^2), smooth across r = 1.
        const double a = alpha();
        return [a](const Eigen::VectorXd& x) {
            return -0.25 * a * (1.0 + x[0] * x[0] * std::cos(2.0 * x[1])) * gain_xi(x, 2);
        };
    }
    std::function<double(const Eigen::VectorXd&)> exact_raw_control() const override {
        // Input layout is the control features (cos theta, sin theta, xi).
        return [](const Eigen::VectorXd& f) {
            return project_admissible(f[0] * f[0] * gain_xi(f, 2), 0.0, 1.0);
        };
    }

private:
    static double gain_xi(const Eigen::VectorXd& v, int offset) {
        return std::exp(-10.0 * v.tail(v.size() - offset).squaredNorm());
    }
    static double gain(const Eigen::VectorXd& pt) { return gain_xi(pt, 2); }
    static Eigen::ArrayXd gain(const Eigen::MatrixXd& X) {
        return (-10.0 * X.bottomRows(10).colwise().squaredNorm().array()).exp();
    }
};

inline std::shared_ptr<ProblemSpec> make_test3() { return std::make_shared<Test3Problem>(); }

} // namespace ocp

#endif
