#ifndef OCP_PROBLEMS_TEST1_HPP
#define OCP_PROBLEMS_TEST1_HPP

#include <cmath>
#include <memory>

#include "ocp/problem.hpp"

namespace ocp {

/// Distributed control of a Poisson equation on a rectangle with a
/// parameter-sized circular hole:
///   minimize 1/2||y - y_d||^2 + alpha/2||u||^2,  alpha = 0.001,
///   s.t. -Delta y = u in Omega(xi), y = 1 on the boundary, 0 <= u <= 10,
/// Omega(xi) = (0,2)x(0,1) minus the closed ball of radius xi1 at (1.5,0.5),
/// xi = (xi1, xi2) in [0.05,0.45] x [0.5,2.5], and y_d = 1 where x1 <= 1,
/// xi2 elsewhere. State and adjoint are hard-enforced through
///   l(x,xi) = x1(2-x1) x2(1-x2) ((x1-1.5)^2 + (x2-0.5)^2 - xi1^2),
/// with y = l*y_hat + 1 and p = l*p_hat.
class Test1Problem final : public ProblemSpec {
public:
    std::string name() const override { return "test1"; }
    int spatial_dim() const override { return 2; }
    int param_dim() const override { return 2; }
    double alpha() const override { return 0.001; }

    Eigen::VectorXd hull_lo() const override {
        Eigen::VectorXd lo(4);
        lo << 0.0, 0.0, 0.05, 0.5;
        return lo;
    }
    Eigen::VectorXd hull_hi() const override {
        Eigen::VectorXd hi(4);
        hi << 2.0, 1.0, 0.45, 2.5;
        return hi;
    }

    bool membership(const Eigen::VectorXd& pt) const override {
        const double x1 = pt[0], x2 = pt[1], xi1 = pt[2], xi2 = pt[3];
        if (x1 <= 0.0 || x1 >= 2.0 || x2 <= 0.0 || x2 >= 1.0) return false;
        if (xi1 < 0.05 || xi1 > 0.45 || xi2 < 0.5 || xi2 > 2.5) return false;
        const double d2 = (x1 - 1.5) * (x1 - 1.5) + (x2 - 0.5) * (x2 - 0.5);
        return d2 > xi1 * xi1;
    }

    std::vector<int> deriv_indices() const override { return {0, 1}; }
    ControlDomain control_domain() const override { return ControlDomain::Interior; }

    void control_bounds(const Eigen::MatrixXd& X, Eigen::ArrayXd& lo,
                        Eigen::ArrayXd& hi) const override {
        lo = Eigen::ArrayXd::Zero(X.cols());
        hi = Eigen::ArrayXd::Constant(X.cols(), 10.0);
    }

    Eigen::ArrayXd desired_state(const Eigen::MatrixXd& X) const override {
        Eigen::ArrayXd yd(X.cols());
        for (Eigen::Index i = 0; i < X.cols(); ++i)
            yd[i] = X(0, i) <= 1.0 ? 1.0 : X(3, i);
        return yd;
    }

    void wrap_state(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                    Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const override {
        const Eigen::ArrayXd l = length_factor(X);
        field = l * net + 1.0;
        if (dvalue) *dvalue = l;
    }
    void wrap_adjoint(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                      Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const override {
        const Eigen::ArrayXd l = length_factor(X);
        field = l * net;
        if (dvalue) *dvalue = l;
    }

    void state_residual(const Eigen::MatrixXd& X, const BatchDerivs& y,
                        const Eigen::ArrayXd& u, Eigen::ArrayXd& r, BatchSeed& dr_dy,
                        Eigen::ArrayXd* dr_du = nullptr) const override {
        wrapped_seed(X, dr_dy);
        r = apply_seed(dr_dy, y) - u;
        if (dr_du) *dr_du = Eigen::ArrayXd::Constant(X.cols(), -1.0);
    }

    void adjoint_residual(const Eigen::MatrixXd& X, const BatchDerivs& p,
                          const Eigen::ArrayXd& y_val, Eigen::ArrayXd& r, BatchSeed& dr_dp,
                          Eigen::ArrayXd* dr_dyval = nullptr) const override {
        wrapped_seed(X, dr_dp);
        r = apply_seed(dr_dp, p) - (y_val - desired_state(X));
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

    /// Outer rectangle and the xi1-radius hole circle, equal weight.
    Eigen::MatrixXd sample_boundary_at(const Eigen::MatrixXd& Xi, Rng& rng) const override {
        const Eigen::Index count = Xi.cols();
        Eigen::MatrixXd pts(4, count);
        for (Eigen::Index i = 0; i < count; ++i) {
            const double xi1 = Xi(0, i);
            const double xi2 = Xi(1, i);
            double x1, x2;
            if (rng.uniform() < 0.5) {
                // perimeter of (0,2)x(0,1), arclength-uniform
                double t = rng.uniform(0.0, 6.0);
                if (t < 2.0) { x1 = t; x2 = 0.0; }
                else if (t < 3.0) { x1 = 2.0; x2 = t - 2.0; }
                else if (t < 5.0) { x1 = 5.0 - t; x2 = 1.0; }
                else { x1 = 0.0; x2 = 6.0 - t; }
            } else {
                const double phi = rng.uniform(0.0, 2.0 * M_PI);
                x1 = 1.5 + xi1 * std::cos(phi);
                x2 = 0.5 + xi1 * std::sin(phi);
            }
            pts.col(i) << x1, x2, xi1, xi2;
        }
        return pts;
    }

private:
    static Eigen::ArrayXd length_factor(const Eigen::MatrixXd& X) {
        const Eigen::ArrayXd x1 = X.row(0).array(), x2 = X.row(1).array(),
                             xi1 = X.row(2).array();
        return x1 * (2.0 - x1) * x2 * (1.0 - x2) *
               ((x1 - 1.5).square() + (x2 - 0.5).square() - xi1.square());
    }

    // Partials of -Delta_x(l q) w.r.t. the raw net: value -> -Delta l,
    // grad_i -> -2 dl/dx_i, hess_i -> -l. With a = x1(2-x1), b = x2(1-x2),
    // c = (x1-1.5)^2 + (x2-0.5)^2 - xi1^2:
    //   l_x1   = a' b c + a b c_x1,     l_x2   = a b' c + a b c_x2,
    //   Delta l = -2bc - 2ac + 2a'b c_x1 + 2ab' c_x2 + 4ab.
    static void wrapped_seed(const Eigen::MatrixXd& X, BatchSeed& seed) {
        const Eigen::Index m = X.cols();
        const Eigen::ArrayXd x1 = X.row(0).array(), x2 = X.row(1).array(),
                             xi1 = X.row(2).array();
        const Eigen::ArrayXd a = x1 * (2.0 - x1), ap = 2.0 - 2.0 * x1;
        const Eigen::ArrayXd b = x2 * (1.0 - x2), bp = 1.0 - 2.0 * x2;
        const Eigen::ArrayXd c = (x1 - 1.5).square() + (x2 - 0.5).square() - xi1.square();
        const Eigen::ArrayXd cx1 = 2.0 * (x1 - 1.5), cx2 = 2.0 * (x2 - 0.5);
        const Eigen::ArrayXd l = a * b * c;
        const Eigen::ArrayXd lx1 = ap * b * c + a * b * cx1;
        const Eigen::ArrayXd lx2 = a * bp * c + a * b * cx2;
        const Eigen::ArrayXd lap =
            -2.0 * b * c - 2.0 * a * c + 2.0 * ap * b * cx1 + 2.0 * a * bp * cx2 + 4.0 * a * b;
        seed.value = -lap;
        seed.grad.resize(2, m);
        seed.grad.row(0) = (-2.0 * lx1).matrix();
        seed.grad.row(1) = (-2.0 * lx2).matrix();
        seed.hess.resize(2, m);
        seed.hess.row(0) = (-l).matrix();
        seed.hess.row(1) = (-l).matrix();
    }

    static Eigen::ArrayXd apply_seed(const BatchSeed& s, const BatchDerivs& d) {
        Eigen::ArrayXd r = s.value * d.value;
        for (int i = 0; i < s.grad.rows(); ++i)
            r += s.grad.row(i).transpose().array() * d.grad.row(i).transpose().array() +
                 s.hess.row(i).transpose().array() * d.hess.row(i).transpose().array();
        return r;
    }
};

inline std::shared_ptr<ProblemSpec> make_test1() { return std::make_shared<Test1Problem>(); }

} // namespace ocp

#endif
