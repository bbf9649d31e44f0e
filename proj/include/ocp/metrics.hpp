#ifndef OCP_METRICS_HPP
#define OCP_METRICS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocp/aonn.hpp"
#include "ocp/problem.hpp"

namespace ocp {

inline double relative_l2(const Eigen::ArrayXd& pred, const Eigen::ArrayXd& ref) {
    if (pred.size() != ref.size())
        throw std::invalid_argument("relative_l2: length mismatch");
    const double rn = std::sqrt(ref.square().sum());
    if (rn == 0.0) throw std::invalid_argument("relative_l2: reference has zero norm");
    return std::sqrt((pred - ref).square().sum()) / rn;
}

/// Evaluation points at a fixed parameter value: a tensor grid of cell
/// centers over the spatial hull, filtered by domain membership, with the
/// parameter coordinates appended to every column.
struct EvalGrid {
    Eigen::MatrixXd points; // joint_dim x m
    Eigen::VectorXd xi;
    int res_x = 0, res_y = 0;
};

inline EvalGrid make_eval_grid(const ProblemSpec& prob, const Eigen::VectorXd& xi, int res_x,
                               int res_y = 1) {
    if (xi.size() != prob.param_dim())
        throw std::invalid_argument("make_eval_grid: parameter dimension mismatch");
    const Eigen::VectorXd lo = prob.hull_lo();
    const Eigen::VectorXd hi = prob.hull_hi();
    const int n = prob.spatial_dim();
    for (int j = 0; j < prob.param_dim(); ++j)
        if (xi[j] < lo[n + j] || xi[j] > hi[n + j])
            throw std::range_error("make_eval_grid: parameter outside its range");
    if (res_x < 1 || res_y < 1)
        throw std::invalid_argument("make_eval_grid: resolution must be positive");
    if (n > 2) throw std::invalid_argument("make_eval_grid: only 1-D and 2-D domains");

    const int ny = (n == 2) ? res_y : 1;
    std::vector<Eigen::VectorXd> kept;
    Eigen::VectorXd pt(prob.joint_dim());
    pt.tail(prob.param_dim()) = xi;
    for (int i = 0; i < res_x; ++i) {
        pt[0] = lo[0] + (hi[0] - lo[0]) * (i + 0.5) / res_x;
        for (int j = 0; j < ny; ++j) {
            if (n == 2) pt[1] = lo[1] + (hi[1] - lo[1]) * (j + 0.5) / ny;
            if (prob.membership(pt)) kept.push_back(pt);
        }
    }
    EvalGrid g;
    g.xi = xi;
    g.res_x = res_x;
    g.res_y = ny;
    g.points.resize(prob.joint_dim(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k)
        g.points.col(static_cast<Eigen::Index>(k)) = kept[k];
    return g;
}

/// Points where the control lives: the grid itself for distributed control,
/// a uniform sweep of the boundary parameter for boundary control.
inline Eigen::MatrixXd control_eval_points(const ProblemSpec& prob, const EvalGrid& grid,
                                           int boundary_res = 256) {
    if (prob.control_domain() == ControlDomain::Interior) return grid.points;
    const Eigen::VectorXd lo = prob.hull_lo();
    const Eigen::VectorXd hi = prob.hull_hi();
    Eigen::MatrixXd pts(prob.joint_dim(), boundary_res);
    for (int i = 0; i < boundary_res; ++i) {
        pts(0, i) = hi[0]; // outer radius
        pts(1, i) = lo[1] + (hi[1] - lo[1]) * (i + 0.5) / boundary_res;
        pts.col(i).tail(prob.param_dim()) = grid.xi;
    }
    return pts;
}

/// Relative errors of the trained fields against the analytic solution on a
/// grid at fixed xi. The control may be supplied either through the triplet
/// or as an explicit value array (e.g. from an optimality map).
struct FieldErrors {
    double rel_l2_y = std::numeric_limits<double>::quiet_NaN();
    double rel_l2_u = std::numeric_limits<double>::quiet_NaN();
};

inline FieldErrors analytic_errors(const SurrogateTriplet& t, const ProblemSpec& prob,
                                   const Eigen::VectorXd& xi, int res_x, int res_y = 1) {
    if (!prob.has_analytic())
        throw std::logic_error("analytic_errors: problem has no closed-form solution");
    EvalGrid grid = make_eval_grid(prob, xi, res_x, res_y);
    FieldErrors e;
    Eigen::ArrayXd y_hat = detail::state_values(t, prob, grid.points);
    Eigen::ArrayXd y_ref(grid.points.cols());
    for (Eigen::Index i = 0; i < grid.points.cols(); ++i)
        y_ref[i] = prob.exact_state(grid.points.col(i));
    e.rel_l2_y = relative_l2(y_hat, y_ref);

    Eigen::MatrixXd cp = control_eval_points(prob, grid);
    Eigen::ArrayXd u_hat = detail::control_values(t, prob, cp);
    Eigen::ArrayXd u_ref(cp.cols());
    for (Eigen::Index i = 0; i < cp.cols(); ++i) u_ref[i] = prob.exact_control(cp.col(i));
    e.rel_l2_u = relative_l2(u_hat, u_ref);
    return e;
}

/// One row of the method-comparison table.
struct ReportRow {
    std::string method;
    Eigen::Index samples = 0;
    double wall_seconds = 0.0;
    double rel_l2_u = std::numeric_limits<double>::quiet_NaN();
    double rel_l2_y = std::numeric_limits<double>::quiet_NaN();
};

inline std::string error_report(const std::vector<ReportRow>& rows) {
    std::string out = "method,samples,wall_seconds,rel_l2_u,rel_l2_y\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%lld,%.17g,%.17g,%.17g\n", r.method.c_str(),
                      static_cast<long long>(r.samples), r.wall_seconds, r.rel_l2_u,
                      r.rel_l2_y);
        out += buf;
    }
    return out;
}

} // namespace ocp

#endif // OCP_METRICS_HPP
