#ifndef OCP_PROBLEM_HPP
#define OCP_PROBLEM_HPP

#include <Eigen/Dense>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocp/netgrad.hpp"
#include "ocp/rng.hpp"

namespace ocp {

enum class SampleSource { Uniform, Flow };

/// Growing collection of joint collocation points. Points are stored as
/// columns of a (spatial_dim + param_dim) x count matrix; per-point stage
/// index and provenance ride alongside. Unions across stages are multiset
/// unions: duplicates are kept (they act as empirical-loss weights).
struct TrainingSet {
    Eigen::MatrixXd points;
    std::vector<int> stage;
    std::vector<SampleSource> source;

    Eigen::Index size() const { return points.cols(); }

    void append(const Eigen::MatrixXd& pts, int stage_k, SampleSource src) {
        if (pts.cols() == 0) return;
        if (points.size() == 0) {
            points = pts;
        } else {
            if (pts.rows() != points.rows())
                throw std::invalid_argument("TrainingSet::append: dimension mismatch");
            const Eigen::Index old = points.cols();
            points.conservativeResize(Eigen::NoChange, old + pts.cols());
            points.rightCols(pts.cols()) = pts;
        }
        stage.insert(stage.end(), static_cast<std::size_t>(pts.cols()), stage_k);
        source.insert(source.end(), static_cast<std::size_t>(pts.cols()), src);
    }
};

/// Componentwise clamp onto [lower, upper].
inline Eigen::ArrayXd project_admissible(const Eigen::ArrayXd& values,
                                         const Eigen::ArrayXd& lower,
                                         const Eigen::ArrayXd& upper) {
    if (values.size() != lower.size() || values.size() != upper.size())
        throw std::invalid_argument("project_admissible: size mismatch");
    if ((lower > upper).any())
        throw std::invalid_argument("project_admissible: lower bound exceeds upper bound");
    return values.max(lower).min(upper);
}

inline double project_admissible(double v, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("project_admissible: lower bound exceeds upper bound");
    return std::min(std::max(v, lo), hi);
}

enum class ControlDomain { Interior, Boundary };

/// A pluggable parametric optimal control problem. Coordinates are always
/// laid out [spatial | parametric]. Residual callbacks receive the raw
/// (unwrapped) network derivative bundles and apply any boundary-enforcing
/// wrapper internally, returning the residual values together with the
/// per-point partials of the residual with respect to the network's value,
/// first and pure second derivatives (the residuals are affine in those, so
/// the partials double as backprop seed coefficients).
class ProblemSpec {
public:
    virtual ~ProblemSpec() = default;

    virtual std::string name() const = 0;
    virtual int spatial_dim() const = 0;
    virtual int param_dim() const = 0;
    int joint_dim() const { return spatial_dim() + param_dim(); }
    virtual double alpha() const = 0;

    /// Axis-aligned hull of the joint domain (spatial hull x parameter box).
    virtual Eigen::VectorXd hull_lo() const = 0;
    virtual Eigen::VectorXd hull_hi() const = 0;

    /// Bounding box B: the hull expanded by 10% of each side length.
    Eigen::VectorXd box_lo() const {
        Eigen::VectorXd lo = hull_lo(), hi = hull_hi();
        return lo - 0.1 * (hi - lo);
    }
    Eigen::VectorXd box_hi() const {
        Eigen::VectorXd lo = hull_lo(), hi = hull_hi();
        return hi + 0.1 * (hi - lo);
    }

    /// (x, xi) in Omega(xi) x Gamma?
    virtual bool membership(const Eigen::VectorXd& pt) const = 0;

    /// Cutoff h: 1 on the hull, linear decay across each coordinate's margin
    /// band, 0 on and outside the boundary of B; combined by product.
    double cutoff(const Eigen::VectorXd& pt) const {
        const Eigen::VectorXd lo = hull_lo(), hi = hull_hi();
        const Eigen::VectorXd blo = box_lo(), bhi = box_hi();
        double h = 1.0;
        for (Eigen::Index j = 0; j < pt.size(); ++j) {
            double hj = 1.0;
            if (pt[j] < lo[j])
                hj = (pt[j] - blo[j]) / (lo[j] - blo[j]);
            else if (pt[j] > hi[j])
                hj = (bhi[j] - pt[j]) / (bhi[j] - hi[j]);
            h *= std::max(0.0, hj);
        }
        return h;
    }

    /// Input coordinates (of the state/adjoint networks) carrying spatial
    /// derivatives in the residuals.
    virtual std::vector<int> deriv_indices() const = 0;

    virtual ControlDomain control_domain() const = 0;
    virtual int control_feature_dim() const { return joint_dim(); }
    /// Map joint points (columns) to control-network inputs. Default: identity.
    virtual Eigen::MatrixXd control_features(const Eigen::MatrixXd& X) const { return X; }

    virtual void control_bounds(const Eigen::MatrixXd& X, Eigen::ArrayXd& lo,
                                Eigen::ArrayXd& hi) const = 0;

    virtual Eigen::ArrayXd desired_state(const Eigen::MatrixXd& X) const = 0;

    /// Wrapped field values from raw network values (dvalue = d field / d net).
    virtual void wrap_state(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                            Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const = 0;
    virtual void wrap_adjoint(const Eigen::MatrixXd& X, const Eigen::ArrayXd& net,
                              Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const = 0;
    virtual void wrap_control(const Eigen::MatrixXd& /*Xc*/, const Eigen::ArrayXd& net,
                              Eigen::ArrayXd& field, Eigen::ArrayXd* dvalue = nullptr) const {
        field = net;
        if (dvalue) *dvalue = Eigen::ArrayXd::Ones(net.size());
    }

    /// State-equation residual on interior points. y holds raw state-net
    /// derivatives over deriv_indices() (order 2); u holds frozen control
    /// values at the same points for distributed-control problems (ignored
    /// otherwise). dr_dy receives the residual's partials w.r.t. the raw
    /// network value/grad/hess; dr_du, when requested, the partial w.r.t. u.
    virtual void state_residual(const Eigen::MatrixXd& X, const BatchDerivs& y,
                                const Eigen::ArrayXd& u, Eigen::ArrayXd& r,
                                BatchSeed& dr_dy, Eigen::ArrayXd* dr_du = nullptr) const = 0;

    /// Adjoint-equation residual on interior points; y_val are frozen wrapped
    /// state values at X.
    virtual void adjoint_residual(const Eigen::MatrixXd& X, const BatchDerivs& p,
                                  const Eigen::ArrayXd& y_val, Eigen::ArrayXd& r,
                                  BatchSeed& dr_dp, Eigen::ArrayXd* dr_dyval = nullptr) const = 0;

    /// Problems whose state boundary condition cannot be hard-enforced add a
    /// soft boundary residual evaluated on dedicated boundary points.
    virtual bool has_state_boundary_term() const { return false; }
    virtual void state_boundary_residual(const Eigen::MatrixXd& /*Xb*/, const BatchDerivs& /*y*/,
                                         const Eigen::ArrayXd& /*u*/, Eigen::ArrayXd& /*r*/,
                                         BatchSeed& /*dr_dy*/,
                                         Eigen::ArrayXd* /*dr_du*/ = nullptr) const {
        throw std::logic_error(name() + ": no state boundary term");
    }

    /// Adjoint contribution to the control derivative d_uJ = alpha*u + term,
    /// evaluated at control points Xc from raw adjoint-net values there
    /// (order 0 suffices for the built-in problems). dterm, when requested,
    /// gives the partial of term w.r.t. the raw adjoint value (for the
    /// baseline that eliminates the control through the optimality map).
    virtual void adjoint_term_at_control(const Eigen::MatrixXd& Xc, const BatchDerivs& p,
                                         Eigen::ArrayXd& term,
                                         BatchSeed* dterm = nullptr) const = 0;

    /// Boundary points of Omega(xi_i) for prescribed parameter columns Xi
    /// (param_dim x count); column i of the result is a joint point whose
    /// spatial part lies on the boundary of Omega(Xi.col(i)).
    virtual Eigen::MatrixXd sample_boundary_at(const Eigen::MatrixXd& Xi, Rng& rng) const = 0;

    /// Joint boundary points with parameters drawn uniformly from the hull box.
    Eigen::MatrixXd sample_boundary(Eigen::Index count, Rng& rng) const {
        const int sd = spatial_dim(), pd = param_dim();
        const Eigen::VectorXd lo = hull_lo(), hi = hull_hi();
        Eigen::MatrixXd Xi(pd, count);
        for (Eigen::Index i = 0; i < count; ++i)
            for (int j = 0; j < pd; ++j) Xi(j, i) = rng.uniform(lo[sd + j], hi[sd + j]);
        return sample_boundary_at(Xi, rng);
    }

    virtual bool has_analytic() const { return false; }
    virtual double exact_state(const Eigen::VectorXd& /*pt*/) const {
        throw std::logic_error(name() + ": no analytic solution");
    }
    virtual double exact_control(const Eigen::VectorXd& /*pt*/) const {
        throw std::logic_error(name() + ": no analytic solution");
    }
    virtual double exact_adjoint(const Eigen::VectorXd& /*pt*/) const {
        throw std::logic_error(name() + ": no analytic solution");
    }

    /// Closures for the raw (unwrapped) networks matching the analytic
    /// solution through the wrappers; inputs are the respective network's
    /// features. Used by closure-backed surrogates in fixed-point tests.
    virtual std::function<double(const Eigen::VectorXd&)> exact_raw_state() const {
        throw std::logic_error(name() + ": no analytic solution");
    }
    virtual std::function<double(const Eigen::VectorXd&)> exact_raw_adjoint() const {
        throw std::logic_error(name() + ": no analytic solution");
    }
    virtual std::function<double(const Eigen::VectorXd&)> exact_raw_control() const {
        throw std::logic_error(name() + ": no analytic solution");
    }
};

/// Spec-name alias for the cutoff.
inline double cutoff(const Eigen::VectorXd& point, const ProblemSpec& problem) {
    return problem.cutoff(point);
}

/// Exactly count points uniform on Omega_Gamma via rejection from B.
/// Throws if the empirical acceptance rate drops below 1e-4 over 1e6
/// proposals (degenerate geometry).
inline TrainingSet sample_uniform(const ProblemSpec& problem, Eigen::Index count, Rng& rng,
                                  int stage_k = 0) {
    if (count < 1) throw std::invalid_argument("sample_uniform: count must be >= 1");
    const Eigen::VectorXd blo = problem.box_lo(), bhi = problem.box_hi();
    const int dim = problem.joint_dim();
    Eigen::MatrixXd pts(dim, count);
    Eigen::VectorXd cand(dim);
    Eigen::Index accepted = 0;
    long proposals = 0;
    while (accepted < count) {
        for (int j = 0; j < dim; ++j) cand[j] = rng.uniform(blo[j], bhi[j]);
        ++proposals;
        if (problem.membership(cand)) pts.col(accepted++) = cand;
        if (proposals >= 1000000 && static_cast<double>(accepted) / proposals < 1e-4)
            throw std::runtime_error("sample_uniform: acceptance rate below 1e-4, degenerate domain");
    }
    TrainingSet ts;
    ts.append(pts, stage_k, SampleSource::Uniform);
    return ts;
}

// ---------------------------------------------------------------------------
// TrainingSet CSV round-trip: header x1..xn,xi1..xid,stage,source.
// ---------------------------------------------------------------------------

inline void save_training_set(const std::string& path, const TrainingSet& ts,
                              const ProblemSpec& problem) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_training_set: cannot open " + path);
    for (int j = 0; j < problem.spatial_dim(); ++j)
        std::fprintf(f, "x%d,", j + 1);
    for (int j = 0; j < problem.param_dim(); ++j)
        std::fprintf(f, "xi%d,", j + 1);
    std::fprintf(f, "stage,source\n");
    for (Eigen::Index i = 0; i < ts.size(); ++i) {
        for (Eigen::Index j = 0; j < ts.points.rows(); ++j)
            std::fprintf(f, "%.17g,", ts.points(j, i));
        std::fprintf(f, "%d,%s\n", ts.stage[static_cast<std::size_t>(i)],
                     ts.source[static_cast<std::size_t>(i)] == SampleSource::Uniform ? "uniform"
                                                                                     : "flow");
    }
    std::fclose(f);
}

inline TrainingSet load_training_set(const std::string& path, const ProblemSpec& problem) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_training_set: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("load_training_set: empty file " + path);
    const int dim = problem.joint_dim();
    std::vector<Eigen::VectorXd> pts;
    TrainingSet ts;
    std::vector<int> stages;
    std::vector<SampleSource> sources;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Eigen::VectorXd p(dim);
        for (int j = 0; j < dim; ++j) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("load_training_set: short row in " + path);
            p[j] = std::stod(cell);
        }
        if (!std::getline(ss, cell, ','))
            throw std::runtime_error("load_training_set: missing stage in " + path);
        const int k = std::stoi(cell);
        if (!std::getline(ss, cell, ','))
            throw std::runtime_error("load_training_set: missing source in " + path);
        pts.push_back(p);
        stages.push_back(k);
        sources.push_back(cell == "flow" ? SampleSource::Flow : SampleSource::Uniform);
    }
    ts.points.resize(dim, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i)
        ts.points.col(static_cast<Eigen::Index>(i)) = pts[i];
    ts.stage = std::move(stages);
    ts.source = std::move(sources);
    return ts;
}

} // namespace ocp

#endif
