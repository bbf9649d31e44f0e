#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "ocp/aonn.hpp"
#include "ocp/problems/oracle1d.hpp"
#include "ocp/problems/test1.hpp"
#include "ocp/problems/test3.hpp"

using namespace ocp;

namespace {

std::shared_ptr<Surrogate> constant_closure(double v, int dim) {
    return std::make_shared<ClosureSurrogate>([v](const Eigen::VectorXd&) { return v; }, dim);
}

std::shared_ptr<Surrogate> zero_net(int dim) {
    return std::make_shared<MlpSurrogate>(mlp_zero({dim, 4, 1}));
}

SurrogateTriplet analytic_triplet(const ProblemSpec& prob) {
    SurrogateTriplet t;
    t.y = std::make_shared<ClosureSurrogate>(prob.exact_raw_state(), prob.joint_dim());
    t.p = std::make_shared<ClosureSurrogate>(prob.exact_raw_adjoint(), prob.joint_dim());
    t.u = std::make_shared<ClosureSurrogate>(prob.exact_raw_control(), prob.control_feature_dim());
    return t;
}

Eigen::MatrixXd interior_batch(const ProblemSpec& prob, Eigen::Index n, Rng& rng) {
    return sample_uniform(prob, n, rng).points;
}

// Central-difference check of a loss gradient on a random parameter subset.
void check_loss_grad(Surrogate& sur, const std::function<double(Eigen::VectorXd*)>& loss,
                     Rng& rng, double tol) {
    Eigen::VectorXd g;
    const double L0 = loss(&g);
    REQUIRE(std::isfinite(L0));
    Eigen::VectorXd theta = sur.params();
    const double h = 1e-6;
    for (int trial = 0; trial < 25; ++trial) {
        const auto j =
            static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(theta.size())));
        Eigen::VectorXd tp = theta;
        tp[j] += h;
        sur.set_params(tp);
        const double Lp = loss(nullptr);
        tp[j] -= 2 * h;
        sur.set_params(tp);
        const double Lm = loss(nullptr);
        sur.set_params(theta);
        const double fd = (Lp - Lm) / (2 * h);
        const double scale = std::max({1.0, std::fabs(fd), std::fabs(g[j])});
        INFO("component " << j << " fd " << fd << " ad " << g[j]);
        CHECK(std::fabs(fd - g[j]) / scale < tol);
    }
}

} // namespace

TEST_CASE("state loss vanishes at the analytic optimum of the disk problem") {
    auto prob = make_test3();
    SurrogateTriplet t = analytic_triplet(*prob);
    Rng rng(31);
    Eigen::MatrixXd X = interior_batch(*prob, 200, rng);
    Eigen::MatrixXd Xb = prob->sample_boundary(100, rng);
    CHECK(loss_state(t, *prob, X, Xb) < 1e-8);
    CHECK(loss_adjoint(t, *prob, X) < 1e-8);
}

TEST_CASE("zero state and control satisfy the 1-D state equation") {
    auto prob = make_oracle1d();
    SurrogateTriplet t;
    t.y = zero_net(1);
    t.p = zero_net(1);
    t.u = zero_net(1);
    Rng rng(5);
    Eigen::MatrixXd X = interior_batch(*prob, 64, rng);
    CHECK(loss_state(t, *prob, X) == 0.0);
}

TEST_CASE("losses are root-mean-square of the residuals") {
    auto prob = make_oracle1d();
    SurrogateTriplet t;
    t.y = zero_net(1);
    t.p = zero_net(1);
    t.u = constant_closure(-3.0, 1); // state residual -u = 3
    Eigen::MatrixXd X(1, 1);
    X(0, 0) = 0.4;
    CHECK(loss_state(t, *prob, X) == Catch::Approx(3.0).margin(1e-14));

    // adjoint: wrapped y = y_d + 2 makes the residual -2 at every point
    SurrogateTriplet ta;
    ta.y = std::make_shared<ClosureSurrogate>(
        [&](const Eigen::VectorXd& x) {
            Eigen::ArrayXd yd = prob->desired_state(x);
            return (yd[0] + 2.0) / (x[0] * (1.0 - x[0]));
        },
        1);
    ta.p = zero_net(1);
    ta.u = zero_net(1);
    CHECK(loss_adjoint(ta, *prob, X) == Catch::Approx(2.0).margin(1e-10));

    // control: two points with errors 3 and 4
    SurrogateTriplet tc;
    tc.u = constant_closure(0.0, 1);
    Eigen::MatrixXd Xc(1, 2);
    Xc << 0.3, 0.6;
    Eigen::ArrayXd targets(2);
    targets << 3.0, -4.0;
    CHECK(loss_control(tc, *prob, Xc, targets) ==
          Catch::Approx(std::sqrt(25.0 / 2.0)).margin(1e-14));
    Eigen::ArrayXd same = Eigen::ArrayXd::Zero(2);
    CHECK(loss_control(tc, *prob, Xc, same) == 0.0);
    Eigen::ArrayXd off = Eigen::ArrayXd::Constant(2, -0.5);
    CHECK(loss_control(tc, *prob, Xc, off) == Catch::Approx(0.5).margin(1e-14));
    Eigen::ArrayXd bad(3);
    bad.setZero();
    CHECK_THROWS_AS(loss_control(tc, *prob, Xc, bad), std::invalid_argument);
}

TEST_CASE("loss values are invariant under batch permutation") {
    auto prob = make_test1();
    SurrogateTriplet t;
    t.y = std::make_shared<MlpSurrogate>(std::vector<int>{4, 6, 1}, 11u);
    t.p = std::make_shared<MlpSurrogate>(std::vector<int>{4, 6, 1}, 12u);
    t.u = std::make_shared<MlpSurrogate>(std::vector<int>{4, 6, 1}, 13u);
    Rng rng(77);
    Eigen::MatrixXd X = interior_batch(*prob, 32, rng);
    Eigen::MatrixXd Xr = X.rowwise().reverse();
    CHECK(loss_state(t, *prob, X) == Catch::Approx(loss_state(t, *prob, Xr)).epsilon(1e-13));
    CHECK(loss_adjoint(t, *prob, X) == Catch::Approx(loss_adjoint(t, *prob, Xr)).epsilon(1e-13));
}

TEST_CASE("projected-gradient targets honor the box and the fixed point") {
    auto o = make_oracle1d();
    // u = 5 with d_uJ = 0: wrapped p must equal -alpha*5
    SurrogateTriplet t;
    t.u = constant_closure(5.0, 1);
    const double a = o->alpha();
    t.p = std::make_shared<ClosureSurrogate>(
        [a](const Eigen::VectorXd& x) { return -5.0 * a / (x[0] * (1.0 - x[0])); }, 1);
    t.y = zero_net(1);
    Eigen::MatrixXd X(1, 3);
    X << 0.2, 0.5, 0.8;
    Eigen::ArrayXd step = compute_u_step(t, *o, X, 1.0);
    CHECK((step - 5.0).abs().maxCoeff() < 1e-9);
    CHECK_THROWS_AS(compute_u_step(t, *o, X, 0.0), std::invalid_argument);

    // u = 5, d_uJ = 1, c = 100, bounds [0, 10] -> 0
    auto t1 = make_test1();
    SurrogateTriplet tt;
    tt.u = constant_closure(5.0, 4);
    const double a1 = t1->alpha();
    tt.p = std::make_shared<ClosureSurrogate>(
        [a1](const Eigen::VectorXd& q) {
            const double l = q[0] * (2.0 - q[0]) * q[1] * (1.0 - q[1]) *
                             ((q[0] - 1.5) * (q[0] - 1.5) + (q[1] - 0.5) * (q[1] - 0.5) -
                              q[2] * q[2]);
            return (1.0 - 5.0 * a1) / l;
        },
        4);
    tt.y = zero_net(4);
    Rng rng(4);
    Eigen::MatrixXd Xc = interior_batch(*t1, 16, rng);
    Eigen::ArrayXd s2 = compute_u_step(tt, *t1, Xc, 100.0);
    CHECK(s2.abs().maxCoeff() < 1e-8);

    // targets always lie inside the admissible box
    SurrogateTriplet rnd;
    rnd.y = std::make_shared<MlpSurrogate>(std::vector<int>{4, 8, 1}, 3u);
    rnd.p = std::make_shared<MlpSurrogate>(std::vector<int>{4, 8, 1}, 4u);
    rnd.u = std::make_shared<MlpSurrogate>(std::vector<int>{4, 8, 1}, 5u);
    Eigen::ArrayXd lo, hi;
    t1->control_bounds(Xc, lo, hi);
    for (double c : {0.01, 1.0, 100.0, 1e4}) {
        Eigen::ArrayXd sp = compute_u_step(rnd, *t1, Xc, c);
        CHECK((sp >= lo).all());
        CHECK((sp <= hi).all());
    }
}

TEST_CASE("disk-problem targets reproduce the analytic control at the optimum") {
    auto prob = make_test3();
    SurrogateTriplet t = analytic_triplet(*prob);
    Rng rng(8);
    Eigen::MatrixXd Xb = prob->sample_boundary(2000, rng);
    Eigen::ArrayXd step = compute_u_step(t, *prob, Xb, 100.0);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < Xb.cols(); ++i) {
        const double u_star = prob->exact_control(Xb.col(i));
        if (u_star > 1e-6 && u_star < 1.0 - 1e-6)
            worst = std::max(worst, std::fabs(step[i] - u_star));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(17);

    auto o = make_oracle1d();
    SurrogateTriplet t;
    t.y = std::make_shared<MlpSurrogate>(std::vector<int>{1, 6, 6, 1}, 21u);
    t.p = std::make_shared<MlpSurrogate>(std::vector<int>{1, 6, 6, 1}, 22u);
    t.u = std::make_shared<MlpSurrogate>(std::vector<int>{1, 6, 6, 1}, 23u);
    Eigen::MatrixXd X = interior_batch(*o, 24, rng);
    check_loss_grad(*t.y, [&](Eigen::VectorXd* g) { return loss_state(t, *o, X, {}, g); }, rng,
                    1e-5);
    check_loss_grad(*t.p, [&](Eigen::VectorXd* g) { return loss_adjoint(t, *o, X, g); }, rng,
                    1e-5);
    Eigen::ArrayXd targets = Eigen::ArrayXd::Constant(X.cols(), 0.3);
    check_loss_grad(*t.u, [&](Eigen::VectorXd* g) { return loss_control(t, *o, X, targets, g); },
                    rng, 1e-5);

    // boundary-control path, including the soft boundary term
    auto d = make_test3();
    SurrogateTriplet td;
    td.y = std::make_shared<MlpSurrogate>(std::vector<int>{12, 6, 1}, 31u);
    td.p = std::make_shared<MlpSurrogate>(std::vector<int>{12, 6, 1}, 32u);
    td.u = std::make_shared<MlpSurrogate>(std::vector<int>{12, 6, 1}, 33u);
    Eigen::MatrixXd Xd = interior_batch(*d, 16, rng);
    Eigen::MatrixXd Xbd = d->sample_boundary(16, rng);
    check_loss_grad(*td.y, [&](Eigen::VectorXd* g) { return loss_state(td, *d, Xd, Xbd, g); },
                    rng, 1e-5);
    check_loss_grad(*td.p, [&](Eigen::VectorXd* g) { return loss_adjoint(td, *d, Xd, g); }, rng,
                    1e-5);
    Eigen::ArrayXd tgt = Eigen::ArrayXd::Constant(Xbd.cols(), 0.4);
    check_loss_grad(*td.u,
                    [&](Eigen::VectorXd* g) { return loss_control(td, *d, Xbd, tgt, g); }, rng,
                    1e-5);
}

TEST_CASE("one iterate at the planted optimum stays at the optimum") {
    auto prob = make_test3();
    SurrogateTriplet t = analytic_triplet(*prob);
    DalHyperparams hp;
    hp.m = 256;
    hp.boundary_m = 256;
    Rng rng(12);
    TrainingSet ts = sample_uniform(*prob, 512, rng);
    DalState st;
    st.c = 100.0;
    st.n = 5;
    st.rng = Rng(99);
    DalLogRow row;
    dal_iterate(t, *prob, hp, ts, st, &row);
    CHECK(row.L_s < 1e-4);
    CHECK(row.L_a < 1e-4);
    CHECK(row.L_u < 1e-3);
}

TEST_CASE("step-size decay and epoch growth follow the schedule") {
    auto prob = make_oracle1d();
    SurrogateTriplet t;
    t.y = std::make_shared<MlpSurrogate>(std::vector<int>{1, 6, 1}, 41u);
    t.p = std::make_shared<MlpSurrogate>(std::vector<int>{1, 6, 1}, 42u);
    t.u = std::make_shared<MlpSurrogate>(std::vector<int>{1, 6, 1}, 43u);
    Rng rng(2);
    TrainingSet ts = sample_uniform(*prob, 100, rng);

    DalHyperparams hp;
    hp.gamma = 1.0;
    hp.n_aug = 0;
    hp.m = 50;
    DalState st;
    st.c = 7.0;
    st.n = 3;
    st.rng = Rng(1);
    dal_iterate(t, *prob, hp, ts, st);
    dal_iterate(t, *prob, hp, ts, st);
    CHECK(st.c == 7.0);
    CHECK(st.n == 3);

    hp.gamma = 0.5;
    hp.n_aug = 2;
    dal_iterate(t, *prob, hp, ts, st);
    CHECK(st.c == 3.5);
    CHECK(st.n == 5);
}

TEST_CASE("batches are drawn without replacement until the set is exhausted") {
    auto prob = make_oracle1d();
    Rng rng(9);
    TrainingSet ts = sample_uniform(*prob, 60, rng);
    DalState st;
    st.rng = Rng(3);
    std::vector<int> seen(60, 0);
    for (int b = 0; b < 3; ++b) {
        Eigen::MatrixXd X = next_batch(ts, st, 20);
        for (Eigen::Index i = 0; i < X.cols(); ++i)
            for (Eigen::Index j = 0; j < ts.size(); ++j)
                if (X(0, i) == ts.points(0, j)) {
                    ++seen[static_cast<std::size_t>(j)];
                    break;
                }
    }
    for (int c : seen) CHECK(c == 1);
}

TEST_CASE("training rejects an empty collocation set and is seed-deterministic") {
    auto prob = make_oracle1d();
    DalHyperparams hp;
    hp.n_ep = 3;
    hp.n0 = 4;
    hp.m = 64;
    hp.hidden = {8, 8};
    TrainingSet empty;
    CHECK_THROWS_AS(run_aonn(*prob, hp, empty, 1), std::invalid_argument);

    Rng rng(10);
    TrainingSet ts = sample_uniform(*prob, 128, rng);
    SurrogateTriplet a = run_aonn(*prob, hp, ts, 42);
    SurrogateTriplet b = run_aonn(*prob, hp, ts, 42);
    CHECK(a.y->params() == b.y->params());
    CHECK(a.p->params() == b.p->params());
    CHECK(a.u->params() == b.u->params());
}

TEST_CASE("a short run on the 1-D oracle makes real progress") {
    auto prob = make_oracle1d();
    DalHyperparams hp;
    hp.n_ep = 25;
    hp.n0 = 10;
    hp.n_aug = 0;
    hp.gamma = 1.0;
    hp.c0 = 50.0;
    hp.m = 256;
    hp.hidden = {12, 12};
    Rng rng(6);
    TrainingSet ts = sample_uniform(*prob, 512, rng);
    std::vector<DalLogRow> log;
    SurrogateTriplet t = run_aonn(*prob, hp, ts, 7, &log);
    REQUIRE(log.size() == 25);
    CHECK(log.back().L_s < 0.01);
    // control should start resembling -sin(pi x)
    Eigen::MatrixXd X(1, 21);
    for (int i = 0; i <= 20; ++i) X(0, i) = 0.025 + 0.95 * i / 20.0;
    BatchDerivs du;
    t.u->eval(X, {}, 0, du);
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= 20; ++i) {
        const double ref = -std::sin(M_PI * X(0, i));
        num += std::pow(du.value[i] - ref, 2);
        den += ref * ref;
    }
    CHECK(std::sqrt(num / den) < 0.3);
}
