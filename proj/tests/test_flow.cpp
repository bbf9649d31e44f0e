#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>

#include "ocp/flow.hpp"

using namespace ocp;

namespace {

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

CouplingFlow unit_flow_2d(std::uint64_t seed = 1, int blocks = 2, int layers = 2,
                          int width = 8) {
    return make_flow(2, blocks, layers, width, vec2(0.0, 0.0), vec2(1.0, 1.0), seed);
}

// give the conditioners nonzero output layers so the flow is not the identity
void perturb(CouplingFlow& f, std::uint64_t seed, double amp = 0.4) {
    Rng rng(seed);
    Eigen::VectorXd theta = f.params();
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += rng.uniform(-amp, amp);
    f.set_params(theta);
}

double logit(double u) { return std::log(u / (1.0 - u)); }

double std_normal_logpdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * M_PI); }

} // namespace

TEST_CASE("a fresh flow is the squashed standard normal") {
    CouplingFlow f = unit_flow_2d();
    Eigen::MatrixXd X(2, 1);
    X << 0.3, 0.8;
    Eigen::ArrayXd ld;
    Eigen::MatrixXd Z = flow_forward(f, X, ld);
    CHECK(Z(0, 0) == Catch::Approx(logit(0.3)).margin(1e-12));
    CHECK(Z(1, 0) == Catch::Approx(logit(0.8)).margin(1e-12));
    const double expect = -std::log(0.3 * 0.7) - std::log(0.8 * 0.2);
    CHECK(ld[0] == Catch::Approx(expect).margin(1e-12));

    // latent origin maps to the box center
    Eigen::MatrixXd z0 = Eigen::MatrixXd::Zero(2, 1);
    Eigen::MatrixXd c = flow_inverse(f, z0);
    CHECK(c(0, 0) == Catch::Approx(0.5).margin(1e-12));
    CHECK(c(1, 0) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("round trips hold at arbitrary parameter values") {
    CouplingFlow f = unit_flow_2d(3, 2, 3, 10);
    perturb(f, 17, 0.15);
    Rng rng(5);
    Eigen::MatrixXd Z(2, 10000);
    for (Eigen::Index i = 0; i < Z.cols(); ++i) {
        Z(0, i) = rng.normal();
        Z(1, i) = rng.normal();
    }
    Eigen::MatrixXd X = flow_inverse(f, Z);
    CHECK(X.array().minCoeff() > 0.0);
    CHECK(X.array().maxCoeff() < 1.0);
    Eigen::ArrayXd ld;
    Eigen::MatrixXd Z2 = flow_forward(f, X, ld);
    CHECK((Z2 - Z).array().abs().maxCoeff() < 1e-6);

    Eigen::MatrixXd U(2, 64);
    Rng r2(6);
    for (Eigen::Index i = 0; i < U.cols(); ++i) {
        U(0, i) = r2.uniform(0.02, 0.98);
        U(1, i) = r2.uniform(0.02, 0.98);
    }
    Eigen::MatrixXd Zu = flow_forward(f, U, ld);
    Eigen::MatrixXd U2 = flow_inverse(f, Zu);
    CHECK((U2 - U).array().abs().maxCoeff() < 1e-8);
}

TEST_CASE("points on or beyond the box edge are rejected") {
    CouplingFlow f = unit_flow_2d();
    Eigen::ArrayXd ld;
    Eigen::MatrixXd X(2, 1);
    X << 1.0, 0.5;
    CHECK_THROWS_AS(flow_forward(f, X, ld), std::domain_error);
    X << 0.5, -0.1;
    CHECK_THROWS_AS(flow_forward(f, X, ld), std::domain_error);
    CHECK(flow_logpdf(f, X)[0] == -std::numeric_limits<double>::infinity());
}

TEST_CASE("the log-determinant matches a finite-difference Jacobian") {
    CouplingFlow f = unit_flow_2d(9, 2, 2, 8);
    perturb(f, 23);
    Rng rng(11);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd X(2, 1);
        X << rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95);
        Eigen::ArrayXd ld;
        flow_forward(f, X, ld);
        Eigen::Matrix2d J;
        for (int j = 0; j < 2; ++j) {
            Eigen::MatrixXd Xp = X, Xm = X;
            Xp(j, 0) += h;
            Xm(j, 0) -= h;
            Eigen::ArrayXd d;
            Eigen::MatrixXd Zp = flow_forward(f, Xp, d);
            Eigen::MatrixXd Zm = flow_forward(f, Xm, d);
            J.col(j) = (Zp - Zm).col(0) / (2 * h);
        }
        CHECK(std::fabs(std::log(std::fabs(J.determinant())) - ld[0]) < 1e-4);
    }
}

TEST_CASE("the density normalizes and matches the closed form at the identity") {
    CouplingFlow f = unit_flow_2d();

    // closed form: log p(x) = sum_j log N(logit(x_j)) - log(x_j (1 - x_j))
    Eigen::MatrixXd P(2, 2);
    P << 0.5, 0.98, 0.5, 0.5;
    Eigen::ArrayXd lp = flow_logpdf(f, P);
    auto closed = [&](double a, double b) {
        return std_normal_logpdf(logit(a)) - std::log(a * (1 - a)) +
               std_normal_logpdf(logit(b)) - std::log(b * (1 - b));
    };
    CHECK(lp[0] - lp[1] == Catch::Approx(closed(0.5, 0.5) - closed(0.98, 0.5)).margin(1e-10));

    // Monte Carlo normalization over the box, identity and perturbed flow
    CouplingFlow g = unit_flow_2d(4, 2, 2, 8);
    perturb(g, 31, 0.3);
    Rng rng(2);
    const Eigen::Index n = 1000000;
    Eigen::MatrixXd X(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(0, i) = rng.uniform(1e-9, 1.0 - 1e-9);
        X(1, i) = rng.uniform(1e-9, 1.0 - 1e-9);
    }
    CHECK(std::fabs(flow_logpdf(f, X).exp().mean() - 1.0) < 1e-2);
    CHECK(std::fabs(flow_logpdf(g, X).exp().mean() - 1.0) < 1e-2);
}

TEST_CASE("samples reproduce squashed-normal moments and are seed-deterministic") {
    CouplingFlow f = unit_flow_2d();
    Rng rng(7);
    const Eigen::Index n = 100000;
    Eigen::MatrixXd X = flow_sample(f, n, rng);
    REQUIRE(X.cols() == n);
    CHECK(X.array().minCoeff() > 0.0);
    CHECK(X.array().maxCoeff() < 1.0);

    // reference moments of sigmoid(Z), Z ~ N(0,1), by quadrature
    double m1 = 0.0, m2 = 0.0;
    const int q = 20001;
    for (int i = 0; i < q; ++i) {
        const double z = -10.0 + 20.0 * i / (q - 1);
        const double w = std::exp(std_normal_logpdf(z)) * (20.0 / (q - 1));
        const double s = 1.0 / (1.0 + std::exp(-z));
        m1 += w * s;
        m2 += w * s * s;
    }
    const double var = m2 - m1 * m1;
    for (int j = 0; j < 2; ++j) {
        const double mean = X.row(j).mean();
        const double v = (X.row(j).array() - mean).square().mean();
        CHECK(std::fabs(mean - m1) < 3.0 * std::sqrt(var / n));
        // SE of the sample variance ~ sqrt((m4 - var^2)/n); bound m4 by 1
        CHECK(std::fabs(v - var) < 3.0 * std::sqrt(1.0 / n));
    }

    Rng ra(99), rb(99);
    Eigen::MatrixXd A = flow_sample(f, 50, ra);
    Eigen::MatrixXd B = flow_sample(f, 50, rb);
    CHECK(A == B);
    Rng rc(1);
    Eigen::MatrixXd one = flow_sample(f, 1, rc);
    CHECK(one.cols() == 1);
    CHECK((one.array() > 0.0).all());
    CHECK((one.array() < 1.0).all());
}

TEST_CASE("cross entropy is scale-invariant in the target and zero on a dead target") {
    CouplingFlow f = unit_flow_2d(12);
    perturb(f, 40, 0.2);
    CouplingFlow prop = unit_flow_2d();
    Rng rng(3);
    Eigen::MatrixXd X = flow_sample(prop, 256, rng);

    DensityTarget zero{[](const Eigen::VectorXd&) { return 0.0; }};
    CHECK(cross_entropy_loss(f, prop, zero, X) == 0.0);

    DensityTarget bump{[](const Eigen::VectorXd& x) {
        return std::exp(-20.0 * (x - Eigen::VectorXd::Constant(2, 0.5)).squaredNorm());
    }};
    DensityTarget bump2{[&bump](const Eigen::VectorXd& x) { return 2.0 * bump.unnormalized(x); }};
    // the target is unnormalized, so its overall scale must not matter
    const double h1 = cross_entropy_loss(f, prop, bump, X);
    CHECK(cross_entropy_loss(f, prop, bump2, X) == Catch::Approx(h1).epsilon(1e-13));

    DensityTarget bad{[](const Eigen::VectorXd&) { return -1.0; }};
    CHECK_THROWS_AS(cross_entropy_loss(f, prop, bad, X), std::runtime_error);
}

TEST_CASE("the cross-entropy gradient matches finite differences") {
    CouplingFlow f = unit_flow_2d(21, 2, 2, 6);
    perturb(f, 50, 0.3);
    CouplingFlow prop = unit_flow_2d();
    Rng rng(8);
    Eigen::MatrixXd X = flow_sample(prop, 64, rng);
    DensityTarget bump{[](const Eigen::VectorXd& x) {
        return std::exp(-10.0 * (x - Eigen::VectorXd::Constant(2, 0.4)).squaredNorm());
    }};
    Eigen::VectorXd g;
    cross_entropy_loss(f, prop, bump, X, &g);
    Eigen::VectorXd theta = f.params();
    const double h = 1e-6;
    Rng pick(4);
    for (int trial = 0; trial < 30; ++trial) {
        const auto j =
            static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(theta.size())));
        Eigen::VectorXd tp = theta;
        tp[j] += h;
        f.set_params(tp);
        const double Hp = cross_entropy_loss(f, prop, bump, X);
        tp[j] -= 2 * h;
        f.set_params(tp);
        const double Hm = cross_entropy_loss(f, prop, bump, X);
        f.set_params(theta);
        const double fd = (Hp - Hm) / (2 * h);
        const double scale = std::max({1.0, std::fabs(fd), std::fabs(g[j])});
        INFO("component " << j);
        CHECK(std::fabs(fd - g[j]) / scale < 1e-6);
    }
}

TEST_CASE("the fit is stationary when the target equals the proposal") {
    CouplingFlow f = unit_flow_2d(2, 1, 2, 6);
    CouplingFlow prop = f;
    DensityTarget self{[&prop](const Eigen::VectorXd& x) {
        return std::exp(flow_logpdf(prop, x)[0]);
    }};
    Rng rng(14);
    Eigen::MatrixXd X = flow_sample(prop, 200000, rng);
    Eigen::VectorXd g_opt, g_off;
    cross_entropy_loss(f, prop, self, X, &g_opt);
    CouplingFlow off = f;
    perturb(off, 60, 0.5);
    cross_entropy_loss(off, prop, self, X, &g_off);
    // at the optimum only sampling noise remains
    CHECK(g_opt.norm() < 0.05 * g_off.norm());
}

TEST_CASE("training concentrates mass on a Gaussian bump") {
    const Eigen::Vector2d mode(0.35, 0.6);
    DensityTarget bump{[&](const Eigen::VectorXd& x) {
        return std::exp(-40.0 * (x - mode).squaredNorm());
    }};
    CouplingFlow f = unit_flow_2d(33, 2, 4, 16);
    CouplingFlow prop = unit_flow_2d(33, 2, 4, 16); // identity proposal

    Eigen::VectorXd before = f.params();
    Rng rng0(5);
    CHECK(train_flow(f, bump, prop, 0, 100, rng0).empty());
    CHECK(f.params() == before);

    Rng rng(5);
    std::vector<double> trace = train_flow(f, bump, prop, 800, 2000, rng, 2e-3);
    REQUIRE(trace.size() == 800);

    // total-variation distance between a 20x20 sample histogram and the
    // grid-normalized target
    const int nb = 20;
    Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(nb, nb);
    Rng rs(77);
    const Eigen::Index n = 100000;
    Eigen::MatrixXd S = flow_sample(f, n, rs);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int a = std::min(nb - 1, static_cast<int>(S(0, i) * nb));
        const int b = std::min(nb - 1, static_cast<int>(S(1, i) * nb));
        hist(a, b) += 1.0 / static_cast<double>(n);
    }
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(nb, nb);
    const int sub = 8; // subcell quadrature of the target
    for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b)
            for (int i = 0; i < sub; ++i)
                for (int j = 0; j < sub; ++j) {
                    Eigen::VectorXd x(2);
                    x << (a + (i + 0.5) / sub) / nb, (b + (j + 0.5) / sub) / nb;
                    ref(a, b) += bump.unnormalized(x);
                }
    ref /= ref.sum();
    const double tv = 0.5 * (hist - ref).array().abs().sum();
    INFO("final loss " << trace.back() << " tv " << tv);
    CHECK(tv < 0.1);
}

TEST_CASE("a two-bump mixture keeps both modes populated") {
    const Eigen::Vector2d m1(0.25, 0.25), m2(0.75, 0.75);
    DensityTarget mix{[&](const Eigen::VectorXd& x) {
        return std::exp(-40.0 * (x - m1).squaredNorm()) +
               std::exp(-40.0 * (x - m2).squaredNorm());
    }};
    CouplingFlow f = unit_flow_2d(44, 2, 4, 16);
    CouplingFlow prop = unit_flow_2d(44, 2, 4, 16);
    Rng rng(9);
    train_flow(f, mix, prop, 800, 2000, rng, 2e-3);
    Rng rs(13);
    const Eigen::Index n = 100000;
    Eigen::MatrixXd S = flow_sample(f, n, rs);
    Eigen::Index c1 = 0, c2 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if ((S.col(i) - m1).norm() < 0.2) ++c1;
        if ((S.col(i) - m2).norm() < 0.2) ++c2;
    }
    const double f1 = static_cast<double>(c1) / n, f2 = static_cast<double>(c2) / n;
    INFO("mode shares " << f1 << " " << f2);
    CHECK(f1 >= 0.25);
    CHECK(f2 >= 0.25);
}

TEST_CASE("checkpoints round-trip the model exactly") {
    CouplingFlow f = make_flow(3, 2, 3, 10, Eigen::VectorXd::Constant(3, -0.5),
                               Eigen::VectorXd::Constant(3, 2.0), 55, 1.5);
    perturb(f, 66, 0.3);
    const std::string path = "flow_ckpt_test.ckpt";
    save_flow(f, path);
    CouplingFlow g = load_flow(path);
    std::remove(path.c_str());
    CHECK(g.dim == f.dim);
    CHECK(g.blocks == f.blocks);
    CHECK(g.scale_cap == f.scale_cap);
    CHECK(g.params() == f.params());
    Rng ra(3), rb(3);
    CHECK(flow_sample(f, 20, ra) == flow_sample(g, 20, rb));
}
