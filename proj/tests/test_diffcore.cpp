#include <catch2/catch_amalgamated.hpp>

#include "ocp/netgrad.hpp"
#include "ocp/rng.hpp"

using namespace ocp;

namespace {

double fd_grad(const Network& net, Eigen::VectorXd x, int j, double h = 1e-5) {
    x[j] += h;
    const double up = mlp_forward(net, x)[0];
    x[j] -= 2 * h;
    const double dn = mlp_forward(net, x)[0];
    return (up - dn) / (2 * h);
}

double fd_second(const Network& net, Eigen::VectorXd x, int j, double h = 1e-4) {
    const double mid = mlp_forward(net, x)[0];
    x[j] += h;
    const double up = mlp_forward(net, x)[0];
    x[j] -= 2 * h;
    const double dn = mlp_forward(net, x)[0];
    return (up + dn - 2 * mid) / (h * h);
}

} // namespace

TEST_CASE("grad_input trivial cases") {
    Network zero = mlp_zero({3, 4, 1});
    Eigen::VectorXd x(3);
    x << 0.2, -0.4, 1.0;
    CHECK(grad_input(zero, x).norm() == 0.0);

    Network lin = mlp_zero({2, 1}, Activation::Identity);
    lin.weights[0] << 2.0, 3.0;
    Eigen::VectorXd v(2);
    v << 5.0, -7.0;
    Eigen::VectorXd g = grad_input(lin, v);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 3.0);
}

TEST_CASE("grad_input rejects vector-output networks") {
    Network n = mlp_init({2, 4, 2}, 1);
    CHECK_THROWS_AS(grad_input(n, Eigen::VectorXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("grad_input matches central differences on random networks") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        Network net = mlp_init({3, 10, 10, 1}, 100 + trial);
        Eigen::VectorXd x(3);
        for (int i = 0; i < 3; ++i) x[i] = rng.uniform(-1, 1);
        Eigen::VectorXd g = grad_input(net, x);
        for (int j = 0; j < 3; ++j) {
            const double fd = fd_grad(net, x, j);
            CHECK(std::fabs(g[j] - fd) <= 1e-6 * std::max(1.0, std::fabs(fd)));
        }
    }
}

TEST_CASE("laplacian trivial cases") {
    Network lin = mlp_zero({2, 1}, Activation::Identity);
    lin.weights[0] << 4.0, -1.0;
    CHECK(laplacian(lin, Eigen::VectorXd::Zero(2), {0, 1}) == 0.0);
    CHECK_THROWS_AS(laplacian(lin, Eigen::VectorXd::Zero(2), {0, 5}), std::out_of_range);
}

TEST_CASE("laplacian matches second-order central differences") {
    Rng rng(13);
    for (int trial = 0; trial < 25; ++trial) {
        Network net = mlp_init({4, 12, 12, 1}, 500 + trial);
        Eigen::VectorXd x(4);
        for (int i = 0; i < 4; ++i) x[i] = rng.uniform(-1, 1);
        const std::vector<int> sp = {0, 1};
        const double lap = laplacian(net, x, sp);
        const double fd = fd_second(net, x, 0) + fd_second(net, x, 1);
        CHECK(std::fabs(lap - fd) <= 1e-4 * std::max(1.0, std::fabs(fd)));
    }
}

TEST_CASE("tape route agrees with the fused kernels") {
    Network net = mlp_init({3, 8, 8, 1}, 77);
    Eigen::VectorXd x(3);
    x << 0.3, -0.5, 0.9;

    ad::Tape tape;
    TapedNetwork rec = mlp_record(tape, net, x);
    CHECK(tape.value(rec.outputs[0]) == Catch::Approx(mlp_forward(net, x)[0]).epsilon(1e-14));

    auto g_tape = tape.gradient(rec.outputs[0], rec.inputs);
    Eigen::VectorXd g_fused = grad_input(net, x);
    for (int j = 0; j < 3; ++j)
        CHECK(tape.value(g_tape[j]) == Catch::Approx(g_fused[j]).epsilon(1e-12));

    double lap_tape = 0.0;
    for (int j = 0; j < 2; ++j)
        lap_tape += tape.value(tape.gradient(g_tape[j], rec.inputs[j]));
    CHECK(lap_tape == Catch::Approx(laplacian(net, x, {0, 1})).epsilon(1e-10));
}

TEST_CASE("grad_params: constant loss gives zero gradient") {
    Network net = mlp_init({2, 3, 1}, 5);
    ad::Tape tape;
    TapedNetwork rec = mlp_record(tape, net, Eigen::VectorXd::Zero(2));
    ad::Var loss = tape.constant(3.14);
    Eigen::VectorXd g = grad_params(tape, loss, rec);
    CHECK(g.norm() == 0.0);
}

TEST_CASE("grad_params on a 1x1 linear net reproduces the hand derivation") {
    // f = w*x + b, loss = 0.5 f^2 -> dL/dw = f*x, dL/db = f
    Network net = mlp_zero({1, 1}, Activation::Identity);
    net.weights[0](0, 0) = 2.0;
    net.biases[0][0] = 0.5;
    Eigen::VectorXd x(1);
    x << 3.0;
    ad::Tape tape;
    TapedNetwork rec = mlp_record(tape, net, x);
    ad::Var loss = 0.5 * square(rec.outputs[0]);
    Eigen::VectorXd g = grad_params(tape, loss, rec);
    const double f = 2.0 * 3.0 + 0.5;
    CHECK(g[0] == Catch::Approx(f * 3.0).epsilon(1e-14));
    CHECK(g[1] == Catch::Approx(f).epsilon(1e-14));
}

TEST_CASE("grad_params matches finite differences on a random batch loss") {
    Network net = mlp_init({2, 6, 1}, 21);
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(2, 5);

    auto batch_loss = [&](const Network& n) {
        double acc = 0.0;
        for (int j = 0; j < X.cols(); ++j) {
            const double y = mlp_forward(n, X.col(j))[0];
            acc += 0.5 * y * y;
        }
        return acc;
    };

    // Tape route: record all points, sum the losses.
    ad::Tape tape;
    std::vector<TapedNetwork> recs;
    ad::Var loss = tape.constant(0.0);
    for (int j = 0; j < X.cols(); ++j) {
        recs.push_back(mlp_record(tape, net, X.col(j)));
        loss = loss + 0.5 * square(recs.back().outputs[0]);
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(net.param_count());
    for (const auto& rec : recs) g += grad_params(tape, loss, rec);

    Eigen::VectorXd theta = flatten_params(net);
    Rng rng(3);
    for (int probe = 0; probe < 10; ++probe) {
        const int k = static_cast<int>(rng.below(theta.size()));
        const double h = 1e-6;
        Network np = net;
        Eigen::VectorXd tp = theta;
        tp[k] += h;
        unflatten_params(np, tp);
        const double up = batch_loss(np);
        tp[k] -= 2 * h;
        unflatten_params(np, tp);
        const double dn = batch_loss(np);
        const double fd = (up - dn) / (2 * h);
        CHECK(std::fabs(g[k] - fd) <= 1e-6 * std::max(1.0, std::fabs(fd)));
    }
}

TEST_CASE("fused batched deriv kernels against per-point values and FD") {
    Network net = mlp_init({4, 10, 10, 1}, 31);
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 6);
    const std::vector<int> didx = {0, 1};

    MlpDerivEval ev;
    BatchDerivs d;
    ev.forward(net, X, didx, 2, d);

    for (int j = 0; j < X.cols(); ++j) {
        CHECK(d.value[j] == Catch::Approx(mlp_forward(net, X.col(j))[0]).epsilon(1e-13));
        for (int i = 0; i < 2; ++i) {
            CHECK(d.grad(i, j) == Catch::Approx(fd_grad(net, X.col(j), didx[i])).margin(1e-7));
            CHECK(d.hess(i, j) ==
                  Catch::Approx(fd_second(net, X.col(j), didx[i])).margin(1e-5).epsilon(1e-4));
        }
    }
}

TEST_CASE("fused parameter backward matches finite differences of a seeded objective") {
    Rng rng(99);
    Network net = mlp_init({3, 8, 8, 1}, 41);
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(3, 5);
    const std::vector<int> didx = {0, 2};

    BatchSeed seed;
    seed.value = Eigen::ArrayXd(5);
    seed.grad = Eigen::MatrixXd(2, 5);
    seed.hess = Eigen::MatrixXd(2, 5);
    for (int j = 0; j < 5; ++j) {
        seed.value[j] = rng.uniform(-1, 1);
        for (int i = 0; i < 2; ++i) {
            seed.grad(i, j) = rng.uniform(-1, 1);
            seed.hess(i, j) = rng.uniform(-1, 1);
        }
    }

    auto objective = [&](const Network& n) {
        MlpDerivEval e;
        BatchDerivs dd;
        e.forward(n, X, didx, 2, dd);
        double acc = (seed.value * dd.value).sum();
        acc += (seed.grad.array() * dd.grad.array()).sum();
        acc += (seed.hess.array() * dd.hess.array()).sum();
        return acc;
    };

    MlpDerivEval ev;
    BatchDerivs d;
    ev.forward(net, X, didx, 2, d);
    Eigen::VectorXd g = ev.backward_params(seed);

    Eigen::VectorXd theta = flatten_params(net);
    for (int probe = 0; probe < 12; ++probe) {
        const int k = static_cast<int>(rng.below(theta.size()));
        const double h = 1e-6;
        Network np = net;
        Eigen::VectorXd tp = theta;
        tp[k] += h;
        unflatten_params(np, tp);
        const double up = objective(np);
        tp[k] -= 2 * h;
        unflatten_params(np, tp);
        const double dn = objective(np);
        const double fd = (up - dn) / (2 * h);
        CHECK(std::fabs(g[k] - fd) <= 2e-5 * std::max(1.0, std::fabs(fd)));
    }
}

TEST_CASE("differentiation is bit-deterministic") {
    Network net = mlp_init({3, 9, 1}, 4);
    Eigen::VectorXd x(3);
    x << 0.1, 0.2, 0.3;
    Eigen::VectorXd g1 = grad_input(net, x);
    Eigen::VectorXd g2 = grad_input(net, x);
    CHECK(g1 == g2);
    CHECK(laplacian(net, x, {0, 1, 2}) == laplacian(net, x, {0, 1, 2}));
}
