#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "ocp/network.hpp"

using namespace ocp;

TEST_CASE("init is deterministic under seed") {
    Network a = mlp_init({2, 4, 1}, 7);
    Network b = mlp_init({2, 4, 1}, 7);
    for (int l = 0; l < a.num_layers(); ++l) {
        CHECK(a.weights[l] == b.weights[l]);
        CHECK(a.biases[l] == b.biases[l]);
    }
    Network c = mlp_init({2, 4, 1}, 8);
    CHECK(a.weights[0] != c.weights[0]);
}

TEST_CASE("invalid layer lists are rejected") {
    CHECK_THROWS_AS(mlp_init({3}, 1), std::invalid_argument);
    CHECK_THROWS_AS(mlp_init({}, 1), std::invalid_argument);
    CHECK_THROWS_AS(mlp_init({2, 0, 1}, 1), std::invalid_argument);
}

TEST_CASE("parameter count for a six-hidden-layer network") {
    // 6*25+25 + 4*(25*25+25) + 25*1+1 = 175 + 2600 + 26
    Network n = mlp_init({6, 25, 25, 25, 25, 25, 1}, 1);
    CHECK(n.param_count() == 2801);
}

TEST_CASE("zero network evaluates to zero") {
    Network n = mlp_zero({3, 5, 1});
    Eigen::VectorXd x(3);
    x << 1.0, -2.0, 0.5;
    CHECK(mlp_forward(n, x)[0] == 0.0);
}

TEST_CASE("single affine layer with identity weights is the identity") {
    Network n = mlp_zero({3, 3}, Activation::Identity);
    n.weights[0] = Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd v(3);
    v << 0.3, -1.7, 2.2;
    CHECK(mlp_forward(n, v) == v);
}

TEST_CASE("one-hidden-unit tanh chain") {
    Network n = mlp_zero({1, 1, 1});
    n.weights[0](0, 0) = 1.0;
    n.weights[1](0, 0) = 1.0;
    Eigen::VectorXd x(1);
    x << 0.5;
    CHECK(mlp_forward(n, x)[0] == Catch::Approx(std::tanh(0.5)).epsilon(1e-12));
}

TEST_CASE("dimension mismatch raises a shape error") {
    Network n = mlp_init({2, 3, 1}, 3);
    Eigen::VectorXd x(3);
    x.setZero();
    CHECK_THROWS_AS(mlp_forward(n, x), std::invalid_argument);
}

TEST_CASE("batched forward matches per-point forward") {
    Network n = mlp_init({4, 8, 8, 1}, 11);
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 7);
    Eigen::MatrixXd Y = mlp_forward_batch(n, X);
    for (int j = 0; j < 7; ++j)
        CHECK(Y(0, j) == Catch::Approx(mlp_forward(n, X.col(j))[0]).epsilon(1e-14));
}

TEST_CASE("flatten/unflatten round-trips") {
    Network n = mlp_init({3, 6, 2}, 5);
    Eigen::VectorXd theta = flatten_params(n);
    Network m = mlp_zero({3, 6, 2});
    unflatten_params(m, theta);
    CHECK(flatten_params(m) == theta);
}

TEST_CASE("checkpoint round-trip preserves everything") {
    Network n = mlp_init({4, 10, 10, 1}, 99);
    const std::string path = "test_net.ckpt";
    save_network(n, path);
    Network m = load_network(path);
    std::remove(path.c_str());
    CHECK(m.sizes == n.sizes);
    CHECK(m.activation == n.activation);
    CHECK(m.seed == n.seed);
    CHECK(flatten_params(m) == flatten_params(n));
}
