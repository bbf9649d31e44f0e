#ifndef OCP_NETWORK_HPP
#define OCP_NETWORK_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocp/rng.hpp"
#include "ocp/tape.hpp"

namespace ocp {

enum class Activation { Tanh, Identity };

inline std::string to_string(Activation a) {
    return a == Activation::Tanh ? "tanh" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation: " + s);
}

/// Fully connected network. Hidden layers apply the activation; the final
/// layer is affine. Weights are 64-bit throughout.
struct Network {
    std::vector<int> sizes;
    std::vector<Eigen::MatrixXd> weights; // weights[l]: sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::Tanh;
    std::uint64_t seed = 0;

    int input_dim() const { return sizes.front(); }
    int output_dim() const { return sizes.back(); }
    int num_layers() const { return static_cast<int>(weights.size()); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += static_cast<std::size_t>(weights[l].size()) + biases[l].size();
        return n;
    }
};

/// Glorot-uniform initialization, U(-sqrt(6/(fan_in+fan_out)), +...),
/// deterministic under the seed.
inline Network mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed,
                        Activation act = Activation::Tanh) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("mlp_init: need at least two layers");
    for (int s : layer_sizes)
        if (s < 1) throw std::invalid_argument("mlp_init: layer sizes must be >= 1");

    Network net;
    net.sizes = layer_sizes;
    net.activation = act;
    net.seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)       // row-major fill order
            for (int j = 0; j < fan_in; ++j)
                w(i, j) = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return net;
}

inline Network mlp_zero(const std::vector<int>& layer_sizes,
                        Activation act = Activation::Tanh) {
    Network net = mlp_init(layer_sizes, 0, act);
    for (auto& w : net.weights) w.setZero();
    return net;
}

inline Eigen::VectorXd mlp_forward(const Network& net, const Eigen::VectorXd& x) {
    if (x.size() != net.input_dim())
        throw std::invalid_argument("mlp_forward: input length " + std::to_string(x.size()) +
                                    " != first layer size " + std::to_string(net.input_dim()));
    Eigen::VectorXd a = x;
    for (int l = 0; l < net.num_layers(); ++l) {
        Eigen::VectorXd z = net.weights[l] * a + net.biases[l];
        if (l + 1 < net.num_layers() && net.activation == Activation::Tanh)
            a = z.array().tanh().matrix();
        else
            a = std::move(z);
    }
    return a;
}

/// Batched forward; X is input_dim x m, result is output_dim x m.
inline Eigen::MatrixXd mlp_forward_batch(const Network& net, const Eigen::MatrixXd& X) {
    if (X.rows() != net.input_dim())
        throw std::invalid_argument("mlp_forward_batch: input dim mismatch");
    Eigen::MatrixXd a = X;
    for (int l = 0; l < net.num_layers(); ++l) {
        Eigen::MatrixXd z = (net.weights[l] * a).colwise() + net.biases[l];
        if (l + 1 < net.num_layers() && net.activation == Activation::Tanh)
            a = z.array().tanh().matrix();
        else
            a = std::move(z);
    }
    return a;
}

// --- flat parameter vector: per layer, weights row-major then biases ---

inline Eigen::VectorXd flatten_params(const Network& net) {
    Eigen::VectorXd theta(net.param_count());
    Eigen::Index k = 0;
    for (int l = 0; l < net.num_layers(); ++l) {
        const auto& w = net.weights[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) theta[k++] = w(i, j);
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
            theta[k++] = net.biases[l][i];
    }
    return theta;
}

inline void unflatten_params(Network& net, const Eigen::VectorXd& theta) {
    if (theta.size() != static_cast<Eigen::Index>(net.param_count()))
        throw std::invalid_argument("unflatten_params: size mismatch");
    Eigen::Index k = 0;
    for (int l = 0; l < net.num_layers(); ++l) {
        auto& w = net.weights[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = theta[k++];
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
            net.biases[l][i] = theta[k++];
    }
}

/// Record a forward pass on a tape, with every weight and bias as a tape
/// input. Used to obtain exact parameter gradients through the tape route.
struct TapedNetwork {
    std::vector<ad::Var> inputs;  // network inputs
    std::vector<ad::Var> params;  // flat parameter order
    std::vector<ad::Var> outputs;
};

inline TapedNetwork mlp_record(ad::Tape& tape, const Network& net,
                               const Eigen::VectorXd& x) {
    TapedNetwork rec;
    for (Eigen::Index i = 0; i < x.size(); ++i) rec.inputs.push_back(tape.input(x[i]));

    std::vector<std::vector<ad::Var>> wvars(net.num_layers());
    std::vector<std::vector<ad::Var>> bvars(net.num_layers());
    for (int l = 0; l < net.num_layers(); ++l) {
        const auto& w = net.weights[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                ad::Var v = tape.input(w(i, j));
                wvars[l].push_back(v);
                rec.params.push_back(v);
            }
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) {
            ad::Var v = tape.input(net.biases[l][i]);
            bvars[l].push_back(v);
            rec.params.push_back(v);
        }
    }

    std::vector<ad::Var> a = rec.inputs;
    for (int l = 0; l < net.num_layers(); ++l) {
        const int rows = net.sizes[l + 1];
        const int cols = net.sizes[l];
        std::vector<ad::Var> z(rows);
        for (int i = 0; i < rows; ++i) {
            ad::Var acc = bvars[l][i];
            for (int j = 0; j < cols; ++j)
                acc = acc + wvars[l][static_cast<std::size_t>(i) * cols + j] * a[j];
            z[i] = acc;
        }
        if (l + 1 < net.num_layers() && net.activation == Activation::Tanh)
            for (auto& v : z) v = tanh(v);
        a = std::move(z);
    }
    rec.outputs = std::move(a);
    return rec;
}

// --- checkpoint format: text manifest, then flat little-endian f64 payload ---

inline void save_network(const Network& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_network: cannot open " + path);
    f << "ocp-checkpoint-v1\n";
    f << "kind: network\n";
    f << "layer_sizes:";
    for (int s : net.sizes) f << ' ' << s;
    f << '\n';
    f << "activation: " << to_string(net.activation) << '\n';
    f << "seed: " << net.seed << '\n';
    f << "params: " << net.param_count() << '\n';
    f << "data:\n";
    Eigen::VectorXd theta = flatten_params(net);
    f.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(sizeof(double) * theta.size()));
}

inline Network load_network(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_network: cannot open " + path);
    std::string line;
    std::getline(f, line);
    if (line != "ocp-checkpoint-v1")
        throw std::runtime_error("load_network: bad magic in " + path);
    std::vector<int> sizes;
    Activation act = Activation::Tanh;
    std::uint64_t seed = 0;
    std::size_t nparams = 0;
    while (std::getline(f, line)) {
        if (line == "data:") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "kind:") {
            std::string kind;
            ls >> kind;
            if (kind != "network") throw std::runtime_error("load_network: not a network checkpoint");
        } else if (key == "layer_sizes:") {
            int s;
            while (ls >> s) sizes.push_back(s);
        } else if (key == "activation:") {
            std::string a;
            ls >> a;
            act = activation_from_string(a);
        } else if (key == "seed:") {
            ls >> seed;
        } else if (key == "params:") {
            ls >> nparams;
        }
    }
    Network net = mlp_zero(sizes, act);
    net.seed = seed;
    if (nparams != net.param_count())
        throw std::runtime_error("load_network: manifest/parameter count mismatch");
    Eigen::VectorXd theta(nparams);
    f.read(reinterpret_cast<char*>(theta.data()),
           static_cast<std::streamsize>(sizeof(double) * nparams));
    if (!f) throw std::runtime_error("load_network: truncated payload in " + path);
    unflatten_params(net, theta);
    return net;
}

} // namespace ocp

#endif
