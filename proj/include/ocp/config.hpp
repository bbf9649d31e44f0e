#ifndef OCP_CONFIG_HPP
#define OCP_CONFIG_HPP

#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocp/adaptive.hpp"
#include "ocp/problems/oracle1d.hpp"
#include "ocp/problems/test1.hpp"
#include "ocp/problems/test3.hpp"

namespace ocp {

/// A full run description: problem, method, and every hyperparameter.
struct RunConfig {
    std::string problem; // oracle1d | test1 | test3
    std::string method;  // aonn | das2 | adaptive-aonn
    std::string run_dir; // artifact directory (relative to the output root)
    AdaptiveConfig adaptive;
};

inline std::shared_ptr<ProblemSpec> make_problem(const std::string& name) {
    if (name == "oracle1d") return make_oracle1d();
    if (name == "test1") return make_test1();
    if (name == "test3") return make_test3();
    throw std::invalid_argument("unknown problem: " + name);
}

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] inline void fail(const std::string& path, int line, const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

inline double to_double(const std::string& path, int line, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        fail(path, line, "expected a number, got '" + v + "'");
    }
    if (used != v.size()) fail(path, line, "trailing characters in number '" + v + "'");
    return d;
}

inline long long to_int(const std::string& path, int line, const std::string& v) {
    std::size_t used = 0;
    long long d = 0;
    try {
        d = std::stoll(v, &used);
    } catch (const std::exception&) {
        fail(path, line, "expected an integer, got '" + v + "'");
    }
    if (used != v.size()) fail(path, line, "trailing characters in integer '" + v + "'");
    return d;
}

inline std::vector<double> to_list(const std::string& path, int line, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(path, line, trim(item)));
    if (out.empty()) fail(path, line, "expected a comma-separated list");
    return out;
}

} // namespace config_detail

/// Parse a key = value config file. Unknown keys, duplicates, type mismatches
/// and out-of-range values are reported with their line number.
inline RunConfig parse_config(const std::string& path) {
    using namespace config_detail;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_config: cannot open " + path);
    RunConfig cfg;
    AdaptiveConfig& a = cfg.adaptive;
    std::vector<std::string> seen;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) fail(path, line, "expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        const std::string val = trim(s.substr(eq + 1));
        if (key.empty() || val.empty()) fail(path, line, "expected 'key = value'");
        for (const auto& k : seen)
            if (k == key) fail(path, line, "duplicate key '" + key + "'");
        seen.push_back(key);

        if (key == "problem") {
            if (val != "oracle1d" && val != "test1" && val != "test3")
                fail(path, line, "problem must be oracle1d, test1, or test3");
            cfg.problem = val;
        } else if (key == "method") {
            if (val != "aonn" && val != "das2" && val != "adaptive-aonn")
                fail(path, line, "method must be aonn, das2, or adaptive-aonn");
            cfg.method = val;
        } else if (key == "run_dir") {
            cfg.run_dir = val;
        } else if (key == "seed") {
            a.seed = static_cast<std::uint64_t>(to_int(path, line, val));
        } else if (key == "N_adaptive") {
            a.N_adaptive = static_cast<int>(to_int(path, line, val));
        } else if (key == "n_r") {
            a.n_r = to_int(path, line, val);
        } else if (key == "gamma") {
            a.dal.gamma = to_double(path, line, val);
            if (!(a.dal.gamma > 0.0 && a.dal.gamma <= 1.0))
                fail(path, line, "gamma must lie in (0, 1]");
        } else if (key == "c0") {
            a.dal.c0 = to_double(path, line, val);
            if (a.dal.c0 <= 0.0) fail(path, line, "c0 must be positive");
        } else if (key == "n0") {
            a.dal.n0 = static_cast<int>(to_int(path, line, val));
        } else if (key == "n_aug") {
            a.dal.n_aug = static_cast<int>(to_int(path, line, val));
        } else if (key == "n_ep") {
            a.dal.n_ep = static_cast<int>(to_int(path, line, val));
        } else if (key == "m") {
            a.dal.m = to_int(path, line, val);
        } else if (key == "boundary_m") {
            a.dal.boundary_m = to_int(path, line, val);
        } else if (key == "hidden") {
            a.dal.hidden.clear();
            for (double h : to_list(path, line, val)) {
                if (h < 1 || h != static_cast<int>(h))
                    fail(path, line, "hidden sizes must be positive integers");
                a.dal.hidden.push_back(static_cast<int>(h));
            }
        } else if (key == "optimizer") {
            if (val == "lbfgs")
                a.dal.method = OptMethod::QuasiNewton;
            else if (val == "adam")
                a.dal.method = OptMethod::AdaptiveMoment;
            else
                fail(path, line, "optimizer must be lbfgs or adam");
        } else if (key == "adam_lr") {
            a.dal.adam_lr = to_double(path, line, val);
            if (a.dal.adam_lr <= 0.0) fail(path, line, "adam_lr must be positive");
        } else if (key == "flow_blocks") {
            a.flow_blocks = static_cast<int>(to_int(path, line, val));
        } else if (key == "flow_layers") {
            a.flow_layers = static_cast<int>(to_int(path, line, val));
        } else if (key == "flow_width") {
            a.flow_width = static_cast<int>(to_int(path, line, val));
        } else if (key == "flow_scale_cap") {
            a.flow_scale_cap = to_double(path, line, val);
            if (a.flow_scale_cap <= 0.0) fail(path, line, "flow_scale_cap must be positive");
        } else if (key == "flow_epochs") {
            a.flow_epochs = static_cast<int>(to_int(path, line, val));
        } else if (key == "flow_batch") {
            a.flow_batch = to_int(path, line, val);
        } else if (key == "flow_lr") {
            a.flow_lr = to_double(path, line, val);
            if (a.flow_lr <= 0.0) fail(path, line, "flow_lr must be positive");
        } else if (key == "das2_epochs") {
            a.das2_epochs = static_cast<int>(to_int(path, line, val));
        } else if (key == "eval_xi") {
            std::vector<double> v = to_list(path, line, val);
            a.eval_xi = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        } else if (key == "eval_res_x") {
            a.eval_res_x = static_cast<int>(to_int(path, line, val));
        } else if (key == "eval_res_y") {
            a.eval_res_y = static_cast<int>(to_int(path, line, val));
        } else {
            fail(path, line, "unknown key '" + key + "'");
        }
    }
    if (cfg.problem.empty() || cfg.method.empty())
        throw std::runtime_error(path + ": missing required keys (problem, method)");
    auto prob = make_problem(cfg.problem);
    if (cfg.adaptive.eval_xi.size() &&
        cfg.adaptive.eval_xi.size() != prob->param_dim())
        throw std::runtime_error(path + ": eval_xi length must equal the parameter dimension");
    cfg.adaptive.validate();
    if (cfg.run_dir.empty()) {
        // default: config file stem
        std::string stem = path;
        const auto slash = stem.find_last_of('/');
        if (slash != std::string::npos) stem = stem.substr(slash + 1);
        const auto dot = stem.find_last_of('.');
        if (dot != std::string::npos) stem = stem.substr(0, dot);
        cfg.run_dir = stem;
    }
    return cfg;
}

} // namespace ocp

#endif // OCP_CONFIG_HPP
