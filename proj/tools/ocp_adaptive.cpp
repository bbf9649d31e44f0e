// ocp-adaptive: batch front end for the adaptive solver library.
//
// Subcommands:
//   run <cfg> [--dry-run]          train per the config, persist artifacts
//   eval <dir> [--xi ...] [--res NX NY]   evaluate saved checkpoints on a grid
//   compare <cfg> <cfg> ...        merged report across completed runs
//   export-samples <dir> --stage k dump one stage's collocation points
//
// All artifacts land under $OCP_OUTPUT_ROOT (default: current directory).
// Every CSV is deterministic for a fixed config and seed; wall-clock timings
// go to a separate timing.csv that is excluded from determinism checks.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ocp/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ocp;

namespace {

fs::path output_root() {
    const char* env = std::getenv("OCP_OUTPUT_ROOT");
    return fs::path(env && *env ? env : ".");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << body;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string training_log_csv(const std::vector<DalLogRow>& log) {
    std::string s = "epoch,L_s,L_a,L_u,c,n\n";
    for (const auto& r : log)
        s += std::to_string(r.epoch) + "," + fmt(r.L_s) + "," + fmt(r.L_a) + "," + fmt(r.L_u) +
             "," + fmt(r.c) + "," + std::to_string(r.n) + "\n";
    return s;
}

std::string training_set_csv(const TrainingSet& set) {
    std::string s = "stage,source";
    for (Eigen::Index j = 0; j < set.points.rows(); ++j)
        s += ",x" + std::to_string(j + 1);
    s += "\n";
    for (Eigen::Index i = 0; i < set.size(); ++i) {
        s += std::to_string(set.stage[static_cast<std::size_t>(i)]);
        s += set.source[static_cast<std::size_t>(i)] == SampleSource::Flow ? ",flow" : ",uniform";
        for (Eigen::Index j = 0; j < set.points.rows(); ++j)
            s += "," + fmt(set.points(j, i));
        s += "\n";
    }
    return s;
}

/// record.csv must be byte-identical across reruns, so the wall-clock column
/// is zeroed there and the measured values go to timing.csv instead.
void write_record_and_timing(const fs::path& dir, const RunRecord& rec) {
    RunRecord clean = rec;
    std::string timing = "stage,wall_seconds\n";
    for (auto& row : clean.stages) {
        timing += std::to_string(row.stage) + "," + fmt(row.wall_seconds) + "\n";
        row.wall_seconds = 0.0;
    }
    save_run_record((dir / "record.csv").string(), clean);
    write_file(dir / "timing.csv", timing);
}

AdaptiveResult dispatch(const RunConfig& cfg, const ProblemSpec& prob, const std::string& dir) {
    if (cfg.method == "adaptive-aonn") return run_adaptive_aonn(prob, cfg.adaptive, dir);
    if (cfg.method == "aonn") return run_aonn_baseline(prob, cfg.adaptive, dir);
    return run_das2_baseline(prob, cfg.adaptive, dir);
}

int cmd_run(const std::string& cfg_path, bool dry_run) {
    RunConfig cfg;
    try {
        cfg = parse_config(cfg_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    auto prob = make_problem(cfg.problem);
    const fs::path dir = output_root() / cfg.run_dir;
    if (dry_run) {
        std::cout << "problem: " << cfg.problem << "\nmethod: " << cfg.method
                  << "\nrun dir: " << dir.string() << "\nstages: " << cfg.adaptive.N_adaptive
                  << "\npoints per stage: " << cfg.adaptive.n_r
                  << "\nouter iterations per stage: " << cfg.adaptive.dal.n_ep
                  << "\njoint dimension: " << prob->joint_dim() << "\ndry run only\n";
        return 0;
    }
    fs::create_directories(dir);
    write_file(dir / "config.cfg", read_file(cfg_path));
    try {
        AdaptiveResult res = dispatch(cfg, *prob, dir.string());
        write_record_and_timing(dir, res.record);
        write_file(dir / "training_log.csv", training_log_csv(res.training_log));
        write_file(dir / "training_set.csv", training_set_csv(res.set));
        std::cout << "run complete: " << dir.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        json fail{{"status", "failed"}, {"error", e.what()}, {"problem", cfg.problem},
                  {"method", cfg.method}};
        write_file(dir / "failure.json", fail.dump(2) + "\n");
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
}

/// Most recent stage directory holding a state checkpoint, or -1.
int latest_stage(const fs::path& dir) {
    int best = -1;
    for (int k = 0; k < 10000; ++k)
        if (fs::exists(dir / ("stage_" + std::to_string(k)) / "y.ckpt")) best = k;
    return best;
}

SurrogateTriplet load_triplet(const fs::path& dir, int stage, const ProblemSpec& prob) {
    const fs::path sd = dir / ("stage_" + std::to_string(stage));
    SurrogateTriplet t;
    auto load = [&](const char* name, int want_dim) -> std::shared_ptr<Surrogate> {
        Network net = load_network((sd / name).string());
        if (net.input_dim() != want_dim)
            throw std::runtime_error(std::string("integrity error: ") + name + " expects input "
                                     "dimension " + std::to_string(net.input_dim()) + " but the "
                                     "problem needs " + std::to_string(want_dim));
        return std::make_shared<MlpSurrogate>(std::move(net));
    };
    t.y = load("y.ckpt", prob.joint_dim());
    t.p = load("p.ckpt", prob.joint_dim());
    if (fs::exists(sd / "u.ckpt"))
        t.u = load("u.ckpt", prob.control_feature_dim());
    else // control was eliminated in closed form; rebuild it from the adjoint
        t.u = optimality_map_control(prob, t.p);
    return t;
}

int cmd_eval(const std::string& run_dir, std::vector<double> xi_flag, std::vector<int> res_flag) {
    const fs::path dir = output_root() / run_dir;
    RunConfig cfg = parse_config((dir / "config.cfg").string());
    auto prob = make_problem(cfg.problem);
    const int stage = latest_stage(dir);
    if (stage < 0) throw std::runtime_error("no checkpoints under " + dir.string());
    SurrogateTriplet t = load_triplet(dir, stage, *prob);

    Eigen::VectorXd xi;
    if (!xi_flag.empty())
        xi = Eigen::Map<Eigen::VectorXd>(xi_flag.data(), static_cast<Eigen::Index>(xi_flag.size()));
    else if (cfg.adaptive.eval_xi.size())
        xi = cfg.adaptive.eval_xi;
    else
        xi = Eigen::VectorXd::Zero(prob->param_dim());
    if (xi.size() != prob->param_dim())
        throw std::runtime_error("integrity error: --xi needs " +
                                 std::to_string(prob->param_dim()) + " values");
    int res_x = cfg.adaptive.eval_res_x, res_y = cfg.adaptive.eval_res_y;
    if (res_flag.size() == 2) { res_x = res_flag[0]; res_y = res_flag[1]; }

    EvalGrid grid = make_eval_grid(*prob, xi, res_x, res_y);
    Eigen::ArrayXd y = detail::state_values(t, *prob, grid.points);
    std::string fields = "";
    for (int j = 0; j < prob->joint_dim(); ++j) fields += "x" + std::to_string(j + 1) + ",";
    fields += prob->has_analytic() ? "y,y_exact\n" : "y\n";
    for (Eigen::Index i = 0; i < grid.points.cols(); ++i) {
        for (int j = 0; j < prob->joint_dim(); ++j) fields += fmt(grid.points(j, i)) + ",";
        fields += fmt(y[i]);
        if (prob->has_analytic()) fields += "," + fmt(prob->exact_state(grid.points.col(i)));
        fields += "\n";
    }
    write_file(dir / "fields.csv", fields);

    Eigen::MatrixXd cp = control_eval_points(*prob, grid);
    Eigen::ArrayXd u = detail::control_values(t, *prob, cp);
    std::string ctrl = "";
    for (int j = 0; j < prob->joint_dim(); ++j) ctrl += "x" + std::to_string(j + 1) + ",";
    ctrl += prob->has_analytic() ? "u,u_exact\n" : "u\n";
    for (Eigen::Index i = 0; i < cp.cols(); ++i) {
        for (int j = 0; j < prob->joint_dim(); ++j) ctrl += fmt(cp(j, i)) + ",";
        ctrl += fmt(u[i]);
        if (prob->has_analytic()) ctrl += "," + fmt(prob->exact_control(cp.col(i)));
        ctrl += "\n";
    }
    write_file(dir / "control.csv", ctrl);

    if (prob->has_analytic()) {
        FieldErrors e = analytic_errors(t, *prob, xi, res_x, res_y);
        write_file(dir / "errors.csv",
                   "rel_l2_y,rel_l2_u\n" + fmt(e.rel_l2_y) + "," + fmt(e.rel_l2_u) + "\n");
        std::cout << "rel_l2_y=" << e.rel_l2_y << " rel_l2_u=" << e.rel_l2_u << "\n";
    }
    std::cout << "evaluated stage " << stage << " on a " << grid.points.cols()
              << "-point grid: " << (dir / "fields.csv").string() << "\n";
    return 0;
}

/// Minimal CSV reader: returns rows of fields, header skipped.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) { first = false; continue; }
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        rows.push_back(std::move(f));
    }
    return rows;
}

int cmd_compare(const std::vector<std::string>& cfg_paths) {
    std::vector<RunConfig> cfgs;
    for (const auto& p : cfg_paths) cfgs.push_back(parse_config(p));
    for (const auto& c : cfgs)
        if (c.problem != cfgs.front().problem)
            throw std::runtime_error("comparison error: configs target different problems (" +
                                     cfgs.front().problem + " vs " + c.problem + ")");

    std::vector<ReportRow> rows;
    std::string vs_samples = "method,samples,rel_l2_u,rel_l2_y\n";
    std::string vs_epoch = "method,epoch,L_s,L_a,L_u\n";
    for (const auto& c : cfgs) {
        const fs::path dir = output_root() / c.run_dir;
        if (!fs::exists(dir / "record.csv"))
            throw std::runtime_error("comparison error: no completed run in " + dir.string());
        // record.csv: stage,set_size,L_s,L_a,L_u,flow_CE,rel_l2_u,rel_l2_y,wall_seconds
        auto rec = read_csv(dir / "record.csv");
        if (rec.empty()) throw std::runtime_error("comparison error: empty record in " + dir.string());
        double wall = 0.0;
        for (const auto& r : read_csv(dir / "timing.csv")) wall += std::stod(r.at(1));
        for (const auto& r : rec)
            vs_samples += c.method + "," + r.at(1) + "," + r.at(6) + "," + r.at(7) + "\n";
        for (const auto& r : read_csv(dir / "training_log.csv"))
            vs_epoch += c.method + "," + r.at(0) + "," + r.at(1) + "," + r.at(2) + "," +
                        r.at(3) + "\n";
        const auto& last = rec.back();
        ReportRow row;
        row.method = c.method;
        row.samples = std::stoll(last.at(1));
        row.wall_seconds = wall;
        row.rel_l2_u = std::stod(last.at(6));
        row.rel_l2_y = std::stod(last.at(7));
        rows.push_back(row);
    }
    const std::string report = error_report(rows);
    std::cout << report;
    write_file(output_root() / "compare.csv", report);
    write_file(output_root() / "error_vs_samples.csv", vs_samples);
    write_file(output_root() / "error_vs_epoch.csv", vs_epoch);
    return 0;
}

int cmd_export_samples(const std::string& run_dir, int stage) {
    const fs::path dir = output_root() / run_dir;
    auto rows = read_csv(dir / "training_set.csv");
    std::string out;
    {
        std::ifstream in(dir / "training_set.csv");
        std::getline(in, out);
        out += "\n";
    }
    int kept = 0;
    for (const auto& r : rows) {
        if (std::stoi(r.at(0)) != stage) continue;
        std::string line;
        for (std::size_t j = 0; j < r.size(); ++j) line += (j ? "," : "") + r[j];
        out += line + "\n";
        ++kept;
    }
    if (kept == 0)
        throw std::runtime_error("no samples recorded for stage " + std::to_string(stage));
    const fs::path target = dir / ("samples_stage_" + std::to_string(stage) + ".csv");
    write_file(target, out);
    std::cout << "wrote " << kept << " points to " << target.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive neural solver for parametric optimal control"};
    app.require_subcommand(1);

    std::string cfg_path, run_dir;
    bool dry_run = false;
    std::vector<double> xi_flag;
    std::vector<int> res_flag;
    std::vector<std::string> cfg_list;
    int stage = 0;

    auto* run = app.add_subcommand("run", "train per a config file");
    run->add_option("config", cfg_path, "config file")->required();
    run->add_flag("--dry-run", dry_run, "validate and summarize without training");

    auto* ev = app.add_subcommand("eval", "evaluate saved checkpoints on a grid");
    ev->add_option("dir", run_dir, "run directory (relative to the output root)")->required();
    ev->add_option("--xi", xi_flag, "parameter values (defaults to the run's eval_xi)");
    ev->add_option("--res", res_flag, "grid resolution NX NY")->expected(2);

    auto* cmp = app.add_subcommand("compare", "merge reports across completed runs");
    cmp->add_option("configs", cfg_list, "two or more config files")->required();

    auto* exp = app.add_subcommand("export-samples", "dump one stage's collocation points");
    exp->add_option("dir", run_dir, "run directory (relative to the output root)")->required();
    exp->add_option("--stage", stage, "stage index")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (run->parsed()) return cmd_run(cfg_path, dry_run);
        if (ev->parsed()) return cmd_eval(run_dir, xi_flag, res_flag);
        if (cmp->parsed()) {
            if (cfg_list.size() < 2) {
                std::cerr << "comparison error: need at least two configs\n";
                return 2;
            }
            return cmd_compare(cfg_list);
        }
        return cmd_export_samples(run_dir, stage);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
