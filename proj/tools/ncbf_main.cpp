#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncbf/config.hpp"
#include "ncbf/errors.hpp"
#include "ncbf/eval.hpp"
#include "ncbf/mlp.hpp"
#include "ncbf/runtime.hpp"
#include "ncbf/trainer.hpp"
#include "ncbf/verifier.hpp"

namespace fs = std::filesystem;
using namespace ncbf;

namespace {

struct Options {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> resolution;
    bool no_timing = false;
    bool quiet = false;
};

RunConfig load(const Options& o) {
    RunConfig cfg = load_config(o.config);
    if (o.seed) cfg.train.seed = *o.seed;
    if (o.resolution) {
        if (*o.resolution < 2) throw ConfigError("--resolution must be at least 2");
        cfg.eval.resolution = *o.resolution;
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write '" + path + "'");
    return os;
}

MlpParams load_net(const Options& o, const RunConfig& cfg, const SystemSpec& sys) {
    const std::string path = o.checkpoint.empty() ? out_path(cfg, "model.ckpt") : o.checkpoint;
    MlpParams net = load_checkpoint(path);
    if (net.input_dim() != sys.state_dim)
        throw ConfigError("checkpoint '" + path + "' does not match system '" + sys.id + "'");
    return net;
}

void write_report(const RunConfig& cfg, const VerifierReport& report, bool timing) {
    open_out(out_path(cfg, "report.json")) << report_to_json(report, timing) << '\n';
    auto ce = open_out(out_path(cfg, "ce.csv"));
    write_states_csv(ce, report.counterexamples);
}

int cmd_train(const Options& o) {
    const RunConfig cfg = load(o);
    const SystemSpec sys = cfg.make_system();
    CegisOptions opts;
    opts.guide = train_guide(sys, cfg.train);
    save_checkpoint(out_path(cfg, "guide.ckpt"), *opts.guide);
    if (cfg.init == InitKind::Guide) opts.initial_net = opts.guide;
    if (cfg.init == InitKind::Rho) opts.initial_net = fit_signed_distance(sys, cfg.train);
    if (!o.quiet)
        opts.on_round = [](const RoundRecord& r) {
            std::cerr << "round " << r.round << "  epochs " << r.epochs << "  loss " << r.loss << "  violating boxes "
                      << r.violating_boxes << "  ce total " << r.ce_total << "  " << outcome_name(r.outcome) << '\n';
        };
    const CegisResult res = cegis(sys, cfg.train, opts);
    save_checkpoint(out_path(cfg, "model.ckpt"), res.net);
    auto hist = open_out(out_path(cfg, "history.csv"));
    write_history_csv(hist, res.history, !o.no_timing);
    write_report(cfg, res.report, !o.no_timing);
    std::cout << outcome_name(res.report.outcome) << " after " << res.history.size() << " rounds, " << res.total_epochs
              << " epochs\n";
    return 0;
}

int cmd_verify(const Options& o) {
    const RunConfig cfg = load(o);
    const SystemSpec sys = cfg.make_system();
    const MlpParams net = load_net(o, cfg, sys);
    const VerifierReport report = verify(net, sys, cfg.train.verifier_config());
    write_report(cfg, report, !o.no_timing);
    std::cout << outcome_name(report.outcome) << "  boxes " << report.boxes_processed << "  counterexamples "
              << report.counterexamples.size() << '\n';
    return report.outcome == Outcome::Verified ? 0 : 1;
}

int cmd_eval(const Options& o) {
    const RunConfig cfg = load(o);
    const SystemSpec sys = cfg.make_system();
    const MlpParams net = load_net(o, cfg, sys);
    const ViolationStats vr = violation_ratio(net, sys, cfg.eval.resolution, cfg.train.gamma, cfg.train.threads);
    const SuperlevelGeometry geo = superlevel_geometry(net, sys, cfg.eval.field_resolution, Vec(), cfg.train.threads);

    nlohmann::ordered_json j;
    j["resolution"] = cfg.eval.resolution;
    j["total_points"] = vr.total_points;
    j["admissible_points"] = vr.admissible_points;
    j["violating_points"] = vr.violating_points;
    j["inadmissible_positive"] = vr.inadmissible_positive;
    j["violation_ratio"] = vr.ratio;
    j["violation_percent"] = vr.percent();
    j["field_resolution"] = cfg.eval.field_resolution;
    j["safe_area"] = geo.area;
    j["admissible_area"] = geo.admissible_area;
    if (sys.state_dim == 2) {
        OracleOptions oo{cfg.eval.oracle_tolerance, cfg.eval.oracle_max_sweeps};
        const OracleResult oracle = hj_oracle(sys, cfg.eval.grid_gap, cfg.train.gamma, oo);
        const double oracle_area = field_safe_area(oracle.value, sys, cfg.eval.field_resolution);
        const double excess = excess_area(net, sys, oracle.value, cfg.eval.field_resolution);
        j["oracle_grid_gap"] = cfg.eval.grid_gap;
        j["oracle_area"] = oracle_area;
        j["area_ratio"] = oracle_area > 0 ? geo.area / oracle_area : 0.0;
        j["excess_area"] = excess;
        j["excess_fraction"] = geo.area > 0 ? excess / geo.area : 0.0;
    }
    open_out(out_path(cfg, "eval.json")) << j.dump(2) << '\n';
    auto field = open_out(out_path(cfg, "field_h.csv"));
    geo.field.write_csv(field);
    auto boundary = open_out(out_path(cfg, "boundary.csv"));
    write_states_csv(boundary, geo.boundary);
    std::cout << "violation " << vr.percent() << "%  safe area " << geo.area << '\n';
    return 0;
}

int cmd_simulate(const Options& o) {
    const RunConfig cfg = load(o);
    const SystemSpec sys = cfg.make_system();
    const MlpParams net = load_net(o, cfg, sys);
    const SimSettings& s = cfg.sim;
    RolloutOptions ro;
    ro.policy = s.policy;
    ro.goal = s.goal;
    ro.gains = s.gains;
    ro.dt = s.dt;
    ro.horizon_s = s.horizon_s;
    ro.gamma = cfg.train.gamma;
    ro.filter = s.filter;
    ro.delta_num = cfg.train.delta_num;
    const auto starts = sample_starts(net, sys, s.n_rollouts, s.h_margin, cfg.train.seed);
    std::vector<TrajectoryLog> logs;
    logs.reserve(starts.size());
    for (const auto& x0 : starts) logs.push_back(rollout(&net, sys, x0, ro));
    for (std::size_t i = 0; i < logs.size() && i < s.traj_files; ++i) {
        auto os = open_out(out_path(cfg, "traj_" + std::to_string(i) + ".csv"));
        write_trajectory_csv(os, logs[i]);
    }
    const RolloutSummary sum = summarize(logs);
    open_out(out_path(cfg, "rollouts.json")) << summary_to_json(sum) << '\n';
    std::cout << "rollouts " << sum.n << "  exits " << sum.exits << "  collisions " << sum.collisions << "  goal "
              << sum.goal_reached << '\n';
    return 0;
}

int cmd_oracle(const Options& o) {
    const RunConfig cfg = load(o);
    const SystemSpec sys = cfg.make_system();
    if (sys.state_dim != 2) throw ConfigError("oracle supports two-dimensional systems only");
    const auto t0 = std::chrono::steady_clock::now();
    OracleOptions oo{cfg.eval.oracle_tolerance, cfg.eval.oracle_max_sweeps};
    const OracleResult res = hj_oracle(sys, cfg.eval.grid_gap, cfg.train.gamma, oo);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto field = open_out(out_path(cfg, "oracle_field.csv"));
    res.value.write_csv(field);
    nlohmann::ordered_json j;
    j["grid_gap"] = cfg.eval.grid_gap;
    j["sweeps"] = res.sweeps;
    j["last_update"] = res.last_update;
    j["dtau"] = res.dtau;
    j["safe_area"] = field_safe_area(res.value, sys, cfg.eval.field_resolution);
    if (!o.no_timing) j["wall_time_s"] = secs;
    open_out(out_path(cfg, "oracle.json")) << j.dump(2) << '\n';
    std::cout << "oracle sweeps " << res.sweeps << "  safe area " << j["safe_area"].get<double>() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural control barrier functions: training, verification and evaluation"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool checkpoint) {
        sub->add_option("--config", o.config, "run configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output directory (overrides out_dir)");
        sub->add_option("--seed", o.seed, "random seed (overrides seed)");
        sub->add_option("--resolution", o.resolution, "grid points per axis for the violation ratio");
        sub->add_flag("--no-timing", o.no_timing, "leave wall-clock fields out of the outputs");
        if (checkpoint) sub->add_option("--checkpoint", o.checkpoint, "network checkpoint (default <out>/model.ckpt)");
    };
    auto* train = app.add_subcommand("train", "train with verification in the loop");
    add_common(train, false);
    train->add_flag("--quiet", o.quiet, "no per-round progress");
    auto* verify_cmd = app.add_subcommand("verify", "verify a checkpoint");
    add_common(verify_cmd, true);
    auto* eval = app.add_subcommand("eval", "violation ratio and safe-set geometry");
    add_common(eval, true);
    auto* simulate = app.add_subcommand("simulate", "filtered rollouts");
    add_common(simulate, true);
    auto* oracle = app.add_subcommand("oracle", "grid value-iteration safe set");
    add_common(oracle, false);
    auto* schema = app.add_subcommand("schema", "print the configuration keys");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*schema) {
            write_schema(std::cout);
            return 0;
        }
        if (*train) return cmd_train(o);
        if (*verify_cmd) return cmd_verify(o);
        if (*eval) return cmd_eval(o);
        if (*simulate) return cmd_simulate(o);
        if (*oracle) return cmd_oracle(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
