#include "ncbf/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "ncbf/errors.hpp"

namespace ncbf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
    }
    if (pos != text.size() || !std::isfinite(v))
        throw ConfigError("key '" + key + "': expected a finite number, got '" + text + "'");
    return v;
}

long long to_integer(const std::string& key, const std::string& text, long long min_value) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': expected an integer, got '" + text + "'");
    if (v < min_value)
        throw ConfigError("key '" + key + "': must be at least " + std::to_string(min_value));
    return v;
}

bool to_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

Vec to_vec(const std::string& key, const std::string& text) {
    const auto v = to_list(key, text);
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"system", true, "system id: pendulum or robot2d"},
        {"hidden", true, "hidden layer widths, comma separated (e.g. 36 or 64,64)"},
        {"gamma", true, "class-K gain gamma in the barrier condition"},
        {"lambda", true, "training margin lambda"},
        {"lr", true, "initial SGD learning rate"},
        {"lr_decay", true, "learning-rate factor applied after every epoch"},
        {"k_epochs_per_verify", true, "training epochs between verifier calls"},
        {"t_gap", true, "smallest box radius the verifier refines to"},
        {"eps_init", true, "initial box radius per state coordinate, comma separated"},
        {"n_fixed", true, "number of uniformly sampled training states"},
        {"n_max", true, "maximum number of verification rounds"},
        {"seed", false, "random seed (default 0)"},
        {"dt_guide", false, "one-step lookahead for the guided input (default 0.01)"},
        {"batch_size", false, "minibatch size, 0 for full batch (default 32)"},
        {"warmup_epochs", false, "epochs on the fixed data before the first verification (default 0)"},
        {"momentum", false, "heavy-ball momentum of the barrier SGD, 0 = plain SGD (default 0)"},
        {"init", false, "initial barrier network: random, guide or rho (default random)"},
        {"delta_num", false, "numeric slack of the verifier tests (default 1e-9)"},
        {"box_cap", false, "maximum boxes per verification (default 1e7)"},
        {"threads", false, "worker threads, 0 = all cores (default 0)"},
        {"guide_discount", false, "discount of the guide backup (default 0.999)"},
        {"guide_max_sweeps", false, "maximum guide backup sweeps (default 200)"},
        {"guide_min_sweeps", false, "minimum guide backup sweeps (default 1)"},
        {"guide_tol", false, "mean target change that ends the guide sweeps (default 1e-3)"},
        {"guide_epochs_per_sweep", false, "regression epochs per guide sweep (default 5)"},
        {"guide_initial_epochs", false, "regression epochs fitting rho before the sweeps (default 100)"},
        {"guide_lr", false, "guide regression learning rate (default 1e-2)"},
        {"guide_batch_size", false, "guide regression minibatch size, 0 for full batch (default 32)"},
        {"guide_momentum", false, "heavy-ball momentum of the guide regression (default 0)"},
        {"out_dir", false, "output directory (default out)"},
        {"resolution", false, "violation-ratio grid points per axis (default 1000)"},
        {"field_resolution", false, "cells per axis for field_h.csv and area estimates (default 200)"},
        {"grid_gap", false, "HJ oracle grid spacing (default 0.05)"},
        {"oracle_tolerance", false, "HJ oracle stopping update (default 1e-6)"},
        {"oracle_max_sweeps", false, "HJ oracle sweep limit (default 10000)"},
        {"dt_sim", false, "rollout Euler step (default 0.01)"},
        {"horizon_s", false, "rollout length in seconds (default 10)"},
        {"n_rollouts", false, "number of rollouts for simulate (default 100)"},
        {"policy", false, "nominal policy: pd_goal, aggressive or zero (default pd_goal)"},
        {"goal", false, "goal state, comma separated (default zeros)"},
        {"kp", false, "PD position gain (default per system)"},
        {"kd", false, "PD velocity gain (default per system)"},
        {"filter", false, "apply the safety filter in simulate (default true)"},
        {"h_margin", false, "minimum h at rollout starts (default 0.05)"},
        {"traj_files", false, "number of traj_<i>.csv files written by simulate (default 10)"},
    };
    return schema;
}

SystemSpec RunConfig::make_system() const { return ncbf::make_system(system, system_params); }

RunConfig parse_config(std::istream& is) {
    std::map<std::string, std::string> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (value.empty()) throw ConfigError("key '" + key + "': empty value");
        if (!entries.emplace(key, value).second) throw ConfigError("key '" + key + "' appears twice");
    }

    std::set<std::string> known;
    for (const auto& k : config_schema()) known.insert(k.name);
    for (const auto& [key, value] : entries)
        if (!known.count(key) && key.rfind("param.", 0) != 0) throw ConfigError("unknown config key '" + key + "'");
    for (const auto& k : config_schema())
        if (k.required && !entries.count(k.name)) throw ConfigError("missing required config key '" + k.name + "'");

    RunConfig cfg;
    TrainConfig& t = cfg.train;
    auto has = [&](const char* k) { return entries.count(k) > 0; };
    auto get = [&](const char* k) -> const std::string& { return entries.at(k); };

    cfg.system = get("system");
    for (const auto& [key, value] : entries)
        if (key.rfind("param.", 0) == 0) cfg.system_params[key.substr(6)] = to_double(key, value);

    t.hidden.clear();
    for (double w : to_list("hidden", get("hidden"))) {
        if (w < 1 || w != std::floor(w)) throw ConfigError("key 'hidden': widths must be positive integers");
        t.hidden.push_back(static_cast<int>(w));
    }
    t.gamma = to_double("gamma", get("gamma"));
    t.lambda = to_double("lambda", get("lambda"));
    t.lr = to_double("lr", get("lr"));
    t.lr_decay = to_double("lr_decay", get("lr_decay"));
    t.k_epochs_per_verify = static_cast<int>(to_integer("k_epochs_per_verify", get("k_epochs_per_verify"), 0));
    t.t_gap = to_double("t_gap", get("t_gap"));
    t.eps_init = to_vec("eps_init", get("eps_init"));
    t.n_fixed = static_cast<std::size_t>(to_integer("n_fixed", get("n_fixed"), 1));
    t.n_max = static_cast<int>(to_integer("n_max", get("n_max"), 1));

    if (has("seed")) t.seed = static_cast<std::uint64_t>(to_integer("seed", get("seed"), 0));
    if (has("dt_guide")) t.dt_guide = to_double("dt_guide", get("dt_guide"));
    if (has("batch_size")) t.batch_size = static_cast<std::size_t>(to_integer("batch_size", get("batch_size"), 0));
    if (has("warmup_epochs")) t.warmup_epochs = static_cast<int>(to_integer("warmup_epochs", get("warmup_epochs"), 0));
    if (has("momentum")) t.momentum = to_double("momentum", get("momentum"));
    if (has("init")) {
        const std::string& v = get("init");
        if (v == "random") cfg.init = InitKind::Random;
        else if (v == "guide") cfg.init = InitKind::Guide;
        else if (v == "rho") cfg.init = InitKind::Rho;
        else throw ConfigError("key 'init': expected random, guide or rho, got '" + v + "'");
    }
    if (has("delta_num")) t.delta_num = to_double("delta_num", get("delta_num"));
    if (has("box_cap")) t.box_cap = static_cast<std::size_t>(to_integer("box_cap", get("box_cap"), 1));
    if (has("threads")) t.threads = static_cast<unsigned>(to_integer("threads", get("threads"), 0));
    if (has("guide_discount")) t.guide_discount = to_double("guide_discount", get("guide_discount"));
    if (has("guide_max_sweeps")) t.guide_max_sweeps = static_cast<int>(to_integer("guide_max_sweeps", get("guide_max_sweeps"), 0));
    if (has("guide_min_sweeps")) t.guide_min_sweeps = static_cast<int>(to_integer("guide_min_sweeps", get("guide_min_sweeps"), 0));
    if (has("guide_tol")) t.guide_tol = to_double("guide_tol", get("guide_tol"));
    if (has("guide_epochs_per_sweep"))
        t.guide_epochs_per_sweep = static_cast<int>(to_integer("guide_epochs_per_sweep", get("guide_epochs_per_sweep"), 0));
    if (has("guide_initial_epochs"))
        t.guide_initial_epochs = static_cast<int>(to_integer("guide_initial_epochs", get("guide_initial_epochs"), 0));
    if (has("guide_lr")) t.guide_lr = to_double("guide_lr", get("guide_lr"));
    if (has("guide_batch_size"))
        t.guide_batch_size = static_cast<std::size_t>(to_integer("guide_batch_size", get("guide_batch_size"), 0));
    if (has("guide_momentum")) t.guide_momentum = to_double("guide_momentum", get("guide_momentum"));

    if (has("out_dir")) cfg.out_dir = get("out_dir");
    if (has("resolution")) cfg.eval.resolution = static_cast<std::size_t>(to_integer("resolution", get("resolution"), 2));
    if (has("field_resolution"))
        cfg.eval.field_resolution = static_cast<std::size_t>(to_integer("field_resolution", get("field_resolution"), 2));
    if (has("grid_gap")) cfg.eval.grid_gap = to_double("grid_gap", get("grid_gap"));
    if (has("oracle_tolerance")) cfg.eval.oracle_tolerance = to_double("oracle_tolerance", get("oracle_tolerance"));
    if (has("oracle_max_sweeps"))
        cfg.eval.oracle_max_sweeps = static_cast<int>(to_integer("oracle_max_sweeps", get("oracle_max_sweeps"), 1));

    SimSettings& s = cfg.sim;
    if (has("dt_sim")) s.dt = to_double("dt_sim", get("dt_sim"));
    if (has("horizon_s")) s.horizon_s = to_double("horizon_s", get("horizon_s"));
    if (has("n_rollouts")) s.n_rollouts = static_cast<std::size_t>(to_integer("n_rollouts", get("n_rollouts"), 0));
    if (has("policy")) s.policy = parse_policy(get("policy"));
    if (has("goal")) s.goal = to_vec("goal", get("goal"));
    if (has("filter")) s.filter = to_bool("filter", get("filter"));
    if (has("h_margin")) s.h_margin = to_double("h_margin", get("h_margin"));
    if (has("traj_files")) s.traj_files = static_cast<std::size_t>(to_integer("traj_files", get("traj_files"), 0));

    // Semantic checks need the system.
    const SystemSpec sys = cfg.make_system();
    if (t.eps_init.size() != sys.state_dim)
        throw ConfigError("key 'eps_init': expected " + std::to_string(sys.state_dim) + " values");
    if ((t.eps_init.array() <= 0.0).any()) throw ConfigError("key 'eps_init': radii must be positive");
    if (s.goal.size() == 0) s.goal = State::Zero(sys.state_dim);
    if (s.goal.size() != sys.state_dim)
        throw ConfigError("key 'goal': expected " + std::to_string(sys.state_dim) + " values");
    s.gains = default_gains(sys);
    if (has("kp")) s.gains.kp = to_double("kp", get("kp"));
    if (has("kd")) s.gains.kd = to_double("kd", get("kd"));
    if (!(s.dt > 0.0)) throw ConfigError("key 'dt_sim': must be positive");
    if (!(s.horizon_s >= 0.0)) throw ConfigError("key 'horizon_s': must be non-negative");
    if (!(cfg.eval.grid_gap > 0.0)) throw ConfigError("key 'grid_gap': must be positive");
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

void write_schema(std::ostream& os) {
    for (const auto& k : config_schema())
        os << k.name << (k.required ? "  (required)  " : "  (optional)  ") << k.description << '\n';
    os << "param.<name>  (optional)  system parameter override, e.g. param.m for the pendulum\n";
}

}  // namespace ncbf
