#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ncbf/dynamics.hpp"
#include "ncbf/runtime.hpp"
#include "ncbf/trainer.hpp"

namespace ncbf {

enum class InitKind { Random, Guide, Rho };

struct EvalSettings {
    std::size_t resolution = 1000;        // violation-ratio grid per axis
    std::size_t field_resolution = 200;   // cells per axis for the h field and area
    double grid_gap = 0.05;               // HJ oracle spacing
    double oracle_tolerance = 1e-6;
    int oracle_max_sweeps = 10'000;
};

struct SimSettings {
    double dt = 0.01;
    double horizon_s = 10.0;
    std::size_t n_rollouts = 100;
    PolicyKind policy = PolicyKind::PdGoal;
    State goal;  // defaults to the zero state
    PolicyGains gains;
    bool filter = true;
    double h_margin = 0.05;
    std::size_t traj_files = 10;  // how many traj_<i>.csv files to write
};

struct RunConfig {
    std::string system;
    std::map<std::string, double> system_params;
    TrainConfig train;
    InitKind init = InitKind::Random;
    std::string out_dir = "out";
    EvalSettings eval;
    SimSettings sim;

    SystemSpec make_system() const;
};

struct ConfigKey {
    std::string name;
    bool required;
    std::string description;
};

/// Every accepted key, in documentation order. Keys of the form param.<name> set
/// system parameters and are not listed individually.
const std::vector<ConfigKey>& config_schema();

/// Parse `key = value` lines; '#' starts a comment. Throws ConfigError naming the
/// offending key for unknown, duplicate, missing or malformed entries.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::string& path);

/// Write the schema as a plain table (key, required, description).
void write_schema(std::ostream& os);

}  // namespace ncbf
