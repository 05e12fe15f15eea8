#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ncbf/dynamics.hpp"
#include "ncbf/mlp.hpp"

namespace ncbf {

struct FilterResult {
    Input u_safe;
    bool modified = false;
    bool feasible = true;
    double constraint_value = 0.0;  // L_f h + L_g h u_safe + gamma h
};

/// Closest input to u_nom in the box with L_f h + L_g h u + gamma h >= 0. When no
/// box input satisfies the constraint, returns the box vertex maximizing L_g h u and
/// sets feasible = false.
FilterResult safety_filter(const MlpParams& net, const SystemSpec& sys, const State& x, const Input& u_nom,
                           double gamma, double delta_num = 1e-9);

/// The same QP for given constraint data a^T u >= b over `box`.
FilterResult solve_filter_qp(const Vec& a, double b, const Box& box, const Input& u_nom, double delta_num = 1e-9);

enum class PolicyKind { PdGoal, Aggressive, Zero };

PolicyKind parse_policy(std::string_view name);
std::string policy_name(PolicyKind kind);

struct PolicyGains {
    double kp = 0.0;
    double kd = 0.0;
};

/// Per-system default gains (pendulum 10/2, robot2d 1/2).
PolicyGains default_gains(const SystemSpec& sys);

/// pd_goal: saturated PD law toward the goal state; aggressive: full acceleration
/// along the straight line to the goal position; zero: null input.
Input nominal_policy(PolicyKind kind, const SystemSpec& sys, const State& x, const State& goal,
                     const PolicyGains& gains);

struct ExitEvent {
    std::size_t step = 0;  // index into TrajectoryLog::states
    std::string reason;    // "obstacle", "position", "velocity" or "goal"
};

struct TrajectoryLog {
    std::vector<State> states;
    std::vector<Input> inputs;    // one per transition
    std::vector<double> h_values;  // one per state; NaN without a network
    std::vector<bool> filtered;    // one per transition: the filter changed u
    double dt = 0.01;
    std::optional<ExitEvent> exit_event;

    bool left_admissible() const { return exit_event && exit_event->reason != "goal"; }
    double min_h() const;
};

struct RolloutOptions {
    PolicyKind policy = PolicyKind::PdGoal;
    State goal;
    PolicyGains gains;
    double dt = 0.01;
    double horizon_s = 10.0;
    double gamma = 0.5;
    bool filter = true;             // only used when a network is given
    double goal_tolerance = 0.1;    // robot2d only
    double delta_num = 1e-9;
};

/// Explicit Euler rollout. Stops at the first state outside X_a, or within the
/// goal tolerance on robot2d. `net` may be null.
TrajectoryLog rollout(const MlpParams* net, const SystemSpec& sys, const State& x0, const RolloutOptions& opts);

/// Header t,x0..,u0..,h,filtered_flag. The final state has no input; its u
/// columns are nan.
void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log);

/// Uniform rejection samples from X_a with h(x) >= h_margin.
std::vector<State> sample_starts(const MlpParams& net, const SystemSpec& sys, std::size_t n, double h_margin,
                                 std::uint64_t seed, std::size_t max_tries = 10'000'000);

struct RolloutSummary {
    std::size_t n = 0;
    std::size_t exits = 0;       // rollouts leaving X_a
    std::size_t collisions = 0;  // exits into an obstacle
    std::size_t goal_reached = 0;
    double mean_h_min = 0.0;
};

RolloutSummary summarize(const std::vector<TrajectoryLog>& logs);
/// {n, exits, collisions, goal_reached, mean_h_min}
std::string summary_to_json(const RolloutSummary& s);

}  // namespace ncbf
