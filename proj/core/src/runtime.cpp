#include "ncbf/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "ncbf/errors.hpp"

namespace ncbf {

namespace {

constexpr double kBoxTol = 1e-12;

bool in_box(const Box& box, const Vec& u) { return box.contains(u, kBoxTol); }

std::string exit_reason(const SystemSpec& sys, const State& x) {
    for (const auto& ob : sys.admissible.obstacles)
        if ((x.array() > ob.lo.array()).all() && (x.array() < ob.hi.array()).all()) return "obstacle";
    const int p = sys.position_dim();
    const Box& keep = sys.admissible.keep;
    for (int d = 0; d < p; ++d)
        if (x(d) < keep.lo(d) || x(d) > keep.hi(d)) return "position";
    return "velocity";
}

}  // namespace

FilterResult solve_filter_qp(const Vec& a, double b, const Box& box, const Input& u_nom, double delta_num) {
    const Eigen::Index m = a.size();
    if (u_nom.size() != m || box.dim() != m) throw std::invalid_argument("filter: dimension mismatch");
    if (m > 16) throw std::invalid_argument("filter: too many inputs for enumeration");

    FilterResult r;

    // Best vertex for the constraint; ties keep the first vertex in lexicographic order.
    Vec best_vertex(m);
    for (Eigen::Index d = 0; d < m; ++d) best_vertex(d) = a(d) > 0.0 ? box.hi(d) : box.lo(d);
    if (a.dot(best_vertex) < b - delta_num) {
        r.u_safe = best_vertex;
        r.feasible = false;
        r.modified = (best_vertex - u_nom).cwiseAbs().maxCoeff() > 0.0;
        r.constraint_value = a.dot(best_vertex) - b;
        return r;
    }

    // Enumerate active sets: each coordinate free, at lo or at hi; halfspace inactive or active.
    std::size_t combos = 1;
    for (Eigen::Index d = 0; d < m; ++d) combos *= 3;
    double best_obj = std::numeric_limits<double>::infinity();
    Vec best_u;
    Vec u(m);
    for (int active = 0; active < 2; ++active) {
        for (std::size_t code = 0; code < combos; ++code) {
            std::size_t rem = code;
            std::vector<bool> free(static_cast<std::size_t>(m));
            for (Eigen::Index d = 0; d < m; ++d, rem /= 3) {
                const int s = static_cast<int>(rem % 3);
                free[static_cast<std::size_t>(d)] = s == 0;
                u(d) = s == 0 ? u_nom(d) : (s == 1 ? box.lo(d) : box.hi(d));
            }
            if (active) {
                double af2 = 0.0;
                for (Eigen::Index d = 0; d < m; ++d)
                    if (free[static_cast<std::size_t>(d)]) af2 += a(d) * a(d);
                const double resid = b - a.dot(u);
                if (af2 > 0.0) {
                    const double t = resid / af2;
                    for (Eigen::Index d = 0; d < m; ++d)
                        if (free[static_cast<std::size_t>(d)]) u(d) += t * a(d);
                } else if (std::abs(resid) > delta_num) {
                    continue;
                }
            }
            if (!in_box(box, u) || a.dot(u) < b - delta_num) continue;
            const double obj = (u - u_nom).squaredNorm();
            if (obj < best_obj) {
                best_obj = obj;
                best_u = u;
            }
        }
    }
    if (best_u.size() == 0) best_u = best_vertex;  // only reachable through round-off
    r.u_safe = box.clamp(best_u);
    r.modified = (r.u_safe - u_nom).cwiseAbs().maxCoeff() > 0.0;
    r.constraint_value = a.dot(r.u_safe) - b;
    return r;
}

FilterResult safety_filter(const MlpParams& net, const SystemSpec& sys, const State& x, const Input& u_nom,
                           double gamma, double delta_num) {
    const auto [f, g] = eval_f_g(sys, x);
    const Vec grad = jacobian(net, x);
    const double h = forward(net, x);
    const Vec a = g.transpose() * grad;
    const double b = -grad.dot(f) - gamma * h;
    return solve_filter_qp(a, b, sys.input_box, u_nom, delta_num);
}

PolicyKind parse_policy(std::string_view name) {
    if (name == "pd_goal") return PolicyKind::PdGoal;
    if (name == "aggressive") return PolicyKind::Aggressive;
    if (name == "zero") return PolicyKind::Zero;
    throw ConfigError("unknown policy '" + std::string(name) + "' (expected pd_goal, aggressive or zero)");
}

std::string policy_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::PdGoal: return "pd_goal";
        case PolicyKind::Aggressive: return "aggressive";
        case PolicyKind::Zero: return "zero";
    }
    return "unknown";
}

PolicyGains default_gains(const SystemSpec& sys) {
    return sys.kind == SystemKind::Pendulum ? PolicyGains{10.0, 2.0} : PolicyGains{1.0, 2.0};
}

Input nominal_policy(PolicyKind kind, const SystemSpec& sys, const State& x, const State& goal,
                     const PolicyGains& gains) {
    const int p = sys.position_dim();
    const int m = sys.input_dim;
    if (x.size() != sys.state_dim) throw std::invalid_argument("state dimension mismatch");
    if (kind != PolicyKind::Zero && goal.size() != sys.state_dim) throw std::invalid_argument("goal dimension mismatch");
    if (m != p) throw std::invalid_argument("policies assume one input per position coordinate");
    Input u = Input::Zero(m);
    switch (kind) {
        case PolicyKind::Zero:
            break;
        case PolicyKind::PdGoal:
            u = gains.kp * (goal.head(p) - x.head(p)) + gains.kd * (goal.tail(p) - x.tail(p));
            u = sys.input_box.clamp(u);
            break;
        case PolicyKind::Aggressive: {
            const Vec d = goal.head(p) - x.head(p);
            double scale = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                if (d(i) > 0.0) scale = std::min(scale, sys.input_box.hi(i) / d(i));
                if (d(i) < 0.0) scale = std::min(scale, sys.input_box.lo(i) / d(i));
            }
            if (std::isfinite(scale)) u = sys.input_box.clamp(scale * d);
            break;
        }
    }
    return u;
}

double TrajectoryLog::min_h() const {
    double out = std::numeric_limits<double>::infinity();
    for (double h : h_values)
        if (!std::isnan(h)) out = std::min(out, h);
    return out;
}

TrajectoryLog rollout(const MlpParams* net, const SystemSpec& sys, const State& x0, const RolloutOptions& opts) {
    if (!(opts.dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(opts.horizon_s >= 0.0)) throw std::invalid_argument("horizon must be non-negative");
    if (x0.size() != sys.state_dim) throw std::invalid_argument("state dimension mismatch");

    TrajectoryLog log;
    log.dt = opts.dt;
    const auto steps = static_cast<std::size_t>(std::llround(opts.horizon_s / opts.dt));
    const bool goal_check = sys.kind == SystemKind::Robot2d && opts.goal.size() == sys.state_dim;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    State x = x0;
    log.states.push_back(x);
    log.h_values.push_back(net ? forward(*net, x) : nan);
    if (!is_admissible(sys, x)) {
        log.exit_event = ExitEvent{0, exit_reason(sys, x)};
        return log;
    }
    for (std::size_t k = 0; k < steps; ++k) {
        Input u = nominal_policy(opts.policy, sys, x, opts.goal, opts.gains);
        bool changed = false;
        if (net && opts.filter) {
            const FilterResult fr = safety_filter(*net, sys, x, u, opts.gamma, opts.delta_num);
            changed = fr.modified;
            u = fr.u_safe;
        }
        x = x + state_derivative(sys, x, u) * opts.dt;
        log.inputs.push_back(u);
        log.filtered.push_back(changed);
        log.states.push_back(x);
        log.h_values.push_back(net ? forward(*net, x) : nan);
        if (!is_admissible(sys, x)) {
            log.exit_event = ExitEvent{k + 1, exit_reason(sys, x)};
            break;
        }
        if (goal_check && (x - opts.goal).norm() < opts.goal_tolerance) {
            log.exit_event = ExitEvent{k + 1, "goal"};
            break;
        }
    }
    return log;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
    if (log.states.empty()) return;
    const Eigen::Index n = log.states.front().size();
    const Eigen::Index m = log.inputs.empty() ? 0 : log.inputs.front().size();
    os << 't';
    for (Eigen::Index d = 0; d < n; ++d) os << ",x" << d;
    for (Eigen::Index d = 0; d < m; ++d) os << ",u" << d;
    os << ",h,filtered_flag\n";
    const auto prec = os.precision(17);
    for (std::size_t k = 0; k < log.states.size(); ++k) {
        os << static_cast<double>(k) * log.dt;
        for (Eigen::Index d = 0; d < n; ++d) os << ',' << log.states[k](d);
        const bool has_u = k < log.inputs.size();
        for (Eigen::Index d = 0; d < m; ++d) {
            os << ',';
            if (has_u) os << log.inputs[k](d);
            else os << "nan";
        }
        os << ',';
        if (std::isnan(log.h_values[k])) os << "nan";
        else os << log.h_values[k];
        os << ',' << (has_u && log.filtered[k] ? 1 : 0) << '\n';
    }
    os.precision(prec);
}

std::vector<State> sample_starts(const MlpParams& net, const SystemSpec& sys, std::size_t n, double h_margin,
                                 std::uint64_t seed, std::size_t max_tries) {
    std::mt19937_64 rng(seed);
    const Box& keep = sys.admissible.keep;
    std::vector<std::uniform_real_distribution<double>> dists;
    for (int d = 0; d < sys.state_dim; ++d) dists.emplace_back(keep.lo(d), keep.hi(d));
    std::vector<State> out;
    State x(sys.state_dim);
    for (std::size_t tries = 0; out.size() < n; ++tries) {
        if (tries >= max_tries) throw std::runtime_error("could not sample start states with the requested h margin");
        for (int d = 0; d < sys.state_dim; ++d) x(d) = dists[static_cast<std::size_t>(d)](rng);
        if (is_admissible(sys, x) && forward(net, x) >= h_margin) out.push_back(x);
    }
    return out;
}

RolloutSummary summarize(const std::vector<TrajectoryLog>& logs) {
    RolloutSummary s;
    s.n = logs.size();
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& log : logs) {
        if (log.left_admissible()) {
            ++s.exits;
            if (log.exit_event->reason == "obstacle") ++s.collisions;
        }
        if (log.exit_event && log.exit_event->reason == "goal") ++s.goal_reached;
        const double h = log.min_h();
        if (std::isfinite(h)) {
            sum += h;
            ++counted;
        }
    }
    s.mean_h_min = counted ? sum / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

std::string summary_to_json(const RolloutSummary& s) {
    nlohmann::ordered_json j;
    j["n"] = s.n;
    j["exits"] = s.exits;
    j["collisions"] = s.collisions;
    j["goal_reached"] = s.goal_reached;
    if (std::isnan(s.mean_h_min)) j["mean_h_min"] = nullptr;
    else j["mean_h_min"] = s.mean_h_min;
    return j.dump(2);
}

}  // namespace ncbf
