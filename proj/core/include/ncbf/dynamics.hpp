#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ncbf/interval.hpp"

namespace ncbf {

/// Closed axis-aligned box [lo, hi].
struct Box {
    Vec lo;
    Vec hi;

    Eigen::Index dim() const { return lo.size(); }
    bool contains(const Vec& x, double tol = 0.0) const {
        return (x.array() >= lo.array() - tol).all() && (x.array() <= hi.array() + tol).all();
    }
    Vec clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
    double volume() const { return (hi - lo).prod(); }
};

/// Euclidean distance from x to a closed box (0 inside).
double distance_to_box(const Box& box, const Vec& x);

enum class Region { Admissible, Inadmissible, Mixed };

/// X_a = keep \ (union of open obstacle interiors). Obstacles that only bound a
/// subset of coordinates span the whole state box in the others.
struct AdmissibleSet {
    Box keep;
    std::vector<Box> obstacles;

    bool contains(const State& x) const;
    /// Euclidean signed distance: >= 0 inside X_a, < 0 outside.
    double signed_distance(const State& x) const;
    /// Classify a box against X_a; `tol` absorbs round-off of center +/- radius.
    Region classify(const HyperRect& box, double tol = 1e-9) const;
};

enum class SystemKind { Pendulum, Robot2d };

struct SystemSpec {
    std::string id;
    SystemKind kind = SystemKind::Pendulum;
    int state_dim = 0;
    int input_dim = 0;
    Box state_box;
    AdmissibleSet admissible;
    Box input_box;
    std::map<std::string, double> params;

    // Pendulum coefficients derived from params: 3g/(2l), 3*beta/(m l^2), 3/(m l^2).
    double gravity_coef = 0.0;
    double damping_coef = 0.0;
    double input_coef = 0.0;

    /// Position coordinates come first; the rest are their rates.
    int position_dim() const { return state_dim / 2; }
    /// Throws std::invalid_argument if an invariant is broken.
    void validate() const;
};

/// Build a system by string id ("pendulum", "robot2d"). Override keys must match
/// the parameter names (m, beta, gravity, l); anything else is a ConfigError.
SystemSpec make_system(std::string_view id, const std::map<std::string, double>& overrides = {});

struct ControlAffine {
    Vec f;
    Mat g;
};

ControlAffine eval_f_g(const SystemSpec& sys, const State& x);
/// f(x) + g(x) u
State state_derivative(const SystemSpec& sys, const State& x, const Input& u);
double rho(const SystemSpec& sys, const State& x);
bool is_admissible(const SystemSpec& sys, const State& x);
/// All 2^m corners of the input box, lexicographic with dimension 0 most
/// significant and lo before hi.
std::vector<Input> input_vertices(const SystemSpec& sys);
/// Sound enclosure of {f(x) + g(x) u : x in box}. Throws DomainError if the box
/// leaves the state box.
IntervalVector interval_image(const SystemSpec& sys, const HyperRect& box, const Input& u);

/// Exact range of sin over [lo, hi].
Interval sin_range(double lo, double hi);

}  // namespace ncbf
