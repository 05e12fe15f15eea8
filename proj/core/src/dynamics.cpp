#include "ncbf/dynamics.hpp"

#include <limits>
#include <numbers>

#include "ncbf/errors.hpp"

namespace ncbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
    Box b{Vec(static_cast<Eigen::Index>(lo.size())), Vec(static_cast<Eigen::Index>(hi.size()))};
    Eigen::Index i = 0;
    for (double v : lo) b.lo(i++) = v;
    i = 0;
    for (double v : hi) b.hi(i++) = v;
    return b;
}

bool strictly_inside(const Box& b, const Vec& x) {
    return (x.array() > b.lo.array()).all() && (x.array() < b.hi.array()).all();
}

// Distance to keep \ union(obstacles) from a point outside it. The complement of
// an open box is a union of closed halfspaces, so X_a is a union of boxes, one per
// choice of face for every obstacle.
double exterior_distance(const AdmissibleSet& set, const Vec& x) {
    const Eigen::Index n = x.size();
    const std::size_t k = set.obstacles.size();
    if (k == 0) return distance_to_box(set.keep, x);

    std::vector<int> choice(k, 0);
    const int faces = static_cast<int>(2 * n);
    double best = kInf;
    while (true) {
        Box region = set.keep;
        bool usable = true;
        for (std::size_t i = 0; i < k && usable; ++i) {
            const Box& ob = set.obstacles[i];
            const int d = choice[i] / 2;
            if (choice[i] % 2 == 0) {
                if (!std::isfinite(ob.lo(d))) usable = false;
                else region.hi(d) = std::min(region.hi(d), ob.lo(d));
            } else {
                if (!std::isfinite(ob.hi(d))) usable = false;
                else region.lo(d) = std::max(region.lo(d), ob.hi(d));
            }
        }
        if (usable && (region.lo.array() <= region.hi.array()).all())
            best = std::min(best, distance_to_box(region, x));

        std::size_t i = 0;
        while (i < k && ++choice[i] == faces) choice[i++] = 0;
        if (i == k) break;
    }
    return best;
}

}  // namespace

double distance_to_box(const Box& box, const Vec& x) {
    return (x - box.clamp(x)).norm();
}

bool AdmissibleSet::contains(const State& x) const {
    if (!keep.contains(x)) return false;
    for (const auto& ob : obstacles)
        if (strictly_inside(ob, x)) return false;
    return true;
}

double AdmissibleSet::signed_distance(const State& x) const {
    if (contains(x)) {
        double margin = std::min((x - keep.lo).minCoeff(), (keep.hi - x).minCoeff());
        for (const auto& ob : obstacles) margin = std::min(margin, distance_to_box(ob, x));
        return margin;
    }
    return -exterior_distance(*this, x);
}

Region AdmissibleSet::classify(const HyperRect& box, double tol) const {
    const Vec bl = box.lower();
    const Vec bu = box.upper();

    bool inside_keep = (bl.array() >= keep.lo.array() - tol).all() && (bu.array() <= keep.hi.array() + tol).all();
    bool clear_of_obstacles = true;
    bool inside_obstacle = false;
    for (const auto& ob : obstacles) {
        const bool disjoint =
            (bu.array() <= ob.lo.array() + tol).any() || (bl.array() >= ob.hi.array() - tol).any();
        if (!disjoint) clear_of_obstacles = false;
        if ((bl.array() >= ob.lo.array() - tol).all() && (bu.array() <= ob.hi.array() + tol).all())
            inside_obstacle = true;
    }
    if (inside_keep && clear_of_obstacles) return Region::Admissible;

    const bool outside_keep =
        (bu.array() <= keep.lo.array() + tol).any() || (bl.array() >= keep.hi.array() - tol).any();
    if (outside_keep || inside_obstacle) return Region::Inadmissible;
    return Region::Mixed;
}

void SystemSpec::validate() const {
    if (state_dim <= 0 || input_dim <= 0) throw std::invalid_argument("system dimensions must be positive");
    if (state_box.dim() != state_dim || input_box.dim() != input_dim)
        throw std::invalid_argument("box dimensions do not match the system");
    if ((state_box.lo.array() >= state_box.hi.array()).any()) throw std::invalid_argument("empty state box");
    if ((input_box.lo.array() >= input_box.hi.array()).any()) throw std::invalid_argument("empty input box");
    if ((admissible.keep.lo.array() < state_box.lo.array()).any() ||
        (admissible.keep.hi.array() > state_box.hi.array()).any())
        throw std::invalid_argument("admissible set leaves the state box");
}

SystemSpec make_system(std::string_view id, const std::map<std::string, double>& overrides) {
    SystemSpec sys;
    sys.id = std::string(id);
    if (id == "pendulum") {
        sys.kind = SystemKind::Pendulum;
        sys.state_dim = 2;
        sys.input_dim = 1;
        sys.state_box = make_box({-kPi, -5.0}, {kPi, 5.0});
        sys.admissible.keep = make_box({-5.0 * kPi / 6.0, -4.0}, {5.0 * kPi / 6.0, 4.0});
        sys.input_box = make_box({-12.0}, {12.0});
        sys.params = {{"m", 1.0}, {"beta", 0.1}, {"gravity", 9.81}, {"l", 1.0}};
    } else if (id == "robot2d") {
        sys.kind = SystemKind::Robot2d;
        sys.state_dim = 4;
        sys.input_dim = 2;
        sys.state_box = make_box({-0.4, -0.4, -1.4, -1.4}, {4.4, 4.4, 1.4, 1.4});
        sys.admissible.keep = make_box({0.0, 0.0, -1.0, -1.0}, {4.0, 4.0, 1.0, 1.0});
        sys.admissible.obstacles.push_back(make_box({1.5, 0.0, -kInf, -kInf}, {2.5, 2.0, kInf, kInf}));
        sys.input_box = make_box({-1.0, -1.0}, {1.0, 1.0});
    } else {
        throw ConfigError("unknown system id '" + std::string(id) + "' (expected pendulum or robot2d)");
    }

    for (const auto& [key, value] : overrides) {
        auto it = sys.params.find(key);
        if (it == sys.params.end())
            throw ConfigError("system '" + sys.id + "' has no parameter '" + key + "'");
        if (!std::isfinite(value)) throw ConfigError("parameter '" + key + "' must be finite");
        it->second = value;
    }

    if (sys.kind == SystemKind::Pendulum) {
        const double m = sys.params.at("m"), l = sys.params.at("l");
        if (m <= 0 || l <= 0) throw ConfigError("pendulum m and l must be positive");
        sys.gravity_coef = 3.0 * sys.params.at("gravity") / (2.0 * l);
        sys.damping_coef = 3.0 * sys.params.at("beta") / (m * l * l);
        sys.input_coef = 3.0 / (m * l * l);
    }
    sys.validate();
    return sys;
}

ControlAffine eval_f_g(const SystemSpec& sys, const State& x) {
    if (x.size() != sys.state_dim) throw std::invalid_argument("state dimension mismatch");
    ControlAffine out{Vec::Zero(sys.state_dim), Mat::Zero(sys.state_dim, sys.input_dim)};
    switch (sys.kind) {
        case SystemKind::Pendulum:
            out.f(0) = x(1);
            out.f(1) = sys.gravity_coef * std::sin(x(0)) - sys.damping_coef * x(1);
            out.g(1, 0) = sys.input_coef;
            break;
        case SystemKind::Robot2d:
            out.f(0) = x(2);
            out.f(1) = x(3);
            out.g(2, 0) = 1.0;
            out.g(3, 1) = 1.0;
            break;
    }
    return out;
}

State state_derivative(const SystemSpec& sys, const State& x, const Input& u) {
    if (u.size() != sys.input_dim) throw std::invalid_argument("input dimension mismatch");
    switch (sys.kind) {
        case SystemKind::Pendulum: {
            State d(2);
            d(0) = x(1);
            d(1) = sys.gravity_coef * std::sin(x(0)) - sys.damping_coef * x(1) + sys.input_coef * u(0);
            return d;
        }
        case SystemKind::Robot2d: {
            State d(4);
            d << x(2), x(3), u(0), u(1);
            return d;
        }
    }
    throw std::logic_error("unreachable");
}

double rho(const SystemSpec& sys, const State& x) { return sys.admissible.signed_distance(x); }

bool is_admissible(const SystemSpec& sys, const State& x) { return sys.admissible.contains(x); }

std::vector<Input> input_vertices(const SystemSpec& sys) {
    const int m = sys.input_dim;
    std::vector<Input> out;
    out.reserve(std::size_t{1} << m);
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
        Input u(m);
        for (int d = 0; d < m; ++d) {
            const bool high = (mask >> (m - 1 - d)) & 1u;
            u(d) = high ? sys.input_box.hi(d) : sys.input_box.lo(d);
        }
        out.push_back(std::move(u));
    }
    return out;
}

Interval sin_range(double lo, double hi) {
    if (hi - lo >= 2.0 * kPi) return {-1.0, 1.0};
    const double a = std::sin(lo), b = std::sin(hi);
    Interval r{std::min(a, b), std::max(a, b)};
    const double peak = kPi / 2.0 + 2.0 * kPi * std::ceil((lo - kPi / 2.0) / (2.0 * kPi));
    if (peak <= hi) r.hi = 1.0;
    const double trough = -kPi / 2.0 + 2.0 * kPi * std::ceil((lo + kPi / 2.0) / (2.0 * kPi));
    if (trough <= hi) r.lo = -1.0;
    return r;
}

IntervalVector interval_image(const SystemSpec& sys, const HyperRect& box, const Input& u) {
    constexpr double tol = 1e-9;
    if (box.dim() != sys.state_dim) throw std::invalid_argument("box dimension mismatch");
    if (u.size() != sys.input_dim) throw std::invalid_argument("input dimension mismatch");
    const Vec lo = box.lower(), hi = box.upper();
    if ((lo.array() < sys.state_box.lo.array() - tol).any() || (hi.array() > sys.state_box.hi.array() + tol).any())
        throw DomainError("box leaves the state box");

    IntervalVector out(sys.state_dim);
    switch (sys.kind) {
        case SystemKind::Pendulum: {
            out.set(0, {lo(1), hi(1)});
            const Interval s = sin_range(lo(0), hi(0));
            const Interval rate{lo(1), hi(1)};
            out.set(1, s * sys.gravity_coef - rate * sys.damping_coef + Interval::point(sys.input_coef * u(0)));
            break;
        }
        case SystemKind::Robot2d:
            out.set(0, {lo(2), hi(2)});
            out.set(1, {lo(3), hi(3)});
            out.set(2, Interval::point(u(0)));
            out.set(3, Interval::point(u(1)));
            break;
    }
    return out;
}

}  // namespace ncbf
