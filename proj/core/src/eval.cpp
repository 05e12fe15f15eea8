#include "ncbf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "ncbf/detail/parallel.hpp"

namespace ncbf {

GridField::GridField(std::vector<std::size_t> counts, Vec lo, Vec hi)
    : counts_(std::move(counts)), lo_(std::move(lo)), hi_(std::move(hi)) {
    if (counts_.empty() || static_cast<Eigen::Index>(counts_.size()) != lo_.size() || lo_.size() != hi_.size())
        throw std::invalid_argument("GridField: inconsistent dimensions");
    std::size_t total = 1;
    for (std::size_t d = 0; d < counts_.size(); ++d) {
        if (counts_[d] < 2) throw std::invalid_argument("GridField: need at least 2 samples per axis");
        if (!(hi_(static_cast<Eigen::Index>(d)) > lo_(static_cast<Eigen::Index>(d))))
            throw std::invalid_argument("GridField: empty axis");
        total *= counts_[d];
    }
    values_.assign(total, 0.0);
}

double GridField::spacing(std::size_t d) const {
    const auto i = static_cast<Eigen::Index>(d);
    return (hi_(i) - lo_(i)) / static_cast<double>(counts_[d] - 1);
}

std::size_t GridField::flat_index(const std::vector<std::size_t>& idx) const {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < counts_.size(); ++d) flat = flat * counts_[d] + idx[d];
    return flat;
}

std::vector<std::size_t> GridField::multi_index(std::size_t flat) const {
    std::vector<std::size_t> idx(counts_.size());
    for (std::size_t d = counts_.size(); d-- > 0;) {
        idx[d] = flat % counts_[d];
        flat /= counts_[d];
    }
    return idx;
}

Vec GridField::point(std::size_t flat) const {
    const auto idx = multi_index(flat);
    Vec x(static_cast<Eigen::Index>(dim()));
    for (std::size_t d = 0; d < dim(); ++d)
        x(static_cast<Eigen::Index>(d)) = lo_(static_cast<Eigen::Index>(d)) + spacing(d) * static_cast<double>(idx[d]);
    return x;
}

double GridField::interpolate(const Vec& x) const {
    const std::size_t n = dim();
    std::vector<std::size_t> base(n);
    std::vector<double> frac(n);
    for (std::size_t d = 0; d < n; ++d) {
        const double s = (x(static_cast<Eigen::Index>(d)) - lo_(static_cast<Eigen::Index>(d))) / spacing(d);
        const double c = std::clamp(s, 0.0, static_cast<double>(counts_[d] - 1));
        std::size_t b = static_cast<std::size_t>(std::floor(c));
        if (b >= counts_[d] - 1) b = counts_[d] - 2;
        base[d] = b;
        frac[d] = c - static_cast<double>(b);
    }
    double out = 0.0;
    std::vector<std::size_t> idx(n);
    for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
        double w = 1.0;
        for (std::size_t d = 0; d < n; ++d) {
            const bool up = (corner >> d) & 1u;
            idx[d] = base[d] + (up ? 1 : 0);
            w *= up ? frac[d] : 1.0 - frac[d];
        }
        if (w != 0.0) out += w * values_[flat_index(idx)];
    }
    return out;
}

void GridField::write_csv(std::ostream& os) const {
    for (std::size_t d = 0; d < dim(); ++d) os << 'x' << d << ',';
    os << "value\n";
    const auto prec = os.precision(17);
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const Vec x = point(i);
        for (Eigen::Index d = 0; d < x.size(); ++d) os << x(d) << ',';
        os << values_[i] << '\n';
    }
    os.precision(prec);
}

std::string ViolationStats::percent() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", 100.0 * ratio);
    return buf;
}

ViolationStats violation_ratio(const MlpParams& net, const SystemSpec& sys, std::size_t resolution, double gamma,
                               unsigned threads) {
    if (resolution < 2) throw std::invalid_argument("resolution must be at least 2");
    if (net.input_dim() != sys.state_dim) throw std::invalid_argument("network does not match the system");
    GridField grid(std::vector<std::size_t>(static_cast<std::size_t>(sys.state_dim), resolution), sys.state_box.lo,
                   sys.state_box.hi);
    const auto vertices = input_vertices(sys);
    // 0 = not admissible and h < 0, 1 = admissible ok, 2 = admissible violation, 3 = inadmissible h >= 0
    std::vector<unsigned char> tag(grid.size());
    detail::parallel_for(grid.size(), threads, [&](std::size_t i) {
        const State x = grid.point(i);
        if (!is_admissible(sys, x)) {
            tag[i] = forward(net, x) >= 0.0 ? 3 : 0;
            return;
        }
        const Vec grad = jacobian(net, x);
        const double h = forward(net, x);
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& u : vertices) best = std::max(best, grad.dot(state_derivative(sys, x, u)));
        tag[i] = best + gamma * h < 0.0 ? 2 : 1;
    });
    ViolationStats s;
    s.total_points = grid.size();
    for (unsigned char t : tag) {
        if (t == 1 || t == 2) ++s.admissible_points;
        if (t == 2) ++s.violating_points;
        if (t == 3) ++s.inadmissible_positive;
    }
    s.ratio = static_cast<double>(s.violating_points) / static_cast<double>(s.total_points);
    return s;
}

namespace {

// Cell centres of a resolution x resolution grid over the first two coordinates.
struct CellGrid {
    double x0, y0, dx, dy;
    std::size_t n;
    Vec base;

    CellGrid(const SystemSpec& sys, std::size_t resolution, const Vec& slice) : n(resolution) {
        if (resolution < 2) throw std::invalid_argument("resolution must be at least 2");
        if (sys.state_dim < 2) throw std::invalid_argument("need at least two state coordinates");
        x0 = sys.state_box.lo(0);
        y0 = sys.state_box.lo(1);
        dx = (sys.state_box.hi(0) - x0) / static_cast<double>(n);
        dy = (sys.state_box.hi(1) - y0) / static_cast<double>(n);
        base = Vec::Zero(sys.state_dim);
        if (slice.size() > 0) {
            if (slice.size() != sys.state_dim - 2) throw std::invalid_argument("slice must fix the remaining coordinates");
            base.tail(sys.state_dim - 2) = slice;
        }
    }
    State centre(std::size_t i, std::size_t j) const {
        State x = base;
        x(0) = x0 + (static_cast<double>(i) + 0.5) * dx;
        x(1) = y0 + (static_cast<double>(j) + 0.5) * dy;
        return x;
    }
    double cell_area() const { return dx * dy; }
};

}  // namespace

SuperlevelGeometry superlevel_geometry(const MlpParams& net, const SystemSpec& sys, std::size_t resolution,
                                       const Vec& slice, unsigned threads) {
    if (net.input_dim() != sys.state_dim) throw std::invalid_argument("network does not match the system");
    const CellGrid cells(sys, resolution, slice);
    const std::size_t n = resolution;
    Vec lo(2), hi(2);
    lo << cells.x0 + 0.5 * cells.dx, cells.y0 + 0.5 * cells.dy;
    hi << cells.x0 + (static_cast<double>(n) - 0.5) * cells.dx, cells.y0 + (static_cast<double>(n) - 0.5) * cells.dy;

    SuperlevelGeometry g;
    g.field = GridField({n, n}, lo, hi);
    std::vector<unsigned char> admissible(n * n);
    detail::parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) {
            const State x = cells.centre(i, j);
            g.field[i * n + j] = forward(net, x);
            admissible[i * n + j] = is_admissible(sys, x) ? 1 : 0;
        }
    });

    std::size_t inside = 0, adm = 0;
    for (std::size_t k = 0; k < n * n; ++k) {
        if (!admissible[k]) continue;
        ++adm;
        if (g.field[k] >= 0.0) ++inside;
    }
    g.area = static_cast<double>(inside) * cells.cell_area();
    g.admissible_area = static_cast<double>(adm) * cells.cell_area();

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const bool here = g.field[i * n + j] >= 0.0;
            if (i + 1 < n && (g.field[(i + 1) * n + j] >= 0.0) != here) {
                State x = cells.centre(i, j);
                x(0) += 0.5 * cells.dx;
                g.boundary.push_back(x);
            }
            if (j + 1 < n && (g.field[i * n + j + 1] >= 0.0) != here) {
                State x = cells.centre(i, j);
                x(1) += 0.5 * cells.dy;
                g.boundary.push_back(x);
            }
        }
    return g;
}

double excess_area(const MlpParams& net, const SystemSpec& sys, const GridField& oracle, std::size_t resolution) {
    if (sys.state_dim != 2 || oracle.dim() != 2) throw std::invalid_argument("excess_area needs a 2-D system");
    const CellGrid cells(sys, resolution, Vec());
    std::size_t count = 0;
    for (std::size_t i = 0; i < resolution; ++i)
        for (std::size_t j = 0; j < resolution; ++j) {
            const State x = cells.centre(i, j);
            if (is_admissible(sys, x) && forward(net, x) >= 0.0 && oracle.interpolate(x) < 0.0) ++count;
        }
    return static_cast<double>(count) * cells.cell_area();
}

double field_safe_area(const GridField& field, const SystemSpec& sys, std::size_t resolution) {
    if (sys.state_dim != 2 || field.dim() != 2) throw std::invalid_argument("field_safe_area needs a 2-D system");
    const CellGrid cells(sys, resolution, Vec());
    std::size_t count = 0;
    for (std::size_t i = 0; i < resolution; ++i)
        for (std::size_t j = 0; j < resolution; ++j) {
            const State x = cells.centre(i, j);
            if (is_admissible(sys, x) && field.interpolate(x) >= 0.0) ++count;
        }
    return static_cast<double>(count) * cells.cell_area();
}

OracleResult hj_oracle(const SystemSpec& sys, double grid_gap, double gamma, const OracleOptions& opts) {
    if (sys.state_dim != 2) throw std::invalid_argument("hj_oracle supports two-dimensional systems only");
    if (!(grid_gap > 0.0)) throw std::invalid_argument("grid_gap must be positive");

    std::vector<std::size_t> counts(2);
    for (int d = 0; d < 2; ++d) {
        const double len = sys.state_box.hi(d) - sys.state_box.lo(d);
        counts[static_cast<std::size_t>(d)] = static_cast<std::size_t>(std::llround(len / grid_gap)) + 1;
        counts[static_cast<std::size_t>(d)] = std::max<std::size_t>(counts[static_cast<std::size_t>(d)], 2);
    }
    OracleResult out;
    out.value = GridField(counts, sys.state_box.lo, sys.state_box.hi);
    GridField& V = out.value;
    const std::size_t n0 = counts[0], n1 = counts[1], N = V.size();
    const double h0 = V.spacing(0), h1 = V.spacing(1);

    const auto vertices = input_vertices(sys);
    const std::size_t nv = vertices.size();
    std::vector<double> rho_at(N);
    std::vector<Eigen::Vector2d> xdot(N * nv);
    double max_speed = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        const State x = V.point(k);
        rho_at[k] = rho(sys, x);
        for (std::size_t v = 0; v < nv; ++v) {
            const State xd = state_derivative(sys, x, vertices[v]);
            xdot[k * nv + v] = Eigen::Vector2d(xd(0), xd(1));
            max_speed = std::max(max_speed, xd.norm());
        }
        V[k] = rho_at[k];
    }
    out.dtau = max_speed > 0.0 ? 0.5 * grid_gap / max_speed : 0.5 * grid_gap;

    // Neighbour value, with cells past the grid edge taken as min(V, rho there).
    auto ghost = [&](std::size_t k, int axis, int dir) {
        State x = V.point(k);
        x(axis) += dir * (axis == 0 ? h0 : h1);
        return std::min(V[k], rho(sys, x));
    };

    for (out.sweeps = 1; out.sweeps <= opts.max_sweeps; ++out.sweeps) {
        double max_update = 0.0;
        for (std::size_t i = 0; i < n0; ++i)
            for (std::size_t j = 0; j < n1; ++j) {
                const std::size_t k = i * n1 + j;
                const double v = V[k];
                const double fwd0 = i + 1 < n0 ? V[k + n1] : ghost(k, 0, 1);
                const double bwd0 = i > 0 ? V[k - n1] : ghost(k, 0, -1);
                const double fwd1 = j + 1 < n1 ? V[k + 1] : ghost(k, 1, 1);
                const double bwd1 = j > 0 ? V[k - 1] : ghost(k, 1, -1);
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t u = 0; u < nv; ++u) {
                    const Eigen::Vector2d& xd = xdot[k * nv + u];
                    const double d0 = xd(0) > 0.0 ? (fwd0 - v) / h0 : (v - bwd0) / h0;
                    const double d1 = xd(1) > 0.0 ? (fwd1 - v) / h1 : (v - bwd1) / h1;
                    best = std::max(best, d0 * xd(0) + d1 * xd(1) + gamma * v);
                }
                const double next = std::min(rho_at[k], v + out.dtau * best);
                max_update = std::max(max_update, std::abs(next - v));
                V[k] = next;
            }
        out.last_update = max_update;
        if (max_update < opts.tolerance) break;
    }
    out.sweeps = std::min(out.sweeps, opts.max_sweeps);
    return out;
}

}  // namespace ncbf
