#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ncbf/dynamics.hpp"
#include "ncbf/mlp.hpp"

namespace ncbf {

/// Values on a regular grid that includes both end points of every axis. Values
/// are stored row-major: the last axis varies fastest.
class GridField {
public:
    GridField() = default;
    GridField(std::vector<std::size_t> counts, Vec lo, Vec hi);

    std::size_t dim() const { return counts_.size(); }
    const std::vector<std::size_t>& counts() const { return counts_; }
    const Vec& lo() const { return lo_; }
    const Vec& hi() const { return hi_; }
    double spacing(std::size_t d) const;
    std::size_t size() const { return values_.size(); }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double& operator[](std::size_t flat) { return values_[flat]; }
    double operator[](std::size_t flat) const { return values_[flat]; }

    std::size_t flat_index(const std::vector<std::size_t>& idx) const;
    std::vector<std::size_t> multi_index(std::size_t flat) const;
    Vec point(std::size_t flat) const;
    /// Multilinear interpolation; points outside the grid are clamped onto it.
    double interpolate(const Vec& x) const;

    /// Header x0,...,x{n-1},value; one grid point per row in storage order.
    void write_csv(std::ostream& os) const;

private:
    std::vector<std::size_t> counts_;
    Vec lo_;
    Vec hi_;
    std::vector<double> values_;
};

struct ViolationStats {
    std::size_t total_points = 0;
    std::size_t admissible_points = 0;
    std::size_t violating_points = 0;     // admissible points with max_u q < 0
    std::size_t inadmissible_positive = 0;  // inadmissible points with h >= 0
    double ratio = 0.0;                   // violating_points / total_points

    /// ratio as a percentage with four decimals, e.g. "0.0000".
    std::string percent() const;
};

/// Check condition (3) at every node of a resolution^n grid over the state box.
ViolationStats violation_ratio(const MlpParams& net, const SystemSpec& sys, std::size_t resolution, double gamma,
                               unsigned threads = 0);

struct SuperlevelGeometry {
    double area = 0.0;             // cell-count area of {h >= 0} within X_a (on the slice for n > 2)
    double admissible_area = 0.0;  // cell-count area of X_a on the same cells
    std::vector<State> boundary;   // midpoints between neighbouring cells with different sign of h
    GridField field;               // h at the cell centres
};

/// Cell counting on a resolution x resolution grid over the first two state
/// coordinates; the remaining coordinates are fixed at `slice` (zeros if empty).
SuperlevelGeometry superlevel_geometry(const MlpParams& net, const SystemSpec& sys, std::size_t resolution,
                                       const Vec& slice = Vec(), unsigned threads = 0);

/// Area of {h >= 0} within X_a where the oracle field is negative, on the same cells
/// as superlevel_geometry (2-D systems only).
double excess_area(const MlpParams& net, const SystemSpec& sys, const GridField& oracle, std::size_t resolution);

/// Cell-count area of {V >= 0} within X_a for a 2-D field, interpolated at the
/// same cells as superlevel_geometry.
double field_safe_area(const GridField& field, const SystemSpec& sys, std::size_t resolution);

struct OracleOptions {
    double tolerance = 1e-6;
    int max_sweeps = 10'000;
};

struct OracleResult {
    GridField value;
    int sweeps = 0;
    double last_update = 0.0;
    double dtau = 0.0;
};

/// Discrete value iteration V <- min{rho, V + dtau * max_u [grad V . xdot + gamma V]}
/// with first-order upwind differences and row-major Gauss-Seidel sweeps. Throws
/// std::invalid_argument for systems that are not two-dimensional.
OracleResult hj_oracle(const SystemSpec& sys, double grid_gap, double gamma, const OracleOptions& opts = {});

}  // namespace ncbf
