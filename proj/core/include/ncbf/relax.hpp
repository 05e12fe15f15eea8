#pragma once

#include <iosfwd>
#include <vector>

#include "ncbf/interval.hpp"
#include "ncbf/mlp.hpp"

namespace ncbf {

struct LinearBound {
    double slope = 0.0;
    double intercept = 0.0;
    double operator()(double z) const { return slope * z + intercept; }
};

/// Lines with lower(z) <= tanh(z) <= upper(z) for z in the pre-activation interval.
struct TanhRelaxation {
    LinearBound lower;
    LinearBound upper;
};

/// Sound linear relaxation of tanh on [l, u]. Chord on the side where the curve
/// bends away from it, tangent on the other; across zero the tangent is the one
/// through the far endpoint (found by bisection, tolerance 1e-10, <= 100 steps,
/// falling back to constant lines tanh(l), tanh(u) if the search fails).
TanhRelaxation tanh_relax(double l, double u);

/// Range of tanh'(z) = 1 - tanh(z)^2 over [l, u].
Interval tanh_derivative_range(double l, double u);

/// Everything the verifier needs from one box, computed in a single pass.
struct NetworkBounds {
    std::vector<IntervalVector> preactivation;           // one per hidden layer
    std::vector<std::vector<TanhRelaxation>> relaxation;  // matching preactivation
    Interval value;                                       // enclosure of h over the box
    IntervalVector gradient;                              // enclosure of grad h (if requested)
};

/// Pre-activation enclosures of every hidden layer: exact interval for the first
/// layer, later layers intersect interval propagation with a backward linear
/// bound through the relaxations of earlier layers.
std::vector<IntervalVector> preactivation_intervals(const MlpParams& net, const HyperRect& box);

/// CROWN-style enclosure of the network output over the box (never looser than
/// plain interval propagation).
Interval crown_bounds(const MlpParams& net, const HyperRect& box);

/// Enclosure of the input gradient over the box by interval products
/// W_L D_{L-1} ... D_1 W_1 with D_k the tanh' range of layer k.
IntervalVector jacobian_interval(const MlpParams& net, const HyperRect& box);

NetworkBounds bound_network(const MlpParams& net, const HyperRect& box, bool with_gradient = true);

/// Lower bound of <J, xdot> + gamma * h over independent boxes for h, J and xdot:
/// sum_d min(J_d x_d over the four corners) + gamma * h.lo. Requires gamma > 0.
double q_lower(const Interval& h, const IntervalVector& J, const IntervalVector& xdot, double gamma);

/// Text dump, one line per neuron: "layer <k> neuron <j> <lo> <hi>".
void dump_layer_intervals(std::ostream& os, const NetworkBounds& bounds);

}  // namespace ncbf
