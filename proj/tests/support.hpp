#pragma once

#include <random>
#include <vector>

#include "ncbf/dynamics.hpp"
#include "ncbf/mlp.hpp"

namespace ncbf::fixtures {

inline MlpParams random_net(std::mt19937_64& rng, int in, std::vector<int> hidden, double scale = 1.0) {
    std::vector<int> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    MlpParams net = make_mlp(dims, rng());
    if (scale != 1.0) net *= scale;
    return net;
}

inline Vec uniform_vec(std::mt19937_64& rng, const Vec& lo, const Vec& hi) {
    Vec v(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) v(i) = std::uniform_real_distribution<double>(lo(i), hi(i))(rng);
    return v;
}

// Random box inside the state box with radii up to max_radius.
inline HyperRect random_box(std::mt19937_64& rng, const SystemSpec& sys, double max_radius) {
    Vec r(sys.state_dim);
    for (int d = 0; d < sys.state_dim; ++d) r(d) = std::uniform_real_distribution<double>(0.0, max_radius)(rng);
    const Vec lo = sys.state_box.lo + r;
    const Vec hi = sys.state_box.hi - r;
    return HyperRect(uniform_vec(rng, lo, hi), r);
}

inline Vec sample_in(std::mt19937_64& rng, const HyperRect& box) {
    return uniform_vec(rng, box.lower(), box.upper());
}

// 1-1-1 network w2 * tanh(w1 x + b1) + b2.
inline MlpParams scalar_net(double w1, double b1, double w2, double b2) {
    MlpParams net;
    net.layers.push_back({Mat::Constant(1, 1, w1), Vec::Constant(1, b1)});
    net.layers.push_back({Mat::Constant(1, 1, w2), Vec::Constant(1, b2)});
    return net;
}

inline MlpParams constant_net(int in, int hidden, double c) {
    MlpParams net;
    net.layers.push_back({Mat::Zero(hidden, in), Vec::Zero(hidden)});
    net.layers.push_back({Mat::Zero(1, hidden), Vec::Constant(1, c)});
    return net;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace ncbf::fixtures
