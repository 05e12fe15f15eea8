#include "ncbf/relax.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <utility>

namespace ncbf {

namespace {

constexpr double kSearchTol = 1e-10;
constexpr int kSearchIters = 100;

double dtanh(double z) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

LinearBound tangent_at(double d) {
    const double s = dtanh(d);
    return {s, std::tanh(d) - s * d};
}

LinearBound chord(double l, double u, double tl, double tu) {
    const double k = (tu - tl) / (u - l);
    return {k, tl - k * l};
}

// Signed gap at `z` of the tangent taken at `d`: tangent(z) - tanh(z).
double tangent_gap(double d, double z, double tz) {
    return std::tanh(d) + dtanh(d) * (z - d) - tz;
}

// Bisection on [a, b] for the tangent point whose line passes through (z, tanh z).
// `keep_nonneg` selects the bracket end whose tangent lies on or above the point
// (upper line) instead of on or below it (lower line). Returns false if [a, b]
// does not bracket a root.
bool search_tangent(double a, double b, double z, double tz, bool keep_nonneg, double& out) {
    double ga = tangent_gap(a, z, tz);
    double gb = tangent_gap(b, z, tz);
    if (!(std::isfinite(ga) && std::isfinite(gb)) || ga * gb > 0.0) return false;
    for (int it = 0; it < kSearchIters && b - a > kSearchTol; ++it) {
        const double m = 0.5 * (a + b);
        const double gm = tangent_gap(m, z, tz);
        if ((gm >= 0.0) == (ga >= 0.0)) {
            a = m;
            ga = gm;
        } else {
            b = m;
            gb = gm;
        }
    }
    if (keep_nonneg) out = ga >= 0.0 ? a : b;
    else out = ga <= 0.0 ? a : b;
    return true;
}

// Coefficients on the network input for rows of lambda * a_m + offset, and the
// resulting lower or upper bounds over the box. a_0 is the input, a_m (m >= 1) the
// output of hidden layer m.
Vec backward_bound(const MlpParams& net, const std::vector<std::vector<TanhRelaxation>>& relax, std::size_t m,
                   const Mat& lambda, const Vec& offset, const HyperRect& box, bool upper) {
    Mat A = lambda;
    Vec c = offset;
    for (std::size_t j = m; j >= 1; --j) {
        const auto& rel = relax[j - 1];
        for (Eigen::Index col = 0; col < A.cols(); ++col) {
            const TanhRelaxation& r = rel[static_cast<std::size_t>(col)];
            for (Eigen::Index row = 0; row < A.rows(); ++row) {
                const double a = A(row, col);
                const LinearBound& line = ((a >= 0.0) == upper) ? r.upper : r.lower;
                c(row) += a * line.intercept;
                A(row, col) = a * line.slope;
            }
        }
        const Layer& layer = net.layers[j - 1];
        c.noalias() += A * layer.bias;
        A = A * layer.weight;
    }
    const Vec spread = A.cwiseAbs() * box.radius;
    Vec out = c + A * box.center;
    if (upper) out += spread;
    else out -= spread;
    return out;
}

// Interval propagation of W * tanh([lo, hi]) + b.
IntervalVector affine_of_tanh(const Layer& layer, const IntervalVector& pre) {
    const Vec alo = pre.lo.array().tanh();
    const Vec ahi = pre.hi.array().tanh();
    const Vec mid = 0.5 * (alo + ahi);
    const Vec rad = 0.5 * (ahi - alo);
    const Vec c = layer.weight * mid + layer.bias;
    const Vec r = layer.weight.cwiseAbs() * rad;
    return {c - r, c + r};
}

std::vector<TanhRelaxation> relax_layer(const IntervalVector& pre) {
    std::vector<TanhRelaxation> out;
    out.reserve(static_cast<std::size_t>(pre.size()));
    for (Eigen::Index i = 0; i < pre.size(); ++i) out.push_back(tanh_relax(pre.lo(i), pre.hi(i)));
    return out;
}

void check_box(const MlpParams& net, const HyperRect& box) {
    if (net.layers.empty()) throw std::invalid_argument("network has no layers");
    if (box.dim() != net.input_dim()) throw std::invalid_argument("box dimension mismatch");
}

}  // namespace

TanhRelaxation tanh_relax(double l, double u) {
    if (!(l <= u)) throw std::invalid_argument("tanh_relax: lower end exceeds upper end");
    const double tl = std::tanh(l), tu = std::tanh(u);
    if (l == u) {
        const LinearBound t = tangent_at(l);
        return {t, t};
    }
    if (u <= 0.0) return {tangent_at(0.5 * (l + u)), chord(l, u, tl, tu)};
    if (l >= 0.0) return {chord(l, u, tl, tu), tangent_at(0.5 * (l + u))};

    const LinearBound fallback_lower{0.0, tl};
    const LinearBound fallback_upper{0.0, tu};
    const double k = (tu - tl) / (u - l);
    TanhRelaxation r;

    if (k <= dtanh(u)) {
        r.upper = chord(l, u, tl, tu);
    } else {
        double d = 0.0;
        r.upper = search_tangent(0.0, u, l, tl, true, d) ? tangent_at(d) : fallback_upper;
    }
    if (k <= dtanh(l)) {
        r.lower = chord(l, u, tl, tu);
    } else {
        double d = 0.0;
        r.lower = search_tangent(l, 0.0, u, tu, false, d) ? tangent_at(d) : fallback_lower;
    }
    return r;
}

Interval tanh_derivative_range(double l, double u) {
    if (!(l <= u)) throw std::invalid_argument("tanh_derivative_range: lower end exceeds upper end");
    const double near = std::min(std::abs(l), std::abs(u));
    const double far = std::max(std::abs(l), std::abs(u));
    const double hi = (l <= 0.0 && u >= 0.0) ? 1.0 : dtanh(near);
    return {dtanh(far), hi};
}

NetworkBounds bound_network(const MlpParams& net, const HyperRect& box, bool with_gradient) {
    check_box(net, box);
    const std::size_t L = net.layers.size();
    NetworkBounds nb;
    nb.preactivation.reserve(L - 1);
    nb.relaxation.reserve(L - 1);

    for (std::size_t j = 1; j < L; ++j) {
        const Layer& layer = net.layers[j - 1];
        IntervalVector pre;
        if (j == 1) {
            const Vec c = layer.weight * box.center + layer.bias;
            const Vec r = layer.weight.cwiseAbs() * box.radius;
            pre = IntervalVector(c - r, c + r);
        } else {
            pre = affine_of_tanh(layer, nb.preactivation.back());
            const Vec lo = backward_bound(net, nb.relaxation, j - 1, layer.weight, layer.bias, box, false);
            const Vec hi = backward_bound(net, nb.relaxation, j - 1, layer.weight, layer.bias, box, true);
            pre.lo = pre.lo.cwiseMax(lo);
            pre.hi = pre.hi.cwiseMin(hi);
            // on (near) point boxes the two bounds can cross by a rounding error
            for (Eigen::Index i = 0; i < pre.size(); ++i)
                if (pre.lo(i) > pre.hi(i)) std::swap(pre.lo(i), pre.hi(i));
        }
        nb.relaxation.push_back(relax_layer(pre));
        nb.preactivation.push_back(std::move(pre));
    }

    const Layer& out = net.layers.back();
    if (L == 1) {
        const double c = (out.weight * box.center + out.bias)(0);
        const double r = (out.weight.cwiseAbs() * box.radius)(0);
        nb.value = {c - r, c + r};
    } else {
        const IntervalVector ibp = affine_of_tanh(out, nb.preactivation.back());
        const double lo = backward_bound(net, nb.relaxation, L - 1, out.weight, out.bias, box, false)(0);
        const double hi = backward_bound(net, nb.relaxation, L - 1, out.weight, out.bias, box, true)(0);
        nb.value = {std::max(lo, ibp.lo(0)), std::min(hi, ibp.hi(0))};
        if (nb.value.lo > nb.value.hi) std::swap(nb.value.lo, nb.value.hi);
    }

    if (with_gradient) {
        Eigen::RowVectorXd glo = out.weight;
        Eigen::RowVectorXd ghi = out.weight;
        for (std::size_t j = L - 1; j >= 1; --j) {
            const IntervalVector& pre = nb.preactivation[j - 1];
            for (Eigen::Index i = 0; i < glo.size(); ++i) {
                const Interval d = tanh_derivative_range(pre.lo(i), pre.hi(i));
                const Interval p = Interval{glo(i), ghi(i)} * d;
                glo(i) = p.lo;
                ghi(i) = p.hi;
            }
            const Mat& w = net.layers[j - 1].weight;
            const Mat wp = w.cwiseMax(0.0);
            const Mat wn = w.cwiseMin(0.0);
            Eigen::RowVectorXd nlo = glo * wp + ghi * wn;
            Eigen::RowVectorXd nhi = ghi * wp + glo * wn;
            glo = std::move(nlo);
            ghi = std::move(nhi);
        }
        nb.gradient = IntervalVector(glo.transpose(), ghi.transpose());
    }
    return nb;
}

std::vector<IntervalVector> preactivation_intervals(const MlpParams& net, const HyperRect& box) {
    return bound_network(net, box, false).preactivation;
}

Interval crown_bounds(const MlpParams& net, const HyperRect& box) { return bound_network(net, box, false).value; }

IntervalVector jacobian_interval(const MlpParams& net, const HyperRect& box) {
    return bound_network(net, box, true).gradient;
}

double q_lower(const Interval& h, const IntervalVector& J, const IntervalVector& xdot, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("q_lower: gamma must be positive");
    if (J.size() != xdot.size()) throw std::invalid_argument("q_lower: dimension mismatch");
    double sum = 0.0;
    for (Eigen::Index d = 0; d < J.size(); ++d) {
        const double a = J.lo(d) * xdot.lo(d), b = J.lo(d) * xdot.hi(d);
        const double c = J.hi(d) * xdot.lo(d), e = J.hi(d) * xdot.hi(d);
        sum += std::min(std::min(a, b), std::min(c, e));
    }
    return sum + gamma * h.lo;
}

void dump_layer_intervals(std::ostream& os, const NetworkBounds& bounds) {
    for (std::size_t k = 0; k < bounds.preactivation.size(); ++k) {
        const auto& pre = bounds.preactivation[k];
        for (Eigen::Index j = 0; j < pre.size(); ++j)
            os << "layer " << k + 1 << " neuron " << j << ' ' << pre.lo(j) << ' ' << pre.hi(j) << '\n';
    }
    os << "output " << bounds.value.lo << ' ' << bounds.value.hi << '\n';
    if (bounds.gradient.size() > 0)
        for (Eigen::Index d = 0; d < bounds.gradient.size(); ++d)
            os << "gradient " << d << ' ' << bounds.gradient.lo(d) << ' ' << bounds.gradient.hi(d) << '\n';
}

}  // namespace ncbf
