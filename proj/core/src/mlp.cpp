#include "ncbf/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ncbf {

std::vector<int> MlpParams::dims() const {
    std::vector<int> d;
    if (layers.empty()) return d;
    d.push_back(input_dim());
    for (const auto& l : layers) d.push_back(static_cast<int>(l.weight.rows()));
    return d;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void MlpParams::validate() const {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.weight.rows() != l.bias.size()) throw std::invalid_argument("bias size does not match weight rows");
        if (k > 0 && l.weight.cols() != layers[k - 1].weight.rows())
            throw std::invalid_argument("layer dimensions do not chain");
        if (!l.weight.allFinite() || !l.bias.allFinite()) throw std::invalid_argument("non-finite network parameter");
    }
    if (layers.back().weight.rows() != 1) throw std::invalid_argument("network output must be scalar");
}

MlpParams MlpParams::zeros_like() const {
    MlpParams z;
    z.layers.reserve(layers.size());
    for (const auto& l : layers)
        z.layers.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
    return z;
}

MlpParams& MlpParams::operator+=(const MlpParams& o) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
        layers[k].weight += o.layers[k].weight;
        layers[k].bias += o.layers[k].bias;
    }
    return *this;
}

MlpParams& MlpParams::operator*=(double s) {
    for (auto& l : layers) {
        l.weight *= s;
        l.bias *= s;
    }
    return *this;
}

MlpParams make_mlp(std::span<const int> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("need at least input and output dims");
    if (dims.back() != 1) throw std::invalid_argument("network output must be scalar");
    std::mt19937_64 rng(seed);
    MlpParams net;
    for (std::size_t k = 1; k < dims.size(); ++k) {
        if (dims[k] <= 0 || dims[k - 1] <= 0) throw std::invalid_argument("layer sizes must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[k - 1]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Layer l{Mat(dims[k], dims[k - 1]), Vec(dims[k])};
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = dist(rng);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = dist(rng);
        net.layers.push_back(std::move(l));
    }
    return net;
}

namespace {

void check_input(const MlpParams& net, const State& x) {
    if (net.layers.empty()) throw std::invalid_argument("network has no layers");
    if (x.size() != net.input_dim()) throw std::invalid_argument("input dimension mismatch");
}

}  // namespace

double forward(const MlpParams& net, const State& x) {
    check_input(net, x);
    Vec a = x;
    const std::size_t L = net.layers.size();
    for (std::size_t k = 0; k + 1 < L; ++k) a = (net.layers[k].weight * a + net.layers[k].bias).array().tanh();
    return (net.layers.back().weight * a + net.layers.back().bias)(0);
}

Vec jacobian(const MlpParams& net, const State& x) {
    check_input(net, x);
    const std::size_t L = net.layers.size();
    std::vector<Vec> slope;
    slope.reserve(L);
    Vec a = x;
    for (std::size_t k = 0; k + 1 < L; ++k) {
        a = (net.layers[k].weight * a + net.layers[k].bias).array().tanh();
        slope.push_back(1.0 - a.array().square());
    }
    Eigen::RowVectorXd g = net.layers.back().weight;
    for (std::size_t k = L - 1; k-- > 0;) g = g.cwiseProduct(slope[k].transpose()) * net.layers[k].weight;
    return g.transpose();
}

ValueAndDirectional forward_directional(const MlpParams& net, const State& x, const Vec& v) {
    check_input(net, x);
    if (v.size() != x.size()) throw std::invalid_argument("direction dimension mismatch");
    Vec a = x, t = v;
    const std::size_t L = net.layers.size();
    for (std::size_t k = 0; k + 1 < L; ++k) {
        a = (net.layers[k].weight * a + net.layers[k].bias).array().tanh();
        t = (1.0 - a.array().square()) * (net.layers[k].weight * t).array();
    }
    const auto& out = net.layers.back();
    return {(out.weight * a + out.bias)(0), (out.weight * t)(0)};
}

void ForwardTrace::run(const MlpParams& net, const State& x, const Vec& direction) {
    check_input(net, x);
    if (direction.size() != x.size()) throw std::invalid_argument("direction dimension mismatch");
    const std::size_t L = net.layers.size();
    act_.resize(L);
    tangent_.resize(L);
    slope_.resize(L);
    pretangent_.resize(L);
    act_[0] = x;
    tangent_[0] = direction;
    for (std::size_t k = 0; k + 1 < L; ++k) {
        const auto& layer = net.layers[k];
        act_[k + 1] = (layer.weight * act_[k] + layer.bias).array().tanh();
        slope_[k + 1] = 1.0 - act_[k + 1].array().square();
        pretangent_[k + 1].noalias() = layer.weight * tangent_[k];
        tangent_[k + 1] = slope_[k + 1].cwiseProduct(pretangent_[k + 1]);
    }
    const auto& out = net.layers.back();
    value_ = (out.weight * act_[L - 1] + out.bias)(0);
    directional_ = (out.weight * tangent_[L - 1])(0);
}

void ForwardTrace::accumulate(const MlpParams& net, double value_weight, double directional_weight,
                              MlpParams& grad) {
    const std::size_t L = net.layers.size();
    gz_.setConstant(1, value_weight);
    gzt_.setConstant(1, directional_weight);
    for (std::size_t k = L; k-- > 0;) {
        auto& g = grad.layers[k];
        g.weight.noalias() += gz_ * act_[k].transpose();
        g.weight.noalias() += gzt_ * tangent_[k].transpose();
        g.bias += gz_;
        if (k == 0) break;

        const Mat& w = net.layers[k].weight;
        ga_.noalias() = w.transpose() * gz_;
        gat_.noalias() = w.transpose() * gzt_;
        // Hidden layer k: a = tanh(z), s = 1 - a^2, t = s * zt.
        const Vec& a = act_[k];
        const Vec& s = slope_[k];
        gzt_ = s.cwiseProduct(gat_);
        ga_.array() -= 2.0 * gat_.array() * pretangent_[k].array() * a.array();
        gz_ = ga_.cwiseProduct(s);
    }
}

MlpParams param_grad(const MlpParams& net, std::span<const GradTerm> terms) {
    MlpParams grad = net.zeros_like();
    ForwardTrace trace;
    for (const auto& term : terms) {
        const Vec dir = term.direction.size() == 0 ? Vec::Zero(term.x.size()) : term.direction;
        trace.run(net, term.x, dir);
        trace.accumulate(net, term.value_weight, term.directional_weight, grad);
    }
    return grad;
}

void TrainState::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("decay must lie in (0, 1]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
}

void sgd_step(TrainState& ts, const MlpParams& grad) {
    if (grad.layers.size() != ts.params.layers.size()) throw std::invalid_argument("gradient shape mismatch");
    for (std::size_t k = 0; k < grad.layers.size(); ++k) {
        auto& p = ts.params.layers[k];
        const auto& g = grad.layers[k];
        if (p.weight.rows() != g.weight.rows() || p.weight.cols() != g.weight.cols() || p.bias.size() != g.bias.size())
            throw std::invalid_argument("gradient shape mismatch");
    }
    if (ts.momentum > 0.0) {
        if (ts.velocity.layers.size() != grad.layers.size()) ts.velocity = grad.zeros_like();
        ts.velocity *= ts.momentum;
        ts.velocity += grad;
    }
    const MlpParams& step = ts.momentum > 0.0 ? ts.velocity : grad;
    for (std::size_t k = 0; k < step.layers.size(); ++k) {
        auto& p = ts.params.layers[k];
        p.weight.noalias() -= ts.learning_rate * step.layers[k].weight;
        p.bias.noalias() -= ts.learning_rate * step.layers[k].bias;
    }
}

void end_epoch(TrainState& ts) {
    ts.learning_rate *= ts.decay;
    ++ts.epoch;
}

}  // namespace ncbf
