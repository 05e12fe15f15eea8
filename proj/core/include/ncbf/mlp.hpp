#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ncbf/interval.hpp"

namespace ncbf {

struct Layer {
    Mat weight;  // out x in
    Vec bias;    // out
};

/// Fully-connected network: tanh on every hidden layer, identity on the scalar
/// output layer.
struct MlpParams {
    std::vector<Layer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
    int hidden_layers() const { return static_cast<int>(layers.size()) - 1; }
    /// {in, hidden..., 1}
    std::vector<int> dims() const;
    std::size_t parameter_count() const;
    /// Throws std::invalid_argument if dimensions do not chain, the output is not
    /// scalar, or an entry is non-finite.
    void validate() const;
    /// Same shape, all zeros.
    MlpParams zeros_like() const;

    MlpParams& operator+=(const MlpParams& o);
    MlpParams& operator*=(double s);
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
MlpParams make_mlp(std::span<const int> dims, std::uint64_t seed);

double forward(const MlpParams& net, const State& x);
/// Exact input gradient W_L D_{L-1} W_{L-1} ... D_1 W_1.
Vec jacobian(const MlpParams& net, const State& x);

struct ValueAndDirectional {
    double value;        // h(x)
    double directional;  // grad h(x) . v
};
ValueAndDirectional forward_directional(const MlpParams& net, const State& x, const Vec& v);

/// One contribution to a scalar batch objective:
///   value_weight * h(x) + directional_weight * (grad h(x) . direction)
struct GradTerm {
    State x;
    Vec direction;
    double value_weight = 0.0;
    double directional_weight = 0.0;
};

/// Forward pass with tangent propagation, kept for a following reverse sweep.
class ForwardTrace {
public:
    ForwardTrace() = default;
    void run(const MlpParams& net, const State& x, const Vec& direction);

    double value() const { return value_; }
    double directional() const { return directional_; }

    /// grad += d/dparams [value_weight * h + directional_weight * (grad h . v)]
    void accumulate(const MlpParams& net, double value_weight, double directional_weight, MlpParams& grad);

private:
    std::vector<Vec> act_;      // a_0 = x, a_k = tanh(z_k)
    std::vector<Vec> tangent_;  // da_k along v
    std::vector<Vec> slope_;    // 1 - a_k^2 for hidden layers
    std::vector<Vec> pretangent_;
    double value_ = 0.0;
    double directional_ = 0.0;
    Vec gz_, gzt_, ga_, gat_;
};

/// Reverse-accumulated gradient of sum_i terms[i] with respect to the parameters.
MlpParams param_grad(const MlpParams& net, std::span<const GradTerm> terms);

struct TrainState {
    MlpParams params;
    double learning_rate = 1e-3;
    double decay = 0.995;
    int epoch = 0;
    std::uint64_t rng_seed = 0;
    double momentum = 0.0;  // heavy-ball coefficient, 0 = plain SGD
    MlpParams velocity;     // allocated on the first step with momentum

    void validate() const;
};

/// params <- params - learning_rate * grad, or with momentum
/// v <- momentum v + grad; params <- params - learning_rate * v
void sgd_step(TrainState& ts, const MlpParams& grad);
/// learning_rate <- learning_rate * decay; epoch += 1. Call once per epoch.
void end_epoch(TrainState& ts);

// Checkpoints: a versioned text container ("ncbf-mlp 1"), one line per tensor,
// values in row-major order printed with 17 significant digits.
void write_checkpoint(std::ostream& os, const MlpParams& net);
MlpParams read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const MlpParams& net);
MlpParams load_checkpoint(const std::string& path);
/// Bare tensors, one per line ("name rows cols v..."), for other tools.
void export_tensors(std::ostream& os, const MlpParams& net);

}  // namespace ncbf
