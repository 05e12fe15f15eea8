#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ncbf/dynamics.hpp"
#include "ncbf/mlp.hpp"
#include "ncbf/verifier.hpp"

namespace ncbf {

struct TrainConfig {
    double gamma = 0.5;
    double lambda = 0.05;
    double lr = 1e-3;
    double lr_decay = 0.995;
    int k_epochs_per_verify = 20;
    double t_gap = 0.005;
    Vec eps_init;
    std::size_t n_fixed = 10'000;
    int n_max = 100;
    double dt_guide = 0.01;
    std::uint64_t seed = 0;

    std::vector<int> hidden{36};
    std::size_t batch_size = 32;  // 0 = full batch
    int warmup_epochs = 0;
    double momentum = 0.0;  // 0 = plain SGD

    double delta_num = 1e-9;
    std::size_t box_cap = 10'000'000;
    unsigned threads = 0;

    // Guide network (discounted safety Bellman regression).
    double guide_discount = 0.999;
    int guide_max_sweeps = 200;
    int guide_min_sweeps = 1;
    double guide_tol = 1e-3;
    int guide_epochs_per_sweep = 5;
    int guide_initial_epochs = 100;
    double guide_lr = 1e-2;
    std::size_t guide_batch_size = 32;  // 0 = full batch
    double guide_momentum = 0.0;

    void validate() const;
    VerifierConfig verifier_config() const;
    std::vector<int> layer_dims(int state_dim) const;
};

/// Training sample with its cached signed distance and the guided closed-loop
/// derivative f(x) + g(x) u*.
struct LossPoint {
    State x;
    double rho = 0.0;
    bool admissible = false;
    Vec xdot;
};

struct Dataset {
    std::vector<LossPoint> points;  // fixed samples first, counterexamples after
    std::size_t n_fixed = 0;

    std::size_t size() const { return points.size(); }
    std::size_t counterexample_count() const { return points.size() - n_fixed; }
};

/// Vertex maximizing guide(x + (f(x) + g(x) u) dt); ties go to the earlier vertex.
Input u_star_guided(const MlpParams& guide, const SystemSpec& sys, const State& x, double dt);

LossPoint make_loss_point(const MlpParams& guide, const SystemSpec& sys, const State& x, double dt);

/// n uniform samples over the state box.
std::vector<State> sample_uniform(const SystemSpec& sys, std::size_t n, std::uint64_t seed);

Dataset make_dataset(const SystemSpec& sys, const MlpParams& guide, std::size_t n_fixed, double dt, std::uint64_t seed);

/// Append counterexamples, skipping any within `min_sep` (infinity norm) of a
/// counterexample already present or added earlier in the same call. Returns the
/// number added.
std::size_t add_counterexamples(Dataset& data, const SystemSpec& sys, const MlpParams& guide,
                                std::span<const State> ces, double min_sep, double dt);

struct LossBreakdown {
    double total = 0.0;
    double admissible_term = 0.0;
    double inadmissible_term = 0.0;
    std::size_t n_admissible = 0;
    std::size_t n_inadmissible = 0;
};

/// Empirical loss
///   mean_adm |min{rho - h, grad h . xdot + gamma h - lambda}| + mean_inadm max{h + lambda, 0}
/// If `grad` is non-null it receives the subgradient (attaining branch, ties to the
/// first operand).
LossBreakdown cbvf_vi_loss(const MlpParams& net, std::span<const LossPoint> batch, double gamma, double lambda,
                           MlpParams* grad = nullptr);
LossBreakdown cbvf_vi_loss(const MlpParams& net, const MlpParams& guide, const SystemSpec& sys,
                           std::span<const State> batch, const TrainConfig& cfg, MlpParams* grad = nullptr);

/// One pass over the dataset in shuffled minibatches; the learning rate decays
/// once at the end. Returns the mean minibatch loss.
double train_epoch(TrainState& ts, const Dataset& data, const TrainConfig& cfg);

/// Guide value function by fitted value iteration on the discounted safety
/// backup V <- (1 - d) rho + d min{rho, max_u V(x + xdot dt)}.
MlpParams train_guide(const SystemSpec& sys, const TrainConfig& cfg);

/// Barrier network regressed onto rho (guide_lr, guide_batch_size and
/// guide_initial_epochs); a starting point above the barrier value function.
MlpParams fit_signed_distance(const SystemSpec& sys, const TrainConfig& cfg);

struct RoundRecord {
    int round = 0;
    int epochs = 0;  // cumulative
    double loss = 0.0;
    std::size_t ce_added = 0;
    std::size_t ce_total = 0;
    std::size_t violating_boxes = 0;
    double train_time_s = 0.0;
    double verify_time_s = 0.0;
    Outcome outcome = Outcome::Violations;
};

struct CegisResult {
    MlpParams net;
    MlpParams guide;
    VerifierReport report;
    std::vector<RoundRecord> history;
    int total_epochs = 0;
    bool out_of_time = false;  // stopped by CegisOptions::time_budget_s
};

struct CegisOptions {
    std::optional<MlpParams> initial_net;
    std::optional<MlpParams> guide;
    std::function<void(const RoundRecord&)> on_round;
    double time_budget_s = 0.0;  // wall-clock limit checked after each round, 0 = none
};

/// Train k epochs, verify, feed the violating box centers back as data; stop on
/// Verified or after n_max verification rounds.
CegisResult cegis(const SystemSpec& sys, const TrainConfig& cfg, const CegisOptions& opts = {});

/// round,epochs,loss,ce_added,verify_time_s,ce_total,violating_boxes,train_time_s,outcome
void write_history_csv(std::ostream& os, std::span<const RoundRecord> history, bool include_timing = true);

}  // namespace ncbf
