#include "ncbf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace ncbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Loss and optional subgradient over data[indices].
LossBreakdown loss_over(const MlpParams& net, std::span<const LossPoint> data, std::span<const std::size_t> indices,
                        double gamma, double lambda, MlpParams* grad) {
    LossBreakdown out;
    for (std::size_t i : indices) (data[i].admissible ? out.n_admissible : out.n_inadmissible)++;
    const double w_adm = out.n_admissible ? 1.0 / static_cast<double>(out.n_admissible) : 0.0;
    const double w_inadm = out.n_inadmissible ? 1.0 / static_cast<double>(out.n_inadmissible) : 0.0;

    ForwardTrace trace;
    Vec zero;
    for (std::size_t i : indices) {
        const LossPoint& p = data[i];
        if (p.admissible) {
            trace.run(net, p.x, p.xdot);
            const double h = trace.value();
            const double a = p.rho - h;
            const double b = trace.directional() + gamma * h - lambda;
            const bool first = a <= b;
            const double m = first ? a : b;
            out.admissible_term += std::abs(m) * w_adm;
            if (grad && m != 0.0) {
                const double s = (m > 0.0 ? 1.0 : -1.0) * w_adm;
                if (first) trace.accumulate(net, -s, 0.0, *grad);
                else trace.accumulate(net, s * gamma, s, *grad);
            }
        } else {
            if (zero.size() != p.x.size()) zero = Vec::Zero(p.x.size());
            trace.run(net, p.x, zero);
            const double t = trace.value() + lambda;
            if (t >= 0.0) {
                out.inadmissible_term += t * w_inadm;
                if (grad) trace.accumulate(net, w_inadm, 0.0, *grad);
            }
        }
    }
    out.total = out.admissible_term + out.inadmissible_term;
    return out;
}

// Minibatch SGD on the mean of 0.5 (V(x) - target)^2.
void fit_regression(TrainState& ts, std::span<const State> xs, std::span<const double> targets, std::size_t batch,
                    int epochs, std::mt19937_64& rng) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (batch == 0 || batch > xs.size()) batch = xs.size();
    ForwardTrace trace;
    const Vec zero = Vec::Zero(ts.params.input_dim());
    MlpParams grad = ts.params.zeros_like();
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            grad *= 0.0;
            const double w = 1.0 / static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                trace.run(ts.params, xs[i], zero);
                trace.accumulate(ts.params, (trace.value() - targets[i]) * w, 0.0, grad);
            }
            sgd_step(ts, grad);
        }
    }
}

struct CellKeyHash {
    std::size_t operator()(const std::vector<long long>& k) const noexcept {
        std::size_t h = 1469598103934665603ull;
        for (long long v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
        return h;
    }
};

}  // namespace

void TrainConfig::validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must lie in (0, 1]");
    if (k_epochs_per_verify < 0) throw std::invalid_argument("k_epochs_per_verify must be non-negative");
    if (!(t_gap > 0.0)) throw std::invalid_argument("t_gap must be positive");
    if (n_max < 1) throw std::invalid_argument("n_max must be at least 1");
    if (n_fixed == 0) throw std::invalid_argument("n_fixed must be positive");
    if (!(dt_guide > 0.0)) throw std::invalid_argument("dt_guide must be positive");
    if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (!(guide_momentum >= 0.0 && guide_momentum < 1.0)) throw std::invalid_argument("guide_momentum must lie in [0, 1)");
    if (!(guide_discount >= 0.0 && guide_discount <= 1.0)) throw std::invalid_argument("guide_discount must lie in [0, 1]");
    for (int h : hidden)
        if (h <= 0) throw std::invalid_argument("hidden layer sizes must be positive");
}

VerifierConfig TrainConfig::verifier_config() const {
    VerifierConfig v;
    v.eps_init = eps_init;
    v.t_gap = t_gap;
    v.gamma = gamma;
    v.delta_num = delta_num;
    v.box_cap = box_cap;
    v.threads = threads;
    return v;
}

std::vector<int> TrainConfig::layer_dims(int state_dim) const {
    std::vector<int> dims{state_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    return dims;
}

Input u_star_guided(const MlpParams& guide, const SystemSpec& sys, const State& x, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const auto vertices = input_vertices(sys);
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const double v = forward(guide, x + state_derivative(sys, x, vertices[i]) * dt);
        if (v > best_value) {
            best_value = v;
            best = i;
        }
    }
    return vertices[best];
}

LossPoint make_loss_point(const MlpParams& guide, const SystemSpec& sys, const State& x, double dt) {
    LossPoint p;
    p.x = x;
    p.rho = rho(sys, x);
    p.admissible = p.rho >= 0.0;
    p.xdot = state_derivative(sys, x, u_star_guided(guide, sys, x, dt));
    return p;
}

std::vector<State> sample_uniform(const SystemSpec& sys, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> dists;
    for (int d = 0; d < sys.state_dim; ++d) dists.emplace_back(sys.state_box.lo(d), sys.state_box.hi(d));
    std::vector<State> out(n, State(sys.state_dim));
    for (auto& x : out)
        for (int d = 0; d < sys.state_dim; ++d) x(d) = dists[static_cast<std::size_t>(d)](rng);
    return out;
}

Dataset make_dataset(const SystemSpec& sys, const MlpParams& guide, std::size_t n_fixed, double dt, std::uint64_t seed) {
    Dataset data;
    for (const auto& x : sample_uniform(sys, n_fixed, seed)) data.points.push_back(make_loss_point(guide, sys, x, dt));
    data.n_fixed = data.points.size();
    return data;
}

std::size_t add_counterexamples(Dataset& data, const SystemSpec& sys, const MlpParams& guide,
                                std::span<const State> ces, double min_sep, double dt) {
    if (!(min_sep > 0.0)) throw std::invalid_argument("min_sep must be positive");
    std::unordered_map<std::vector<long long>, std::vector<std::size_t>, CellKeyHash> grid;
    auto key_of = [&](const State& x) {
        std::vector<long long> k(static_cast<std::size_t>(x.size()));
        for (Eigen::Index d = 0; d < x.size(); ++d) k[static_cast<std::size_t>(d)] = static_cast<long long>(std::floor(x(d) / min_sep));
        return k;
    };
    for (std::size_t i = data.n_fixed; i < data.points.size(); ++i) grid[key_of(data.points[i].x)].push_back(i);

    const int n = sys.state_dim;
    int neighbours = 1;
    for (int d = 0; d < n; ++d) neighbours *= 3;

    std::size_t added = 0;
    for (const auto& c : ces) {
        const auto key = key_of(c);
        bool duplicate = false;
        for (int code = 0; code < neighbours && !duplicate; ++code) {
            auto probe = key;
            int rem = code;
            for (int d = 0; d < n; ++d, rem /= 3) probe[static_cast<std::size_t>(d)] += rem % 3 - 1;
            auto it = grid.find(probe);
            if (it == grid.end()) continue;
            for (std::size_t j : it->second)
                if ((data.points[j].x - c).cwiseAbs().maxCoeff() <= min_sep) {
                    duplicate = true;
                    break;
                }
        }
        if (duplicate) continue;
        grid[key].push_back(data.points.size());
        data.points.push_back(make_loss_point(guide, sys, c, dt));
        ++added;
    }
    return added;
}

LossBreakdown cbvf_vi_loss(const MlpParams& net, std::span<const LossPoint> batch, double gamma, double lambda,
                           MlpParams* grad) {
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (grad) *grad = net.zeros_like();
    return loss_over(net, batch, idx, gamma, lambda, grad);
}

LossBreakdown cbvf_vi_loss(const MlpParams& net, const MlpParams& guide, const SystemSpec& sys,
                           std::span<const State> batch, const TrainConfig& cfg, MlpParams* grad) {
    std::vector<LossPoint> pts;
    pts.reserve(batch.size());
    for (const auto& x : batch) pts.push_back(make_loss_point(guide, sys, x, cfg.dt_guide));
    return cbvf_vi_loss(net, pts, cfg.gamma, cfg.lambda, grad);
}

double train_epoch(TrainState& ts, const Dataset& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw std::invalid_argument("empty dataset");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(ts.epoch) + 1);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size > order.size()) ? order.size() : cfg.batch_size;
    MlpParams grad = ts.params.zeros_like();
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        grad *= 0.0;
        const auto b = loss_over(ts.params, data.points, std::span(order).subspan(start, end - start), cfg.gamma,
                                 cfg.lambda, &grad);
        sgd_step(ts, grad);
        loss_sum += b.total;
        ++batches;
    }
    end_epoch(ts);
    return loss_sum / static_cast<double>(batches);
}

MlpParams train_guide(const SystemSpec& sys, const TrainConfig& cfg) {
    cfg.validate();
    const auto dims = cfg.layer_dims(sys.state_dim);
    TrainState gs{make_mlp(dims, cfg.seed + 7919), cfg.guide_lr, 1.0, 0, cfg.seed + 7919, cfg.guide_momentum, {}};
    const std::vector<State> xs = sample_uniform(sys, cfg.n_fixed, cfg.seed + 104729);
    std::vector<double> rhos(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) rhos[i] = rho(sys, xs[i]);

    std::mt19937_64 rng(cfg.seed + 15485863);
    std::vector<double> targets = rhos;
    fit_regression(gs, xs, targets, cfg.guide_batch_size, cfg.guide_initial_epochs, rng);

    const auto vertices = input_vertices(sys);
    const double disc = cfg.guide_discount;
    std::vector<double> next(xs.size());
    for (int sweep = 1; sweep <= cfg.guide_max_sweeps; ++sweep) {
        double change = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& u : vertices)
                best = std::max(best, forward(gs.params, xs[i] + state_derivative(sys, xs[i], u) * cfg.dt_guide));
            next[i] = (1.0 - disc) * rhos[i] + disc * std::min(rhos[i], best);
            change += std::abs(next[i] - targets[i]);
        }
        change /= static_cast<double>(xs.size());
        targets.swap(next);
        fit_regression(gs, xs, targets, cfg.guide_batch_size, cfg.guide_epochs_per_sweep, rng);
        if (sweep >= cfg.guide_min_sweeps && change < cfg.guide_tol) break;
    }
    return gs.params;
}

MlpParams fit_signed_distance(const SystemSpec& sys, const TrainConfig& cfg) {
    cfg.validate();
    TrainState ts{make_mlp(cfg.layer_dims(sys.state_dim), cfg.seed), cfg.guide_lr, 1.0, 0, cfg.seed, cfg.guide_momentum, {}};
    const std::vector<State> xs = sample_uniform(sys, cfg.n_fixed, cfg.seed + 104729);
    std::vector<double> targets(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) targets[i] = rho(sys, xs[i]);
    std::mt19937_64 rng(cfg.seed + 32452843);
    fit_regression(ts, xs, targets, cfg.guide_batch_size, cfg.guide_initial_epochs, rng);
    return ts.params;
}

CegisResult cegis(const SystemSpec& sys, const TrainConfig& cfg, const CegisOptions& opts) {
    cfg.validate();
    const auto start = Clock::now();
    CegisResult result;
    result.guide = opts.guide ? *opts.guide : train_guide(sys, cfg);
    Dataset data = make_dataset(sys, result.guide, cfg.n_fixed, cfg.dt_guide, cfg.seed);

    TrainState ts;
    ts.params = opts.initial_net ? *opts.initial_net : make_mlp(cfg.layer_dims(sys.state_dim), cfg.seed);
    if (ts.params.input_dim() != sys.state_dim) throw std::invalid_argument("initial network does not match the system");
    ts.learning_rate = cfg.lr;
    ts.decay = cfg.lr_decay;
    ts.rng_seed = cfg.seed;
    ts.momentum = cfg.momentum;

    for (int e = 0; e < cfg.warmup_epochs; ++e) train_epoch(ts, data, cfg);

    const VerifierConfig vcfg = cfg.verifier_config();
    for (int round = 1; round <= cfg.n_max; ++round) {
        RoundRecord rec;
        rec.round = round;
        const auto t0 = Clock::now();
        double loss = 0.0;
        for (int e = 0; e < cfg.k_epochs_per_verify; ++e) loss = train_epoch(ts, data, cfg);
        if (cfg.k_epochs_per_verify == 0) loss = cbvf_vi_loss(ts.params, data.points, cfg.gamma, cfg.lambda).total;
        rec.train_time_s = seconds_since(t0);
        rec.epochs = ts.epoch;
        rec.loss = loss;

        result.report = verify(ts.params, sys, vcfg);
        rec.verify_time_s = result.report.wall_time_s;
        rec.outcome = result.report.outcome;
        rec.violating_boxes = result.report.violating_boxes;
        if (result.report.outcome == Outcome::Violations)
            rec.ce_added = add_counterexamples(data, sys, result.guide, result.report.counterexamples, 0.5 * cfg.t_gap,
                                               cfg.dt_guide);
        rec.ce_total = data.counterexample_count();
        result.history.push_back(rec);
        if (opts.on_round) opts.on_round(rec);
        if (rec.outcome == Outcome::Verified) break;
        if (opts.time_budget_s > 0.0 && seconds_since(start) > opts.time_budget_s) {
            result.out_of_time = true;
            break;
        }
    }
    result.net = std::move(ts.params);
    result.total_epochs = ts.epoch;
    return result;
}

void write_history_csv(std::ostream& os, std::span<const RoundRecord> history, bool include_timing) {
    os << "round,epochs,loss,ce_added";
    if (include_timing) os << ",verify_time_s";
    os << ",ce_total,violating_boxes";
    if (include_timing) os << ",train_time_s";
    os << ",outcome\n";
    const auto prec = os.precision(10);
    for (const auto& r : history) {
        os << r.round << ',' << r.epochs << ',' << r.loss << ',' << r.ce_added;
        if (include_timing) os << ',' << r.verify_time_s;
        os << ',' << r.ce_total << ',' << r.violating_boxes;
        if (include_timing) os << ',' << r.train_time_s;
        os << ',' << outcome_name(r.outcome) << '\n';
    }
    os.precision(prec);
}

}  // namespace ncbf
