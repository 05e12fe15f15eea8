#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ncbf/trainer.hpp"
#include "support.hpp"

using namespace ncbf;

namespace {

MlpParams coordinate_net(int in, int coord, double sign) {
    // h = sign * 10 * tanh(x_coord / 10): monotone in x_coord
    MlpParams net;
    Mat W = Mat::Zero(1, in);
    W(0, coord) = 0.1;
    net.layers.push_back({W, Vec::Zero(1)});
    net.layers.push_back({Mat::Constant(1, 1, 10.0 * sign), Vec::Zero(1)});
    return net;
}

LossPoint point(double rho, Vec x, Vec xdot) {
    LossPoint p;
    p.x = std::move(x);
    p.rho = rho;
    p.admissible = rho >= 0;
    p.xdot = std::move(xdot);
    return p;
}

TrainConfig small_cfg() {
    TrainConfig cfg;
    cfg.eps_init = Vec::Constant(2, 0.4);
    cfg.t_gap = 0.05;
    cfg.n_fixed = 400;
    cfg.hidden = {8};
    cfg.k_epochs_per_verify = 2;
    cfg.guide_max_sweeps = 3;
    cfg.guide_initial_epochs = 5;
    cfg.seed = 5;
    cfg.threads = 1;
    return cfg;
}

std::vector<double> flatten(const MlpParams& net) {
    std::vector<double> out;
    for (const auto& l : net.layers) {
        out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

}  // namespace

TEST(UStar, ConstantGuideTakesFirstVertex) {
    const auto sys = make_system("robot2d");
    const Input u = u_star_guided(fixtures::constant_net(4, 3, 0.4), sys, Vec::Zero(4), 0.01);
    EXPECT_EQ(u, input_vertices(sys).front());
}

TEST(UStar, MaximizesOneStepGuide) {
    const auto sys = make_system("pendulum");
    EXPECT_EQ(u_star_guided(coordinate_net(2, 1, 1.0), sys, Vec::Zero(2), 0.01)(0), 12.0);
    EXPECT_EQ(u_star_guided(coordinate_net(2, 1, -1.0), sys, Vec::Zero(2), 0.01)(0), -12.0);
    EXPECT_THROW(u_star_guided(coordinate_net(2, 1, 1.0), sys, Vec::Zero(2), 0.0), std::invalid_argument);
}

TEST(Loss, HandEvaluatedBranches) {
    // constant net h = c has zero gradient, so the Lie term vanishes
    const double gamma = 0.5, lambda = 0.05;
    const Vec x = Vec::Zero(2), xd = Vec::Ones(2);
    // rho - h = -0.2 and gamma h - lambda = 0.3 with h = 0.7, rho = 0.5
    auto a = cbvf_vi_loss(fixtures::constant_net(2, 2, 0.7), std::vector{point(0.5, x, xd)}, gamma, lambda);
    EXPECT_NEAR(a.total, 0.2, 1e-15);
    EXPECT_EQ(a.n_admissible, 1u);
    auto b = cbvf_vi_loss(fixtures::constant_net(2, 2, -0.1), std::vector{point(-1, x, xd)}, gamma, lambda);
    EXPECT_NEAR(b.total, 0.0, 1e-15);
    auto c = cbvf_vi_loss(fixtures::constant_net(2, 2, 0.2), std::vector{point(-1, x, xd)}, gamma, lambda);
    EXPECT_NEAR(c.total, 0.25, 1e-15);
    EXPECT_EQ(c.n_inadmissible, 1u);
}

TEST(Loss, MeansPerTerm) {
    const Vec x = Vec::Zero(2), xd = Vec::Zero(2);
    const std::vector pts{point(-1, x, xd), point(-1, x, xd), point(-1, x, xd), point(3, x, xd)};
    const auto l = cbvf_vi_loss(fixtures::constant_net(2, 2, 0.2), pts, 0.5, 0.05);
    EXPECT_NEAR(l.inadmissible_term, 0.25, 1e-15);
    EXPECT_NEAR(l.admissible_term, 0.05, 1e-15);  // |min(2.8, 0.1 - 0.05)|
    EXPECT_NEAR(l.total, 0.3, 1e-15);
}

TEST(Loss, NonNegativeAndZeroMeansSatisfied) {
    std::mt19937_64 rng(1);
    const auto sys = make_system("pendulum");
    const MlpParams guide = fixtures::random_net(rng, 2, {8});
    for (int k = 0; k < 200; ++k) {
        const MlpParams net = fixtures::random_net(rng, 2, {8});
        const auto xs = sample_uniform(sys, 20, rng());
        std::vector<LossPoint> pts;
        for (const auto& x : xs) pts.push_back(make_loss_point(guide, sys, x, 0.01));
        const auto l = cbvf_vi_loss(net, pts, 0.5, 0.05);
        EXPECT_GE(l.admissible_term, 0.0);
        EXPECT_GE(l.inadmissible_term, 0.0);
        EXPECT_NEAR(l.total, l.admissible_term + l.inadmissible_term, 1e-15);
    }
    // a point set on which the loss is zero satisfies the tightened conditions
    const MlpParams flat = fixtures::constant_net(2, 2, 0.1);
    const std::vector pts{point(1.0, Vec::Zero(2), Vec::Ones(2))};
    EXPECT_NEAR(cbvf_vi_loss(flat, pts, 0.5, 0.05).total, 0.0, 1e-15);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    const auto sys = make_system("pendulum");
    int checked = 0;
    for (int k = 0; checked < 100 && k < 1000; ++k) {
        MlpParams net = fixtures::random_net(rng, 2, k % 2 ? std::vector<int>{6} : std::vector<int>{4, 4});
        const MlpParams guide = fixtures::random_net(rng, 2, {4});
        std::vector<LossPoint> pts;
        for (const auto& x : sample_uniform(sys, 8, rng())) pts.push_back(make_loss_point(guide, sys, x, 0.01));
        // skip draws that sit within reach of a kink of min or max
        bool near_kink = false;
        for (const auto& p : pts) {
            const double h = forward(net, p.x);
            const double lie = jacobian(net, p.x).dot(p.xdot);
            const double a = p.rho - h, b = lie + 0.5 * h - 0.05;
            if (p.admissible ? (std::abs(a - b) < 1e-3 || std::abs(std::min(a, b)) < 1e-3) : std::abs(h + 0.05) < 1e-3)
                near_kink = true;
        }
        if (near_kink) continue;
        MlpParams grad;
        cbvf_vi_loss(net, pts, 0.5, 0.05, &grad);
        const auto g = flatten(grad);
        std::size_t idx = 0;
        for (auto& layer : net.layers)
            for (double* block : {layer.weight.data(), layer.bias.data()}) {
                const Eigen::Index n = block == layer.weight.data() ? layer.weight.size() : layer.bias.size();
                for (Eigen::Index i = 0; i < n; ++i, ++idx) {
                    const double keep = block[i];
                    block[i] = keep + 1e-6;
                    const double up = cbvf_vi_loss(net, pts, 0.5, 0.05).total;
                    block[i] = keep - 1e-6;
                    const double dn = cbvf_vi_loss(net, pts, 0.5, 0.05).total;
                    block[i] = keep;
                    EXPECT_LT(fixtures::rel_err(g[idx], (up - dn) / 2e-6), 1e-4);
                }
            }
        ++checked;
    }
    EXPECT_EQ(checked, 100);
}

TEST(Loss, DuplicatedBatchKeepsGradient) {
    std::mt19937_64 rng(3);
    const auto sys = make_system("pendulum");
    const MlpParams net = fixtures::random_net(rng, 2, {6}), guide = fixtures::random_net(rng, 2, {6});
    std::vector<LossPoint> pts;
    for (const auto& x : sample_uniform(sys, 30, 9)) pts.push_back(make_loss_point(guide, sys, x, 0.01));
    auto twice = pts;
    twice.insert(twice.end(), pts.begin(), pts.end());
    MlpParams g1, g2;
    cbvf_vi_loss(net, pts, 0.5, 0.05, &g1);
    cbvf_vi_loss(net, twice, 0.5, 0.05, &g2);
    const auto a = flatten(g1), b = flatten(g2);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Loss, StateOverloadUsesGuidedInput) {
    std::mt19937_64 rng(4);
    const auto sys = make_system("pendulum");
    const MlpParams net = fixtures::random_net(rng, 2, {6}), guide = fixtures::random_net(rng, 2, {6});
    TrainConfig cfg;
    const auto xs = sample_uniform(sys, 50, 3);
    std::vector<LossPoint> pts;
    for (const auto& x : xs) pts.push_back(make_loss_point(guide, sys, x, cfg.dt_guide));
    EXPECT_DOUBLE_EQ(cbvf_vi_loss(net, guide, sys, xs, cfg).total, cbvf_vi_loss(net, pts, cfg.gamma, cfg.lambda).total);
}

TEST(Dataset, CacheMatchesDynamics) {
    std::mt19937_64 rng(5);
    const auto sys = make_system("pendulum");
    const MlpParams guide = fixtures::random_net(rng, 2, {6});
    const Dataset d = make_dataset(sys, guide, 500, 0.01, 17);
    ASSERT_EQ(d.size(), 500u);
    EXPECT_EQ(d.counterexample_count(), 0u);
    for (const auto& p : d.points) {
        EXPECT_TRUE(sys.state_box.contains(p.x));
        EXPECT_EQ(p.rho, rho(sys, p.x));
        EXPECT_EQ(p.admissible, is_admissible(sys, p.x));
        EXPECT_EQ(p.xdot, state_derivative(sys, p.x, u_star_guided(guide, sys, p.x, 0.01)));
    }
    const Dataset again = make_dataset(sys, guide, 500, 0.01, 17);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.points[i].x, again.points[i].x);
}

TEST(Dataset, CounterexamplesAreDeduplicated) {
    const auto sys = make_system("pendulum");
    const MlpParams guide = fixtures::constant_net(2, 2, 0.0);
    Dataset d = make_dataset(sys, guide, 10, 0.01, 1);
    const double sep = 0.0025;
    std::vector<State> ces;
    for (double a : {0.0, 0.001, 0.004, 0.0061}) ces.push_back((State(2) << a, 0.5).finished());
    // 0.001 sits next to 0.0 and 0.0061 next to 0.004
    EXPECT_EQ(add_counterexamples(d, sys, guide, ces, sep, 0.01), 2u);
    EXPECT_EQ(add_counterexamples(d, sys, guide, ces, sep, 0.01), 0u);
    EXPECT_EQ(d.counterexample_count(), 2u);
    // brute-force pairwise check on a random batch
    std::mt19937_64 rng(2);
    std::vector<State> many;
    for (int i = 0; i < 2000; ++i) many.push_back(fixtures::uniform_vec(rng, Vec::Constant(2, -0.1), Vec::Constant(2, 0.1)));
    const std::size_t before = d.size();
    add_counterexamples(d, sys, guide, many, sep, 0.01);
    EXPECT_GE(d.size(), before);
    for (std::size_t i = d.n_fixed; i < d.size(); ++i)
        for (std::size_t j = i + 1; j < d.size(); ++j)
            ASSERT_GT((d.points[i].x - d.points[j].x).cwiseAbs().maxCoeff(), sep);
}

TEST(TrainEpoch, DecaysOnceAndIsDeterministic) {
    std::mt19937_64 rng(6);
    const auto sys = make_system("pendulum");
    const MlpParams guide = fixtures::random_net(rng, 2, {6});
    const Dataset d = make_dataset(sys, guide, 300, 0.01, 3);
    TrainConfig cfg;
    cfg.batch_size = 32;
    TrainState a{make_mlp(std::vector<int>{2, 8, 1}, 1), 1e-3, 0.995, 0, 0};
    TrainState b = a;
    train_epoch(a, d, cfg);
    EXPECT_DOUBLE_EQ(a.learning_rate, 0.995e-3);
    EXPECT_EQ(a.epoch, 1);
    train_epoch(b, d, cfg);
    EXPECT_EQ(flatten(a.params), flatten(b.params));
}

TEST(TrainEpoch, FullBatchLowersLoss) {
    std::mt19937_64 rng(7);
    const auto sys = make_system("pendulum");
    const MlpParams guide = fixtures::random_net(rng, 2, {6});
    const Dataset d = make_dataset(sys, guide, 300, 0.01, 4);
    TrainConfig cfg;
    cfg.batch_size = 0;
    TrainState ts{make_mlp(std::vector<int>{2, 8, 1}, 2), 1e-3, 1.0, 0, 0};
    const double before = cbvf_vi_loss(ts.params, d.points, cfg.gamma, cfg.lambda).total;
    for (int e = 0; e < 5; ++e) train_epoch(ts, d, cfg);
    EXPECT_LT(cbvf_vi_loss(ts.params, d.points, cfg.gamma, cfg.lambda).total, before);
}

TEST(Guide, ZeroDiscountFitsRho) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg = small_cfg();
    cfg.n_fixed = 2000;
    cfg.guide_discount = 0.0;
    cfg.guide_initial_epochs = 60;
    const MlpParams guide = train_guide(sys, cfg);
    int agree = 0, total = 0;
    for (const auto& x : sample_uniform(sys, 500, 99)) {
        const double r = rho(sys, x);
        if (std::abs(r) < 0.3) continue;
        ++total;
        agree += (forward(guide, x) >= 0) == (r >= 0);
    }
    EXPECT_GT(agree, 0.95 * total);
}

TEST(Guide, SignedDistanceFit) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg = small_cfg();
    cfg.n_fixed = 2000;
    cfg.guide_initial_epochs = 60;
    cfg.guide_momentum = 0.9;
    const MlpParams net = fit_signed_distance(sys, cfg);
    const MlpParams start = make_mlp(cfg.layer_dims(2), cfg.seed);
    double err = 0.0, err0 = 0.0;
    int agree = 0, total = 0;
    for (const auto& x : sample_uniform(sys, 500, 98)) {
        const double r = rho(sys, x);
        err += std::abs(forward(net, x) - r);
        err0 += std::abs(forward(start, x) - r);
        if (std::abs(r) < 0.3) continue;
        ++total;
        agree += (forward(net, x) >= 0) == (r >= 0);
    }
    EXPECT_LT(err, 0.25 * err0);
    EXPECT_GT(agree, 0.95 * total);
}

TEST(Guide, SignsOfDefaultGuide) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg = small_cfg();
    cfg.n_fixed = 2000;
    cfg.guide_initial_epochs = 60;
    const MlpParams guide = train_guide(sys, cfg);
    EXPECT_GT(forward(guide, Vec::Zero(2)), 0.0);
    EXPECT_LT(forward(guide, (State(2) << 3.1, 4.9).finished()), 0.0);
}

TEST(Cegis, OneRoundWithUntrainedNet) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg = small_cfg();
    cfg.n_max = 1;
    cfg.k_epochs_per_verify = 0;
    const auto res = cegis(sys, cfg);
    EXPECT_EQ(res.report.outcome, Outcome::Violations);
    ASSERT_EQ(res.history.size(), 1u);
    EXPECT_GT(res.history[0].ce_added, 0u);
    EXPECT_EQ(res.history[0].ce_total, res.history[0].ce_added);
}

TEST(Cegis, VerifiedInitialNetStopsAfterOneRound) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg = small_cfg();
    cfg.eps_init = Vec::Constant(2, 0.2);
    cfg.t_gap = 0.005;
    cfg.hidden = {36};
    cfg.k_epochs_per_verify = 0;
    CegisOptions opts;
    opts.initial_net = load_checkpoint(NCBF_TEST_DATA "/pendulum_ellipse.ckpt");
    const auto res = cegis(sys, cfg, opts);
    EXPECT_EQ(res.report.outcome, Outcome::Verified);
    ASSERT_EQ(res.history.size(), 1u);
    EXPECT_EQ(res.history[0].ce_total, 0u);
}

TEST(Cegis, CounterexampleSetGrowsMonotonically) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg = small_cfg();
    cfg.n_max = 3;
    std::vector<RoundRecord> seen;
    CegisOptions opts;
    opts.on_round = [&](const RoundRecord& r) { seen.push_back(r); };
    const auto res = cegis(sys, cfg, opts);
    ASSERT_EQ(seen.size(), res.history.size());
    for (std::size_t i = 1; i < res.history.size(); ++i) {
        EXPECT_GE(res.history[i].ce_total, res.history[i - 1].ce_total);
        EXPECT_EQ(res.history[i].ce_total, res.history[i - 1].ce_total + res.history[i].ce_added);
        EXPECT_EQ(res.history[i].epochs, res.history[i - 1].epochs + cfg.k_epochs_per_verify);
    }
}

TEST(Cegis, SameSeedSameHistory) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg = small_cfg();
    cfg.n_max = 2;
    const auto a = cegis(sys, cfg), b = cegis(sys, cfg);
    std::stringstream sa, sb;
    write_history_csv(sa, a.history, false);
    write_history_csv(sb, b.history, false);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(flatten(a.net), flatten(b.net));
}

TEST(History, CsvColumns) {
    RoundRecord r;
    r.round = 1;
    r.epochs = 20;
    std::stringstream with, without;
    write_history_csv(with, std::vector{r}, true);
    write_history_csv(without, std::vector{r}, false);
    std::string h1, h2;
    std::getline(with, h1);
    std::getline(without, h2);
    EXPECT_EQ(h1, "round,epochs,loss,ce_added,verify_time_s,ce_total,violating_boxes,train_time_s,outcome");
    EXPECT_EQ(h2, "round,epochs,loss,ce_added,ce_total,violating_boxes,outcome");
}

TEST(TrainConfig, ValidationErrors) {
    TrainConfig cfg;
    cfg.gamma = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.n_max = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.lambda = -1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
