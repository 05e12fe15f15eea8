#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ncbf/relax.hpp"
#include "ncbf/verifier.hpp"
#include "support.hpp"

using namespace ncbf;
using std::numbers::pi;

namespace {

VerifierConfig pendulum_cfg() {
    VerifierConfig cfg;
    cfg.eps_init = Vec::Constant(2, 0.2);
    cfg.t_gap = 0.005;
    cfg.gamma = 0.5;
    return cfg;
}

MlpParams ellipse_net() { return load_checkpoint(NCBF_TEST_DATA "/pendulum_ellipse.ckpt"); }

double total_volume(const PartitionSets& p) {
    double v = 0;
    for (const auto* set : {&p.admissible_boxes, &p.inadmissible_boxes, &p.mixed_boxes})
        for (const auto& b : *set) v += b.volume();
    return v;
}

}  // namespace

TEST(InitialPartition, PendulumTiling) {
    const auto sys = make_system("pendulum");
    const auto parts = initial_partition(sys, Vec::Constant(2, 0.2));
    // theta: [-pi,-5pi/6] 2 cells, [-5pi/6,5pi/6] 14, [5pi/6,pi] 2; thetadot: 3 + 20 + 3
    EXPECT_EQ(parts.size(), 18u * 26u);
    EXPECT_EQ(parts.admissible_boxes.size(), 14u * 20u);
    EXPECT_TRUE(parts.mixed_boxes.empty());
    EXPECT_NEAR(total_volume(parts), sys.state_box.volume(), 1e-9 * sys.state_box.volume());
    for (const auto& b : parts.admissible_boxes) {
        EXPECT_LE(b.radius.maxCoeff(), 0.2 + 1e-12);
        EXPECT_EQ(sys.admissible.classify(b), Region::Admissible);
    }
    for (const auto& b : parts.inadmissible_boxes) EXPECT_EQ(sys.admissible.classify(b), Region::Inadmissible);
}

TEST(InitialPartition, RobotTilingCoversStateBox) {
    const auto sys = make_system("robot2d");
    const auto parts = initial_partition(sys, Vec::Constant(4, 0.2));
    EXPECT_TRUE(parts.mixed_boxes.empty());
    EXPECT_NEAR(total_volume(parts), sys.state_box.volume(), 1e-9 * sys.state_box.volume());
}

TEST(InitialPartition, HugeRadiusGivesOneCellPerSegment) {
    const auto sys = make_system("pendulum");
    const auto parts = initial_partition(sys, Vec::Constant(2, 100.0));
    EXPECT_EQ(parts.size(), 9u);
    EXPECT_EQ(parts.admissible_boxes.size(), 1u);
    EXPECT_THROW(initial_partition(sys, Vec::Constant(2, 0.0)), std::invalid_argument);
    EXPECT_THROW(initial_partition(sys, Vec::Constant(3, 0.2)), std::invalid_argument);
}

TEST(Split, HalvesLargestRadius) {
    const HyperRect box(Vec::Zero(2), (Vec(2) << 0.2, 0.05).finished());
    const auto [a, b] = split(box, 0.005);
    EXPECT_DOUBLE_EQ(a.radius(0), 0.1);
    EXPECT_DOUBLE_EQ(a.radius(1), 0.05);
    EXPECT_DOUBLE_EQ(a.center(0), -0.1);
    EXPECT_DOUBLE_EQ(b.center(0), 0.1);
    EXPECT_DOUBLE_EQ(a.volume() + b.volume(), box.volume());
}

TEST(Split, TieGoesToFirstDimension) {
    const auto [a, b] = split(HyperRect(Vec::Zero(3), Vec::Constant(3, 0.1)), 0.005);
    EXPECT_DOUBLE_EQ(a.radius(0), 0.05);
    EXPECT_DOUBLE_EQ(a.radius(1), 0.1);
    EXPECT_THROW(split(HyperRect(Vec::Zero(2), Vec::Constant(2, 0.005)), 0.005), std::invalid_argument);
}

TEST(CheckInadmissible, ConstantNets) {
    const HyperRect big(Vec::Zero(2), Vec::Constant(2, 0.1)), small(Vec::Zero(2), Vec::Constant(2, 0.004));
    EXPECT_EQ(check_inadmissible_box(fixtures::constant_net(2, 3, -1), big, 0.005), BoxVerdict::Pass);
    EXPECT_EQ(check_inadmissible_box(fixtures::constant_net(2, 3, 1), big, 0.005), BoxVerdict::Refine);
    EXPECT_EQ(check_inadmissible_box(fixtures::constant_net(2, 3, 1), small, 0.005), BoxVerdict::Violation);
}

TEST(CheckInadmissible, SignChangeRefines) {
    // h = tanh(x0): crosses zero at the origin
    MlpParams net;
    net.layers.push_back({(Mat(1, 2) << 1, 0).finished(), Vec::Zero(1)});
    net.layers.push_back({Mat::Ones(1, 1), Vec::Zero(1)});
    EXPECT_EQ(check_inadmissible_box(net, HyperRect(Vec::Zero(2), Vec::Constant(2, 0.1)), 0.005), BoxVerdict::Refine);
    EXPECT_EQ(check_inadmissible_box(net, HyperRect(Vec::Constant(2, -1.0), Vec::Constant(2, 0.1)), 0.005),
              BoxVerdict::Pass);
}

TEST(CheckAdmissible, ConstantNegativeNetViolates) {
    const auto sys = make_system("pendulum");
    const HyperRect tiny(Vec::Zero(2), Vec::Constant(2, 0.004));
    EXPECT_EQ(check_admissible_box(fixtures::constant_net(2, 3, -1), sys, tiny, 0.5, 0.005), BoxVerdict::Violation);
    EXPECT_EQ(check_admissible_box(fixtures::constant_net(2, 3, 1), sys, tiny, 0.5, 0.005), BoxVerdict::Pass);
}

TEST(CheckAdmissible, DegenerateBoxMatchesPointwiseSign) {
    const auto sys = make_system("pendulum");
    std::mt19937_64 rng(4);
    int both = 0;
    for (int k = 0; k < 500; ++k) {
        const MlpParams net = fixtures::random_net(rng, 2, {8});
        const State x = fixtures::uniform_vec(rng, sys.admissible.keep.lo, sys.admissible.keep.hi);
        double q = -1e18;
        for (const auto& u : input_vertices(sys))
            q = std::max(q, jacobian(net, x).dot(state_derivative(sys, x, u)) + 0.5 * forward(net, x));
        if (std::abs(q) < 1e-6) continue;
        const auto v = check_admissible_box(net, sys, HyperRect(x, Vec::Zero(2)), 0.5, 0.005);
        EXPECT_EQ(v, q >= 0 ? BoxVerdict::Pass : BoxVerdict::Violation);
        both += q >= 0;
    }
    EXPECT_GT(both, 0);
}

TEST(Verify, ConstantNegativeNetFailsAllOfAdmissibleSet) {
    const auto sys = make_system("pendulum");
    auto cfg = pendulum_cfg();
    cfg.t_gap = 0.05;
    const auto rep = verify(fixtures::constant_net(2, 4, -1), sys, cfg);
    EXPECT_EQ(rep.outcome, Outcome::Violations);
    ASSERT_FALSE(rep.counterexamples.empty());
    for (const auto& c : rep.counterexamples) EXPECT_TRUE(is_admissible(sys, c));
    EXPECT_EQ(rep.counterexamples.size(), rep.violating_boxes);
    EXPECT_NEAR(rep.leaf_volume, sys.state_box.volume(), 1e-9 * sys.state_box.volume());
    EXPECT_TRUE(std::is_sorted(rep.counterexamples.begin(), rep.counterexamples.end(), [](const State& a, const State& b) {
        return std::lexicographical_compare(a.data(), a.data() + 2, b.data(), b.data() + 2);
    }));
    EXPECT_LE(rep.min_radius_reached.maxCoeff(), cfg.t_gap);
}

TEST(Verify, SmoothBarrierIsVerified) {
    const auto sys = make_system("pendulum");
    const auto rep = verify(ellipse_net(), sys, pendulum_cfg());
    EXPECT_EQ(rep.outcome, Outcome::Verified);
    EXPECT_TRUE(rep.counterexamples.empty());
    EXPECT_FALSE(rep.budget_exceeded);
}

TEST(Verify, VerifiedImpliesNoGridViolations) {
    const auto sys = make_system("pendulum");
    const MlpParams net = ellipse_net();
    ASSERT_EQ(verify(net, sys, pendulum_cfg()).outcome, Outcome::Verified);
    const auto verts = input_vertices(sys);
    const int n = 300;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            State x(2);
            x << -pi + 2 * pi * i / (n - 1), -5 + 10.0 * j / (n - 1);
            const double h = forward(net, x);
            if (!is_admissible(sys, x)) {
                ASSERT_LT(h, 0.0);
                continue;
            }
            double q = -1e18;
            for (const auto& u : verts) q = std::max(q, jacobian(net, x).dot(state_derivative(sys, x, u)) + 0.5 * h);
            ASSERT_GE(q, 0.0) << x.transpose();
        }
}

TEST(Verify, EveryViolatingBoxReachedTgap) {
    const auto sys = make_system("pendulum");
    std::mt19937_64 rng(5);
    auto cfg = pendulum_cfg();
    cfg.t_gap = 0.02;
    cfg.collect_leaves = true;
    const auto rep = verify(fixtures::random_net(rng, 2, {16}), sys, cfg);
    std::size_t failed = 0;
    for (const auto& leaf : rep.leaves) {
        if (leaf.passed) continue;
        ++failed;
        EXPECT_LE(leaf.box.radius.maxCoeff(), cfg.t_gap);
    }
    EXPECT_EQ(failed, rep.counterexamples.size());
}

TEST(Verify, LeavesTileTheStateBox) {
    const auto sys = make_system("pendulum");
    std::mt19937_64 rng(6);
    auto cfg = pendulum_cfg();
    cfg.eps_init = Vec::Constant(2, 0.5);
    cfg.t_gap = 0.05;
    cfg.collect_leaves = true;
    const auto rep = verify(fixtures::random_net(rng, 2, {8}), sys, cfg);
    double vol = 0;
    for (const auto& l : rep.leaves) vol += l.box.volume();
    EXPECT_NEAR(vol, sys.state_box.volume(), 1e-9 * sys.state_box.volume());
    EXPECT_NEAR(rep.leaf_volume, vol, 1e-9 * vol);
    // interiors are pairwise disjoint: check by random points landing in exactly one leaf
    for (int k = 0; k < 2000; ++k) {
        const State x = fixtures::uniform_vec(rng, sys.state_box.lo, sys.state_box.hi);
        int hits = 0;
        for (const auto& l : rep.leaves) hits += ((x - l.box.center).cwiseAbs().array() < l.box.radius.array()).all();
        EXPECT_EQ(hits, 1);
    }
}

TEST(Verify, DeterministicAcrossRunsAndThreads) {
    const auto sys = make_system("pendulum");
    std::mt19937_64 rng(7);
    const MlpParams net = fixtures::random_net(rng, 2, {12});
    auto cfg = pendulum_cfg();
    cfg.t_gap = 0.02;
    cfg.threads = 1;
    const auto a = report_to_json(verify(net, sys, cfg), false);
    const auto b = report_to_json(verify(net, sys, cfg), false);
    cfg.threads = 3;
    const auto c = report_to_json(verify(net, sys, cfg), false);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(Verify, BoxCapIsReported) {
    const auto sys = make_system("pendulum");
    auto cfg = pendulum_cfg();
    cfg.box_cap = 1000;
    const auto rep = verify(fixtures::constant_net(2, 2, -1), sys, cfg);
    EXPECT_TRUE(rep.budget_exceeded);
    EXPECT_EQ(rep.outcome, Outcome::Violations);
    // every coarse box is looked at once even after the cap is spent
    EXPECT_LE(rep.boxes_processed, cfg.box_cap + initial_partition(sys, cfg.eps_init).size());
}

TEST(Verify, RejectsMismatchedNetwork) {
    std::mt19937_64 rng(8);
    EXPECT_THROW(verify(fixtures::random_net(rng, 3, {4}), make_system("pendulum"), pendulum_cfg()),
                 std::invalid_argument);
}

TEST(Report, JsonSchema) {
    const auto sys = make_system("pendulum");
    auto cfg = pendulum_cfg();
    cfg.t_gap = 0.05;
    const auto rep = verify(fixtures::constant_net(2, 2, -1), sys, cfg);
    const auto j = nlohmann::json::parse(report_to_json(rep));
    for (const char* key : {"outcome", "ce_count", "boxes_processed", "max_depth", "wall_time_s", "slack", "ce"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["outcome"], "Violations");
    EXPECT_EQ(j["ce_count"].get<std::size_t>(), rep.counterexamples.size());
    EXPECT_EQ(j["ce"].size(), rep.counterexamples.size());
    EXPECT_DOUBLE_EQ(j["slack"].get<double>(), 1e-9);
    EXPECT_FALSE(nlohmann::json::parse(report_to_json(rep, false)).contains("wall_time_s"));

    std::stringstream csv;
    write_states_csv(csv, rep.counterexamples);
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "x0,x1");
    std::size_t rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    EXPECT_EQ(rows, rep.counterexamples.size());
}
