#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ncbf/dynamics.hpp"
#include "ncbf/mlp.hpp"

namespace ncbf {

/// Coarse cover of the state box. Mixed boxes straddle the admissible-set
/// boundary and are checked against both conditions.
struct PartitionSets {
    std::vector<HyperRect> inadmissible_boxes;
    std::vector<HyperRect> admissible_boxes;
    std::vector<HyperRect> mixed_boxes;

    std::size_t size() const { return inadmissible_boxes.size() + admissible_boxes.size() + mixed_boxes.size(); }
};

/// Tile the state box. Every axis is first cut at the admissible-set face
/// coordinates; each resulting segment is split into ceil(len / (2 eps)) equal
/// boxes, so every radius is at most eps and box-shaped sets never produce mixed
/// boxes.
PartitionSets initial_partition(const SystemSpec& sys, const Vec& eps_init);

enum class BoxVerdict { Pass, Refine, Violation };

struct VerifierConfig {
    Vec eps_init;
    double t_gap = 0.005;
    double gamma = 0.5;
    double delta_num = 1e-9;
    std::size_t box_cap = 10'000'000;
    unsigned threads = 0;  // 0 = hardware concurrency
    bool collect_leaves = false;
};

/// Condition h < 0 on inadmissible boxes: Pass iff h_upper + delta <= 0.
BoxVerdict check_inadmissible_box(const MlpParams& net, const HyperRect& box, double t_gap, double delta_num = 1e-9);
/// Condition sup_u q >= 0 on admissible boxes, using the best lower bound over the
/// input vertices: Pass iff max_u q_lower - delta >= 0.
BoxVerdict check_admissible_box(const MlpParams& net, const SystemSpec& sys, const HyperRect& box, double gamma,
                                double t_gap, double delta_num = 1e-9);

/// Whether some radius component still exceeds t_gap.
bool splittable(const HyperRect& box, double t_gap);
/// Bisect along the dimension with the largest radius (lowest index on ties).
/// Throws std::invalid_argument if no component exceeds t_gap.
std::pair<HyperRect, HyperRect> split(const HyperRect& box, double t_gap);

enum class Outcome { Verified, Violations };

struct LeafBox {
    HyperRect box;
    bool passed = false;
};

struct VerifierReport {
    Outcome outcome = Outcome::Verified;
    std::vector<State> counterexamples;  // sorted lexicographically
    std::size_t boxes_processed = 0;
    std::size_t violating_boxes = 0;
    int max_depth = 0;
    Vec min_radius_reached;
    double wall_time_s = 0.0;
    double numeric_slack = 0.0;
    bool budget_exceeded = false;
    double leaf_volume = 0.0;
    std::vector<LeafBox> leaves;  // only with VerifierConfig::collect_leaves
};

/// Branch-and-bound over the initial partition (depth-first per coarse box).
/// Counterexamples are the centers of boxes that still fail at t_gap. When the box
/// cap is reached the unresolved boxes are reported as violations and
/// budget_exceeded is set.
VerifierReport verify(const MlpParams& net, const SystemSpec& sys, const VerifierConfig& cfg);

std::string outcome_name(Outcome o);
/// {outcome, ce_count, boxes_processed, max_depth, wall_time_s, slack, ce: [[...], ...], ...}
std::string report_to_json(const VerifierReport& report, bool include_timing = true);
/// One state per row, header x0,x1,...
void write_states_csv(std::ostream& os, const std::vector<State>& states);

}  // namespace ncbf
