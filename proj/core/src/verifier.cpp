#include "ncbf/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "ncbf/detail/parallel.hpp"
#include "ncbf/relax.hpp"

namespace ncbf {

namespace {

struct AxisCell {
    double center;
    double radius;
};

std::vector<AxisCell> tile_axis(const SystemSpec& sys, Eigen::Index d, double eps) {
    const double lo = sys.state_box.lo(d), hi = sys.state_box.hi(d);
    std::vector<double> cuts{lo, hi};
    auto add_cut = [&](double v) {
        if (std::isfinite(v) && v > lo && v < hi) cuts.push_back(v);
    };
    add_cut(sys.admissible.keep.lo(d));
    add_cut(sys.admissible.keep.hi(d));
    for (const auto& ob : sys.admissible.obstacles) {
        add_cut(ob.lo(d));
        add_cut(ob.hi(d));
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               cuts.end());

    std::vector<AxisCell> cells;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double a = cuts[s], b = cuts[s + 1];
        const auto n = std::max<long>(1, static_cast<long>(std::ceil((b - a) / (2.0 * eps) - 1e-9)));
        for (long i = 0; i < n; ++i) {
            const double l = (i == 0) ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n);
            const double u = (i == n - 1) ? b : a + (b - a) * static_cast<double>(i + 1) / static_cast<double>(n);
            cells.push_back({0.5 * (l + u), 0.5 * (u - l)});
        }
    }
    return cells;
}

BoxVerdict decide(bool ok, const HyperRect& box, double t_gap) {
    if (ok) return BoxVerdict::Pass;
    return splittable(box, t_gap) ? BoxVerdict::Refine : BoxVerdict::Violation;
}

double best_q_lower(const NetworkBounds& nb, const SystemSpec& sys, const HyperRect& box,
                    const std::vector<Input>& vertices, double gamma) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& u : vertices)
        best = std::max(best, q_lower(nb.value, nb.gradient, interval_image(sys, box, u), gamma));
    return best;
}

struct SubtreeResult {
    std::vector<State> ce;
    std::vector<LeafBox> leaves;
    std::size_t processed = 0;
    std::size_t violating = 0;
    int max_depth = 0;
    Vec min_radius;
    double leaf_volume = 0.0;
    bool truncated = false;
};

class SubtreeSearch {
public:
    SubtreeSearch(const MlpParams& net, const SystemSpec& sys, const VerifierConfig& cfg)
        : net_(net), sys_(sys), cfg_(cfg), vertices_(input_vertices(sys)) {}

    SubtreeResult run(const HyperRect& root, std::size_t cap) const {
        SubtreeResult res;
        res.min_radius = root.radius;
        struct Item {
            HyperRect box;
            int depth;
        };
        std::vector<Item> stack{{root, 0}};
        while (!stack.empty()) {
            if (res.processed >= cap) {
                res.truncated = true;
                for (const auto& it : stack) record_leaf(res, it.box, false);
                break;
            }
            Item item = std::move(stack.back());
            stack.pop_back();
            ++res.processed;
            res.max_depth = std::max(res.max_depth, item.depth);
            res.min_radius = res.min_radius.cwiseMin(item.box.radius);

            switch (evaluate(item.box)) {
                case BoxVerdict::Pass:
                    record_leaf(res, item.box, true);
                    break;
                case BoxVerdict::Violation:
                    record_leaf(res, item.box, false);
                    break;
                case BoxVerdict::Refine: {
                    auto [first, second] = split(item.box, cfg_.t_gap);
                    stack.push_back({std::move(second), item.depth + 1});
                    stack.push_back({std::move(first), item.depth + 1});
                    break;
                }
            }
        }
        return res;
    }

private:
    BoxVerdict evaluate(const HyperRect& box) const {
        const Region region = sys_.admissible.classify(box);
        const bool need_h = region != Region::Admissible;
        const bool need_q = region != Region::Inadmissible;
        const NetworkBounds nb = bound_network(net_, box, need_q);
        bool ok = true;
        if (need_h) ok = nb.value.hi + cfg_.delta_num <= 0.0;
        if (ok && need_q) ok = best_q_lower(nb, sys_, box, vertices_, cfg_.gamma) - cfg_.delta_num >= 0.0;
        return decide(ok, box, cfg_.t_gap);
    }

    void record_leaf(SubtreeResult& res, const HyperRect& box, bool passed) const {
        res.leaf_volume += box.volume();
        if (!passed) {
            res.ce.push_back(box.center);
            ++res.violating;
        }
        if (cfg_.collect_leaves) res.leaves.push_back({box, passed});
    }

    const MlpParams& net_;
    const SystemSpec& sys_;
    const VerifierConfig& cfg_;
    std::vector<Input> vertices_;
};

bool lex_less(const State& a, const State& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

// Coarse boxes are searched in fixed-size batches so the per-subtree share of the
// box cap, and therefore the report, does not depend on the thread count.
constexpr std::size_t kBatch = 64;

}  // namespace

PartitionSets initial_partition(const SystemSpec& sys, const Vec& eps_init) {
    if (eps_init.size() != sys.state_dim) throw std::invalid_argument("eps_init must have one entry per state dimension");
    if ((eps_init.array() <= 0.0).any()) throw std::invalid_argument("eps_init must be positive");

    std::vector<std::vector<AxisCell>> axes;
    for (Eigen::Index d = 0; d < sys.state_dim; ++d) axes.push_back(tile_axis(sys, d, eps_init(d)));

    PartitionSets parts;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
        Vec c(sys.state_dim), r(sys.state_dim);
        for (std::size_t d = 0; d < axes.size(); ++d) {
            c(static_cast<Eigen::Index>(d)) = axes[d][idx[d]].center;
            r(static_cast<Eigen::Index>(d)) = axes[d][idx[d]].radius;
        }
        HyperRect box(std::move(c), std::move(r));
        switch (sys.admissible.classify(box)) {
            case Region::Admissible: parts.admissible_boxes.push_back(std::move(box)); break;
            case Region::Inadmissible: parts.inadmissible_boxes.push_back(std::move(box)); break;
            case Region::Mixed: parts.mixed_boxes.push_back(std::move(box)); break;
        }
        std::size_t d = axes.size();
        while (d > 0) {
            --d;
            if (++idx[d] < axes[d].size()) break;
            idx[d] = 0;
            if (d == 0) return parts;
        }
    }
}

bool splittable(const HyperRect& box, double t_gap) { return (box.radius.array() > t_gap).any(); }

std::pair<HyperRect, HyperRect> split(const HyperRect& box, double t_gap) {
    if (!splittable(box, t_gap)) throw std::invalid_argument("split: every radius is already within t_gap");
    Eigen::Index dim = 0;
    box.radius.maxCoeff(&dim);  // first maximal index
    HyperRect a = box, b = box;
    const double half = 0.5 * box.radius(dim);
    a.radius(dim) = half;
    b.radius(dim) = half;
    a.center(dim) = box.center(dim) - half;
    b.center(dim) = box.center(dim) + half;
    return {std::move(a), std::move(b)};
}

BoxVerdict check_inadmissible_box(const MlpParams& net, const HyperRect& box, double t_gap, double delta_num) {
    const Interval h = crown_bounds(net, box);
    return decide(h.hi + delta_num <= 0.0, box, t_gap);
}

BoxVerdict check_admissible_box(const MlpParams& net, const SystemSpec& sys, const HyperRect& box, double gamma,
                                double t_gap, double delta_num) {
    const NetworkBounds nb = bound_network(net, box, true);
    const double q = best_q_lower(nb, sys, box, input_vertices(sys), gamma);
    return decide(q - delta_num >= 0.0, box, t_gap);
}

VerifierReport verify(const MlpParams& net, const SystemSpec& sys, const VerifierConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    net.validate();
    if (net.input_dim() != sys.state_dim) throw std::invalid_argument("network input does not match the system");
    if (!(cfg.t_gap > 0.0)) throw std::invalid_argument("t_gap must be positive");
    if (!(cfg.gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (cfg.delta_num < 0.0) throw std::invalid_argument("delta_num must be non-negative");
    if (cfg.box_cap == 0) throw std::invalid_argument("box_cap must be positive");

    const PartitionSets parts = initial_partition(sys, cfg.eps_init);
    std::vector<HyperRect> roots;
    roots.reserve(parts.size());
    roots.insert(roots.end(), parts.inadmissible_boxes.begin(), parts.inadmissible_boxes.end());
    roots.insert(roots.end(), parts.admissible_boxes.begin(), parts.admissible_boxes.end());
    roots.insert(roots.end(), parts.mixed_boxes.begin(), parts.mixed_boxes.end());

    const SubtreeSearch search(net, sys, cfg);
    VerifierReport report;
    report.numeric_slack = cfg.delta_num;
    report.min_radius_reached = Vec::Constant(sys.state_dim, std::numeric_limits<double>::infinity());

    std::size_t used = 0;
    std::vector<SubtreeResult> results;
    for (std::size_t start = 0; start < roots.size(); start += kBatch) {
        const std::size_t len = std::min(kBatch, roots.size() - start);
        const std::size_t remaining = cfg.box_cap > used ? cfg.box_cap - used : 0;
        const std::size_t local_cap = std::max<std::size_t>(1, remaining / len);
        results.assign(len, {});
        detail::parallel_for(len, cfg.threads, [&](std::size_t i) { results[i] = search.run(roots[start + i], local_cap); });

        for (auto& r : results) {
            used += r.processed;
            report.boxes_processed += r.processed;
            report.violating_boxes += r.violating;
            report.max_depth = std::max(report.max_depth, r.max_depth);
            report.min_radius_reached = report.min_radius_reached.cwiseMin(r.min_radius);
            report.leaf_volume += r.leaf_volume;
            report.budget_exceeded = report.budget_exceeded || r.truncated;
            std::move(r.ce.begin(), r.ce.end(), std::back_inserter(report.counterexamples));
            std::move(r.leaves.begin(), r.leaves.end(), std::back_inserter(report.leaves));
        }
    }

    std::sort(report.counterexamples.begin(), report.counterexamples.end(), lex_less);
    report.outcome = report.counterexamples.empty() ? Outcome::Verified : Outcome::Violations;
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string outcome_name(Outcome o) { return o == Outcome::Verified ? "Verified" : "Violations"; }

std::string report_to_json(const VerifierReport& report, bool include_timing) {
    using nlohmann::json;
    json j;
    j["outcome"] = outcome_name(report.outcome);
    j["ce_count"] = report.counterexamples.size();
    j["boxes_processed"] = report.boxes_processed;
    j["violating_boxes"] = report.violating_boxes;
    j["max_depth"] = report.max_depth;
    if (include_timing) j["wall_time_s"] = report.wall_time_s;
    j["slack"] = report.numeric_slack;
    j["budget_exceeded"] = report.budget_exceeded;
    j["leaf_volume"] = report.leaf_volume;
    j["min_radius_reached"] = std::vector<double>(report.min_radius_reached.data(),
                                                  report.min_radius_reached.data() + report.min_radius_reached.size());
    json ce = json::array();
    for (const auto& c : report.counterexamples) ce.push_back(std::vector<double>(c.data(), c.data() + c.size()));
    j["ce"] = std::move(ce);
    return j.dump(2);
}

void write_states_csv(std::ostream& os, const std::vector<State>& states) {
    const Eigen::Index n = states.empty() ? 0 : states.front().size();
    for (Eigen::Index d = 0; d < n; ++d) os << (d ? "," : "") << 'x' << d;
    os << '\n';
    const auto prec = os.precision(17);
    for (const auto& s : states) {
        for (Eigen::Index d = 0; d < s.size(); ++d) os << (d ? "," : "") << s(d);
        os << '\n';
    }
    os.precision(prec);
}

}  // namespace ncbf
