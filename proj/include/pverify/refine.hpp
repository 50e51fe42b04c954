#pragma once

// Sampling-guided refinement of an abstract state until every piece has a
// certified probability spread of at most phi.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pverify/bounds.hpp"
#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"
#include "pverify/neural.hpp"
#include "pverify/random.hpp"
#include "pverify/tolerances.hpp"

namespace pverify {

struct SampleSet {
    std::vector<Point> points;
    std::vector<Vector> probs;  // one distribution per point

    std::size_t size() const noexcept { return points.size(); }
    /// One-vs-all view: probability of action a at every sample.
    Vector action_column(std::size_t a) const {
        Vector col(probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i) col[i] = probs[i][a];
        return col;
    }
    /// max over actions of (max - min) sampled probability.
    double spread() const {
        double s = 0.0;
        if (probs.empty()) return s;
        for (std::size_t a = 0; a < probs.front().size(); ++a) {
            const Vector col = action_column(a);
            const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
            s = std::max(s, *hi - *lo);
        }
        return s;
    }
};

struct SplitChoice {
    std::size_t direction = 0;
    double boundary = 0.0;
    double loss = 0.0;
    std::size_t action = 0;
    std::size_t cut = 0;  // size of the first group
};

struct RefineOptions {
    double phi = 0.1;
    std::size_t samples = 1000;
    std::size_t bins = 10;
    double min_frac = 0.1;
    std::size_t leaf_budget = 4096;
    std::uint64_t seed = 0;
    BoundsOptions bounds;
};

struct Leaf {
    Polyhedron piece;
    PolicyAbstraction abstraction;
    bool saturated = false;
};

struct RefineResult {
    std::vector<Leaf> leaves;
    std::size_t examined = 0;
    std::size_t milp_calls = 0;
    bool saturated = false;
    bool uncertified = false;
};

inline SampleSet sample_action_probs(const Network& net, const Polyhedron& p, std::size_t count, std::uint64_t seed) {
    SampleSet out;
    out.points = hit_and_run_sample(p, count, seed);
    out.probs.reserve(out.points.size());
    for (const auto& s : out.points) out.probs.push_back(action_distribution(net, s));
    return out;
}

/// Per-sample weights inversely proportional to the population of the
/// equal-width probability bin each sample falls into, scaled to sum to m.
inline Vector bin_weights(const Vector& y, std::size_t bins) {
    if (bins == 0) throw std::invalid_argument("bins must be positive");
    std::vector<std::size_t> bin(y.size()), count(bins, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        bin[i] = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, y[i]) * static_cast<double>(bins)));
        ++count[bin[i]];
    }
    Vector w(y.size());
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += w[i] = 1.0 / static_cast<double>(count[bin[i]]);
    for (double& v : w) v *= static_cast<double>(y.size()) / total;
    return w;
}

/// Rescales sampled probabilities to the observed [min, max] range, so the
/// 1/0 labelling separates the high and low part of this piece even when all
/// samples sit on one side of 1/2. Constant columns are returned unchanged.
inline Vector relative_probabilities(Vector y) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double a = *lo, range = *hi - *lo;
    if (!(range > 0.0)) return y;
    for (double& v : y) v = (v - a) / range;
    return y;
}

/// Weighted binary cross entropy of labelling the first `cut` samples (in
/// `order`) with 1 and the rest with 0.
inline Vector split_losses(const Vector& y, const Vector& w, const std::vector<std::size_t>& order) {
    const std::size_t m = order.size();
    Vector pos(m + 1, 0.0), neg(m + 1, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = order[r];
        const double p = std::clamp(y[i], tol::kProbClampInLog, 1.0 - tol::kProbClampInLog);
        pos[r + 1] = pos[r] + w[i] * std::log(p);
        neg[r + 1] = neg[r] + w[i] * std::log(1.0 - p);
    }
    Vector loss(m + 1);
    for (std::size_t k = 0; k <= m; ++k) loss[k] = -(pos[k] + (neg[m] - neg[k])) / static_cast<double>(m);
    return loss;
}

inline SplitChoice cross_entropy_split(const SampleSet& samples, const Polyhedron& p, double min_frac,
                                       std::size_t bins = 10) {
    const std::size_t m = samples.size();
    if (m < 2) throw NoValidCut("fewer than two samples");
    const std::size_t k_actions = samples.probs.front().size();

    SplitChoice best;
    double widest = -1.0;
    for (std::size_t a = 0; a < k_actions; ++a) {
        const Vector col = samples.action_column(a);
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        if (*hi - *lo > widest) {
            widest = *hi - *lo;
            best.action = a;
        }
    }
    const Vector y = relative_probabilities(samples.action_column(best.action));
    const Vector w = bin_weights(y, bins);
    const auto& t = *p.tmpl();

    // First pass honours the minimum split fraction; the second accepts any
    // cut between distinct projections (bisect clamps it afterwards).
    for (int pass = 0; pass < 2; ++pass) {
        bool found = false;
        double best_loss = kInf;
        for (std::size_t j = 0; j < t.size(); ++j) {
            const Vector& d = t.direction(j);
            Vector proj(m);
            for (std::size_t i = 0; i < m; ++i) proj[i] = dot(d, samples.points[i]);
            std::vector<std::size_t> order(m);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t z) { return proj[x] < proj[z]; });
            const auto [lo, hi] = p.direction_range(j);
            const double ext = hi - lo;
            const Vector loss = split_losses(y, w, order);
            for (std::size_t k = 1; k < m; ++k) {
                const double a = proj[order[k - 1]], b = proj[order[k]];
                if (!(b > a)) continue;
                const double c = 0.5 * (a + b);
                if (pass == 0 && (c < lo + min_frac * ext || c > hi - min_frac * ext)) continue;
                if (!found || loss[k] < best_loss - 1e-12 * (1.0 + std::abs(best_loss))) {
                    found = true;
                    best_loss = loss[k];
                    best.direction = j;
                    best.cut = k;
                    best.boundary = c;
                    best.loss = loss[k];
                }
            }
        }
        if (found) return best;
    }
    throw NoValidCut("all sample projections coincide");
}

/// Bisects p until every piece has a certified spread of at most phi, or the
/// leaf budget / geometry stops it (such leaves are flagged saturated).
inline RefineResult refine_to_threshold(const Network& net, const Polyhedron& p, const RefineOptions& opt) {
    if (!(opt.phi > 0.0 && opt.phi <= 1.0)) throw ConfigError("phi must be in (0,1]");
    if (opt.leaf_budget == 0) throw ConfigError("leaf budget must be positive");
    if (p.is_empty()) throw EmptyInput("refining an empty polyhedron");

    struct Item {
        Polyhedron piece;
        std::uint64_t seed;
    };
    RefineResult out;
    std::vector<Item> stack{{p, opt.seed}};

    auto finish = [&](const Polyhedron& piece, std::optional<PolicyAbstraction> pa) {
        if (!pa) {
            pa = policy_abstraction(net, piece, opt.bounds);
            ++out.milp_calls;
        }
        Leaf leaf{piece, std::move(*pa), false};
        leaf.saturated = leaf.abstraction.spread > opt.phi;
        out.saturated = out.saturated || leaf.saturated;
        out.uncertified = out.uncertified || !leaf.abstraction.certified;
        out.leaves.push_back(std::move(leaf));
    };

    while (!stack.empty()) {
        Item item = std::move(stack.back());
        stack.pop_back();
        ++out.examined;
        const bool may_split = out.leaves.size() + stack.size() + 2 <= opt.leaf_budget;

        if (!has_interior(item.piece)) {
            finish(item.piece, std::nullopt);
            continue;
        }
        SampleSet samples = sample_action_probs(net, item.piece, opt.samples, item.seed);
        std::optional<PolicyAbstraction> pa;
        if (samples.spread() <= opt.phi || !may_split) {
            pa = policy_abstraction(net, item.piece, opt.bounds);
            ++out.milp_calls;
            if (pa->spread <= opt.phi || !may_split) {
                finish(item.piece, std::move(pa));
                continue;
            }
        }
        try {
            const SplitChoice choice = cross_entropy_split(samples, item.piece, opt.min_frac, opt.bins);
            auto [lower, upper] = bisect(item.piece, choice.direction, choice.boundary, opt.min_frac);
            stack.push_back({std::move(upper), derive_seed(item.seed, 1)});
            stack.push_back({std::move(lower), derive_seed(item.seed, 0)});
        } catch (const DegenerateSplit&) {
            finish(item.piece, std::move(pa));
        } catch (const NoValidCut&) {
            finish(item.piece, std::move(pa));
        }
    }
    return out;
}

}  // namespace pverify
