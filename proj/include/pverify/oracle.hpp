#pragma once

// Concrete closed-loop execution: sampled traces, Monte Carlo failure
// estimates and the exact finite-tree failure probability.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <tuple>
#include <utility>
#include <vector>

#include "pverify/envmodel.hpp"
#include "pverify/errors.hpp"
#include "pverify/neural.hpp"
#include "pverify/parallel.hpp"
#include "pverify/random.hpp"

namespace pverify {

struct Trace {
    std::vector<Point> states;  // s_0 ... s_T
    std::vector<std::size_t> actions;
    bool failed = false;
};

inline Trace simulate_trace(const Environment& env, const Network& net, const Point& s0, std::size_t k,
                            std::uint64_t seed) {
    if (s0.size() != env.dimension()) throw DimensionError("initial point dimension differs from environment");
    Rng rng(seed);
    Trace tr;
    tr.states.push_back(s0);
    tr.failed = env.is_fail(s0);
    for (std::size_t t = 0; t < k && !tr.failed; ++t) {
        const std::size_t a = rng.categorical(action_distribution(net, tr.states.back()));
        tr.actions.push_back(a);
        tr.states.push_back(env.step(tr.states.back(), a));
        tr.failed = env.is_fail(tr.states.back());
    }
    return tr;
}

/// One line per step: `t s_0 .. s_n-1 action`, the final state without action.
inline void write_trace(std::ostream& out, const Trace& tr) {
    char buf[64];
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
        out << t;
        for (double x : tr.states[t]) {
            std::snprintf(buf, sizeof buf, " %.17g", x);
            out << buf;
        }
        if (t < tr.actions.size()) out << ' ' << tr.actions[t];
        out << '\n';
    }
    out << (tr.failed ? "failed\n" : "safe\n");
}

struct McEstimate {
    double estimate = 0.0;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

/// 95% Wilson score interval for `failures` out of `trials`.
inline std::pair<double, double> wilson_interval(std::size_t failures, std::size_t trials, double z = 1.959963984540054) {
    const double n = static_cast<double>(trials), ph = static_cast<double>(failures) / n;
    const double denom = 1.0 + z * z / n;
    const double centre = (ph + z * z / (2.0 * n)) / denom;
    const double half = z * std::sqrt(ph * (1.0 - ph) / n + z * z / (4.0 * n * n)) / denom;
    double lo = std::max(0.0, centre - half), hi = std::min(1.0, centre + half);
    if (failures == 0) lo = 0.0;
    if (failures == trials) hi = 1.0;
    return {std::min(lo, ph), std::max(hi, ph)};
}

inline McEstimate mc_failure_estimate(const Environment& env, const Network& net, const Point& s0, std::size_t k,
                                      std::size_t trials, std::uint64_t seed, std::size_t threads = 1) {
    if (trials == 0) throw ConfigError("trials must be at least 1");
    std::vector<std::uint8_t> failed(trials, 0);
    parallel_for(trials, threads, [&](std::size_t i) {
        failed[i] = simulate_trace(env, net, s0, k, derive_seed(seed, i)).failed ? 1 : 0;
    });
    McEstimate out;
    out.trials = trials;
    for (auto f : failed) out.failures += f;
    out.estimate = static_cast<double>(out.failures) / static_cast<double>(trials);
    std::tie(out.ci_lo, out.ci_hi) = wilson_interval(out.failures, trials);
    return out;
}

inline constexpr double kTreeCap = 1e7;

namespace detail {

inline double tree_rec(const Environment& env, const Network& net, const Point& s, std::size_t k) {
    if (env.is_fail(s)) return 1.0;
    if (k == 0) return 0.0;
    const Vector pi = action_distribution(net, s);
    // Actions with bitwise identical successors are merged.
    std::vector<Point> succ;
    std::vector<double> mass;
    for (std::size_t a = 0; a < pi.size(); ++a) {
        Point next = env.step(s, a);
        std::size_t i = 0;
        while (i < succ.size() && succ[i] != next) ++i;
        if (i == succ.size()) {
            succ.push_back(std::move(next));
            mass.push_back(0.0);
        }
        mass[i] += pi[a];
    }
    double v = 0.0;
    for (std::size_t i = 0; i < succ.size(); ++i) v += mass[i] * tree_rec(env, net, succ[i], k - 1);
    return v;
}

}  // namespace detail

/// Exact k-step failure probability of the concrete process from s0.
inline double exact_tree_probability(const Environment& env, const Network& net, const Point& s0, std::size_t k) {
    if (s0.size() != env.dimension()) throw DimensionError("initial point dimension differs from environment");
    if (std::pow(static_cast<double>(env.num_actions()), static_cast<double>(k)) > kTreeCap)
        throw CapExceeded("|A|^k exceeds " + std::to_string(static_cast<long long>(kTreeCap)));
    return detail::tree_rec(env, net, s0, k);
}

}  // namespace pverify
