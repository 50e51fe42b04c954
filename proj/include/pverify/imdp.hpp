#pragma once

// k-step IMDP abstraction of the closed loop and robust value iteration over it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pverify/bounds.hpp"
#include "pverify/envmodel.hpp"
#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"
#include "pverify/neural.hpp"
#include "pverify/parallel.hpp"
#include "pverify/random.hpp"
#include "pverify/refine.hpp"
#include "pverify/tolerances.hpp"

namespace pverify {

enum class VerifyMode { MaxMax, MaxMin };

struct Transition {
    std::size_t target = 0;
    ProbInterval interval;
};

struct Choice {
    std::size_t piece = 0;            // index into AbstractState::pieces
    std::vector<std::size_t> groups;  // dynamics group taken by each action
    std::vector<Transition> transitions;
};

struct AbstractState {
    AbstractState(std::size_t id_, Polyhedron p) : id(id_), polyhedron(std::move(p)) {}

    std::size_t id = 0;
    Polyhedron polyhedron;
    bool fail = false;
    bool cut_off = false;   // labelled fail because the state budget ran out
    bool expanded = false;  // false for fail states and states at the horizon
    std::size_t depth = 0;
    std::vector<Leaf> pieces;
    std::vector<Choice> choices;
};

struct ImdpStats {
    std::size_t polyhedra = 0;  // refinement leaves over all expanded states
    std::size_t containment_merges = 0;
    std::size_t dedup_hits = 0;
    std::size_t clamped_lowers = 0;
    std::size_t milp_calls = 0;
    std::size_t transitions = 0;
    bool budget_exhausted = false;
    bool saturated = false;
    bool uncertified = false;
};

struct Imdp {
    std::vector<AbstractState> states;
    std::vector<std::size_t> initial;
    std::size_t horizon = 0;
    ImdpStats stats;
};

struct BuildOptions {
    std::size_t horizon = 1;
    bool containment = true;
    std::size_t max_states = 100000;
    RefineOptions refine;
    std::size_t threads = 1;
};

namespace detail {

inline std::vector<long long> dedup_key(const Polyhedron& p) {
    std::vector<long long> key(p.bounds().size());
    for (std::size_t j = 0; j < key.size(); ++j) key[j] = std::llround(p.bounds()[j] / tol::kDedupGrid);
    return key;
}

inline Region closure(Region r) {
    for (auto& h : r) h.strict = false;
    return r;
}

// Result of refining one state and computing every piece's successors.
struct PendingChoice {
    std::size_t piece = 0;
    std::vector<std::size_t> groups;
    std::vector<std::size_t> posts;  // per action, index into Expansion::posts
};

struct Expansion {
    RefineResult refined;
    std::vector<Polyhedron> posts;
    std::vector<bool> post_fail;
    std::vector<PendingChoice> choices;
};

inline Expansion expand_state(const Environment& env, const Network& net, const Polyhedron& p,
                              const RefineOptions& ropt) {
    Expansion ex;
    ex.refined = refine_to_threshold(net, p, ropt);
    const std::size_t k = env.num_actions();
    for (std::size_t pi = 0; pi < ex.refined.leaves.size(); ++pi) {
        const Polyhedron& piece = ex.refined.leaves[pi].piece;
        struct Group {
            std::size_t id;
            std::vector<Region> guards;
            std::size_t post;
        };
        std::vector<std::vector<Group>> by_action(k);
        for (std::size_t a = 0; a < k; ++a) {
            std::map<std::size_t, std::pair<std::vector<Region>, Vector>> groups;
            for (auto& mp : env.abstract_post(piece, a)) {
                auto [it, fresh] = groups.try_emplace(mp.group, std::vector<Region>{}, mp.post.bounds());
                it->second.first.push_back(closure(mp.guard));
                if (!fresh)
                    for (std::size_t j = 0; j < it->second.second.size(); ++j)
                        it->second.second[j] = std::max(it->second.second[j], mp.post.bounds()[j]);
            }
            for (auto& [gid, g] : groups) {
                ex.posts.emplace_back(piece.tmpl(), std::move(g.second));
                ex.post_fail.push_back(env.label_fail(ex.posts.back()));
                by_action[a].push_back(Group{gid, std::move(g.first), ex.posts.size() - 1});
            }
        }
        const bool single = std::all_of(by_action.begin(), by_action.end(), [](const auto& g) { return g.size() == 1; });
        // Enumerate group combinations; keep those whose guards jointly meet the piece.
        std::vector<std::size_t> idx(k, 0);
        while (true) {
            bool feasible = single;
            if (!feasible) {
                std::vector<std::size_t> mi(k, 0);
                while (!feasible) {
                    Region joint;
                    for (std::size_t a = 0; a < k; ++a) {
                        const Region& g = by_action[a][idx[a]].guards[mi[a]];
                        joint.insert(joint.end(), g.begin(), g.end());
                    }
                    feasible = joint.empty() || intersects_region(piece, joint);
                    std::size_t a = 0;
                    for (; a < k; ++a) {
                        if (++mi[a] < by_action[a][idx[a]].guards.size()) break;
                        mi[a] = 0;
                    }
                    if (a == k) break;
                }
            }
            if (feasible) {
                PendingChoice c;
                c.piece = pi;
                for (std::size_t a = 0; a < k; ++a) {
                    c.groups.push_back(by_action[a][idx[a]].id);
                    c.posts.push_back(by_action[a][idx[a]].post);
                }
                ex.choices.push_back(std::move(c));
            }
            std::size_t a = 0;
            for (; a < k; ++a) {
                if (++idx[a] < by_action[a].size()) break;
                idx[a] = 0;
            }
            if (a == k) break;
        }
    }
    return ex;
}

}  // namespace detail

/// Interval consistency of a choice: sum of lowers <= 1 <= sum of uppers.
inline bool intervals_consistent(const std::vector<Transition>& ts, double eps = tol::kIntervalSum) {
    double lo = 0.0, hi = 0.0;
    for (const auto& t : ts) {
        if (t.interval.lower > t.interval.upper) return false;
        lo += t.interval.lower;
        hi += t.interval.upper;
    }
    return lo <= 1.0 + eps && hi >= 1.0 - eps;
}

/// Breadth-first unfolding of the closed loop from `initial` up to the horizon.
/// The initial region is refined first and every resulting piece becomes an
/// initial abstract state.
inline Imdp build_abstraction(const Environment& env, const Network& net, const Polyhedron& initial,
                              const BuildOptions& opt) {
    if (opt.horizon == 0) throw ConfigError("horizon must be at least 1");
    if (net.input_dim != env.dimension() || net.output_dim != env.num_actions())
        throw ConfigError("network shape does not match the environment");
    if (initial.dimension() != env.dimension()) throw DimensionError("initial region dimension differs from environment");

    Imdp m;
    m.horizon = opt.horizon;
    std::map<std::vector<long long>, std::size_t> index;
    std::vector<std::size_t> frontier;

    auto add_state = [&](const Polyhedron& p, std::size_t depth, std::optional<bool> fail) {
        AbstractState s(m.states.size(), p);
        s.depth = depth;
        s.fail = fail ? *fail : env.label_fail(p);
        index.emplace(detail::dedup_key(p), s.id);
        if (!s.fail && depth < opt.horizon) frontier.push_back(s.id);
        m.states.push_back(std::move(s));
        return m.states.back().id;
    };

    // Initial states: the pieces of the refined initial region.
    {
        RefineOptions ropt = opt.refine;
        ropt.seed = derive_seed(opt.refine.seed, 0x1a17);
        const RefineResult init = refine_to_threshold(net, initial, ropt);
        m.stats.milp_calls += init.milp_calls;
        for (const auto& leaf : init.leaves) {
            auto it = index.find(detail::dedup_key(leaf.piece));
            const std::size_t id = it != index.end() ? it->second : add_state(leaf.piece, 0, std::nullopt);
            if (std::find(m.initial.begin(), m.initial.end(), id) == m.initial.end()) m.initial.push_back(id);
        }
    }

    auto resolve = [&](const Polyhedron& p, bool fail, std::size_t depth) -> std::size_t {
        if (auto it = index.find(detail::dedup_key(p)); it != index.end()) {
            ++m.stats.dedup_hits;
            return it->second;
        }
        if (opt.containment && !fail) {
            for (const auto& s : m.states)
                if (!s.fail && contains(s.polyhedron, p)) {
                    ++m.stats.containment_merges;
                    return s.id;
                }
        }
        return add_state(p, depth, fail);
    };

    while (!frontier.empty()) {
        const std::vector<std::size_t> level = std::move(frontier);
        frontier.clear();
        std::vector<detail::Expansion> results(level.size());
        parallel_for(level.size(), opt.threads, [&](std::size_t i) {
            const AbstractState& s = m.states[level[i]];
            RefineOptions ropt = opt.refine;
            ropt.seed = derive_seed(opt.refine.seed, s.id + 1);
            results[i] = detail::expand_state(env, net, s.polyhedron, ropt);
        });

        for (std::size_t i = 0; i < level.size(); ++i) {
            const std::size_t sid = level[i];
            if (m.states.size() >= opt.max_states) {
                // Out of budget: the rest of this level is cut off.
                for (std::size_t r = i; r < level.size(); ++r) {
                    m.states[level[r]].fail = true;
                    m.states[level[r]].cut_off = true;
                }
                m.stats.budget_exhausted = true;
                break;
            }
            detail::Expansion& ex = results[i];
            m.stats.milp_calls += ex.refined.milp_calls;
            m.stats.saturated = m.stats.saturated || ex.refined.saturated;
            m.stats.uncertified = m.stats.uncertified || ex.refined.uncertified;
            m.stats.polyhedra += ex.refined.leaves.size();
            const std::size_t depth = m.states[sid].depth + 1;

            std::vector<std::size_t> post_ids(ex.posts.size());
            for (std::size_t q = 0; q < ex.posts.size(); ++q) post_ids[q] = resolve(ex.posts[q], ex.post_fail[q], depth);

            std::vector<Choice> choices;
            for (const auto& pc : ex.choices) {
                Choice c{pc.piece, pc.groups, {}};
                const auto& intervals = ex.refined.leaves[pc.piece].abstraction.intervals;
                std::map<std::size_t, ProbInterval> sums;
                for (std::size_t a = 0; a < pc.posts.size(); ++a) {
                    auto& iv = sums.try_emplace(post_ids[pc.posts[a]], ProbInterval{0.0, 0.0}).first->second;
                    iv.lower += intervals[a].lower;
                    iv.upper += intervals[a].upper;
                }
                for (auto& [target, iv] : sums) {
                    if (iv.lower < tol::kMinTransitionLower) {
                        iv.lower = tol::kMinTransitionLower;
                        ++m.stats.clamped_lowers;
                    }
                    iv.upper = std::min(1.0, std::max(iv.upper, iv.lower));
                    c.transitions.push_back(Transition{target, iv});
                }
                if (!intervals_consistent(c.transitions))
                    throw InfeasibleIntervals("choice of state " + std::to_string(sid) + " violates interval consistency");
                m.stats.transitions += c.transitions.size();
                choices.push_back(std::move(c));
            }
            AbstractState& s = m.states[sid];
            s.pieces = std::move(ex.refined.leaves);
            s.choices = std::move(choices);
            s.expanded = true;
        }
        if (m.stats.budget_exhausted) {
            for (std::size_t id : frontier) {
                m.states[id].fail = true;
                m.states[id].cut_off = true;
            }
            frontier.clear();
        }
    }
    return m;
}

/// Inner optimum of sum_t p(t) v(t) over distributions inside the intervals.
/// Conservative mode instead takes every upper bound, without normalization,
/// capped at 1.
inline double robust_step(const Vector& values, const std::vector<Transition>& ts, VerifyMode mode,
                          bool conservative = false) {
    if (ts.empty()) throw InfeasibleIntervals("state has no transitions");
    double lo = 0.0, hi = 0.0;
    for (const auto& t : ts) {
        lo += t.interval.lower;
        hi += t.interval.upper;
    }
    if (lo > 1.0 + tol::kIntervalSum || hi < 1.0 - tol::kIntervalSum)
        throw InfeasibleIntervals("interval sums [" + std::to_string(lo) + ", " + std::to_string(hi) + "] exclude 1");
    if (conservative) {
        double s = 0.0;
        for (const auto& t : ts) s += t.interval.upper * values[t.target];
        return std::min(1.0, s);
    }
    std::vector<std::size_t> order(ts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = values[ts[a].target], vb = values[ts[b].target];
        return mode == VerifyMode::MaxMax ? va > vb : va < vb;
    });
    double remaining = std::max(0.0, 1.0 - lo);
    double result = 0.0;
    for (std::size_t i : order) {
        const double extra = std::min(remaining, ts[i].interval.upper - ts[i].interval.lower);
        remaining -= extra;
        result += (ts[i].interval.lower + extra) * values[ts[i].target];
    }
    return std::clamp(result, 0.0, 1.0);
}

/// values[t][s]: probability bound of reaching fail from s within t steps.
using ValueTable = std::vector<Vector>;

inline ValueTable robust_value_iteration(const Imdp& m, std::size_t k, VerifyMode mode, bool conservative = false,
                                         std::size_t threads = 1) {
    const std::size_t n = m.states.size();
    ValueTable v(k + 1, Vector(n, 0.0));
    for (std::size_t s = 0; s < n; ++s) v[0][s] = m.states[s].fail ? 1.0 : 0.0;
    for (std::size_t t = 1; t <= k; ++t) {
        const Vector& prev = v[t - 1];
        Vector& cur = v[t];
        parallel_for(n, threads, [&](std::size_t s) {
            const AbstractState& st = m.states[s];
            if (st.fail) {
                cur[s] = 1.0;
                return;
            }
            if (!st.expanded) return;
            double best = 0.0;
            for (const auto& c : st.choices) best = std::max(best, robust_step(prev, c.transitions, mode, conservative));
            cur[s] = best;
        });
    }
    return v;
}

/// Index of the first initial state containing s, if any.
inline std::optional<std::size_t> covering_initial_state(const Imdp& m, const Point& s) {
    for (std::size_t id : m.initial)
        if (m.states[id].polyhedron.contains_point(s)) return id;
    return std::nullopt;
}

struct StateBound {
    std::size_t initial_state_id = 0;
    double maxmax = 0.0;
    double maxmin = 0.0;
};

struct VerifyReport {
    std::vector<StateBound> bounds;
    double global_maxmax = 0.0;
    double global_maxmin = 0.0;
    std::optional<double> p_safe;
    std::optional<bool> pass;
    ImdpStats stats;
    std::size_t imdp_states = 0;
    double wall_clock_s = 0.0;
    std::vector<std::string> flags;
};

struct VerifyOptions {
    BuildOptions build;
    bool conservative = false;
    std::optional<double> p_safe;
};

inline VerifyReport summarize(const Imdp& m, const VerifyOptions& opt, std::size_t threads = 1) {
    VerifyReport r;
    const ValueTable hi = robust_value_iteration(m, m.horizon, VerifyMode::MaxMax, opt.conservative, threads);
    const ValueTable lo = robust_value_iteration(m, m.horizon, VerifyMode::MaxMin, opt.conservative, threads);
    for (std::size_t id : m.initial) {
        r.bounds.push_back(StateBound{id, hi[m.horizon][id], lo[m.horizon][id]});
        r.global_maxmax = std::max(r.global_maxmax, hi[m.horizon][id]);
        r.global_maxmin = std::max(r.global_maxmin, lo[m.horizon][id]);
    }
    r.p_safe = opt.p_safe;
    if (opt.p_safe) r.pass = r.global_maxmax <= *opt.p_safe;
    r.stats = m.stats;
    r.imdp_states = m.states.size();
    if (m.stats.uncertified) r.flags.push_back("uncertified");
    if (m.stats.saturated) r.flags.push_back("saturated");
    if (m.stats.budget_exhausted) r.flags.push_back("budget_exhausted");
    if (m.stats.clamped_lowers > 0) r.flags.push_back("clamped_lowers");
    return r;
}

/// Builds the abstraction over `initial` and solves it in both modes.
inline VerifyReport verify(const Environment& env, const Network& net, const Polyhedron& initial,
                           const VerifyOptions& opt, Imdp* keep = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    Imdp m = build_abstraction(env, net, initial, opt.build);
    VerifyReport r = summarize(m, opt, opt.build.threads);
    r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (keep) *keep = std::move(m);
    return r;
}

/// Line-oriented dump: header lines for initial and fail ids, then one line
/// per transition `state choice target lower upper`.
inline void write_imdp(std::ostream& out, const Imdp& m) {
    char buf[128];
    out << "initial";
    for (std::size_t id : m.initial) out << ' ' << id;
    out << "\nfail";
    for (const auto& s : m.states)
        if (s.fail) out << ' ' << s.id;
    out << '\n';
    for (const auto& s : m.states)
        for (std::size_t c = 0; c < s.choices.size(); ++c)
            for (const auto& t : s.choices[c].transitions) {
                std::snprintf(buf, sizeof buf, "%zu %zu %zu %.17g %.17g\n", s.id, c, t.target, t.interval.lower,
                              t.interval.upper);
                out << buf;
            }
}

}  // namespace pverify
