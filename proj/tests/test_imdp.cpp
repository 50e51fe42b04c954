#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "pverify/imdp.hpp"
#include "pverify/oracle.hpp"

using namespace pverify;
using nlohmann::json;

namespace {

// x' = x - 1 (down) or x' = x (stay); fail when x < 0.
EnvironmentPtr walk_env(double lo = 2.5, double hi = 3.0) {
    return std::make_shared<CustomAffineEnvironment>(json{
        {"dimension", 1},
        {"actions",
         {{{"name", "down"}, {"modes", {{{"A", {{1.0}}}, {"c", {-1.0}}}}}},
          {{"name", "stay"}, {"modes", {{{"A", {{1.0}}}, {"c", {0.0}}}}}}}},
        {"fail", {{{{"normal", {1.0}}, {"offset", 0.0}, {"strict", true}}}}},
        {"initial", {{"lower", {lo}}, {"upper", {hi}}}}});
}

// Drifts right forever; the fail region x < -100 is never reached.
EnvironmentPtr drift_env() {
    return std::make_shared<CustomAffineEnvironment>(json{
        {"dimension", 1},
        {"actions",
         {{{"name", "a"}, {"modes", {{{"A", {{1.0}}}, {"c", {1.0}}}}}},
          {{"name", "b"}, {"modes", {{{"A", {{1.0}}}, {"c", {2.0}}}}}}}},
        {"fail", {{{{"normal", {1.0}}, {"offset", -100.0}, {"strict", true}}}}},
        {"initial", {{"lower", {0.0}}, {"upper", {0.0}}}}});
}

// Two regimes split at x = 0 for the "flip" action, giving two dynamics groups.
EnvironmentPtr regime_env() {
    return std::make_shared<CustomAffineEnvironment>(json{
        {"dimension", 1},
        {"actions",
         {{{"name", "keep"}, {"modes", {{{"A", {{0.9}}}, {"c", {0.0}}}}}},
          {{"name", "flip"},
           {"modes",
            {{{"guard", {{{"normal", {1.0}}, {"offset", 0.0}}}}, {"A", {{1.0}}}, {"c", {-0.5}}, {"group", 0}},
             {{"guard", {{{"normal", {-1.0}}, {"offset", 0.0}, {"strict", true}}}},
              {"A", {{1.0}}},
              {"c", {0.4}},
              {"group", 1}}}}}}},
        {"fail", {{{{"normal", {1.0}}, {"offset", -1.5}, {"strict", true}}}}},
        {"initial", {{"lower", {-1.0}}, {"upper", {1.0}}}}});
}

BuildOptions options(std::size_t k, double phi = 0.2) {
    BuildOptions o;
    o.horizon = k;
    o.refine.phi = phi;
    o.refine.samples = 200;
    return o;
}

Imdp chain(double q) {
    Imdp m;
    m.horizon = 5;
    const auto t = Template::rect(1);
    AbstractState a(0, Polyhedron::box(t, {0.0}, {1.0}));
    a.expanded = true;
    a.choices.push_back(Choice{0, {}, {{0, {1.0 - q, 1.0 - q}}, {1, {q, q}}}});
    AbstractState f(1, Polyhedron::box(t, {-1.0}, {0.0}));
    f.fail = true;
    m.states = {a, f};
    m.initial = {0};
    return m;
}

}  // namespace

TEST(RobustStep, SpecExamples) {
    const std::vector<Transition> ts{{0, {0.1, 0.5}}, {1, {0.6, 0.9}}};
    const Vector values{1.0, 0.0};
    EXPECT_NEAR(robust_step(values, ts, VerifyMode::MaxMax), 0.4, 1e-15);
    EXPECT_NEAR(robust_step(values, ts, VerifyMode::MaxMin), 0.1, 1e-15);
}

TEST(RobustStep, PointIntervalsGiveExpectation) {
    const std::vector<Transition> ts{{0, {0.2, 0.2}}, {1, {0.5, 0.5}}, {2, {0.3, 0.3}}};
    const Vector values{0.1, 0.7, 0.4};
    const double e = 0.2 * 0.1 + 0.5 * 0.7 + 0.3 * 0.4;
    EXPECT_NEAR(robust_step(values, ts, VerifyMode::MaxMax), e, 1e-15);
    EXPECT_NEAR(robust_step(values, ts, VerifyMode::MaxMin), e, 1e-15);
}

TEST(RobustStep, InconsistentIntervalsThrow) {
    const Vector values{1.0, 0.0};
    EXPECT_THROW(robust_step(values, {{0, {0.6, 0.7}}, {1, {0.6, 0.7}}}, VerifyMode::MaxMax), InfeasibleIntervals);
    EXPECT_THROW(robust_step(values, {{0, {0.1, 0.3}}, {1, {0.1, 0.3}}}, VerifyMode::MaxMax), InfeasibleIntervals);
    EXPECT_THROW(robust_step(values, {}, VerifyMode::MaxMax), InfeasibleIntervals);
}

TEST(RobustStep, ConservativeDominatesNormalized) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        const auto iv = oracle::random_intervals(rng, n);
        std::vector<Transition> ts;
        Vector values(n);
        for (std::size_t i = 0; i < n; ++i) {
            ts.push_back({i, iv[i]});
            values[i] = rng.uniform();
        }
        const double normal = robust_step(values, ts, VerifyMode::MaxMax);
        const double cons = robust_step(values, ts, VerifyMode::MaxMax, true);
        EXPECT_GE(cons, normal - 1e-15);
        EXPECT_LE(cons, 1.0);
    }
}

TEST(RobustStep, MatchesVertexEnumeration) {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        const auto iv = oracle::random_intervals(rng, n);
        std::vector<Transition> ts;
        Vector values(n), lo, hi;
        for (std::size_t i = 0; i < n; ++i) {
            ts.push_back({i, iv[i]});
            values[i] = rng.uniform();
            lo.push_back(iv[i].lower);
            hi.push_back(iv[i].upper);
        }
        double best = -1.0, worst = 2.0;
        for (const auto& p : oracle::interval_vertices(lo, hi)) {
            double e = 0.0;
            for (std::size_t i = 0; i < n; ++i) e += p[i] * values[i];
            best = std::max(best, e);
            worst = std::min(worst, e);
        }
        EXPECT_NEAR(robust_step(values, ts, VerifyMode::MaxMax), best, 1e-12);
        EXPECT_NEAR(robust_step(values, ts, VerifyMode::MaxMin), worst, 1e-12);
    }
}

TEST(ValueIteration, ChainClosedForm) {
    const Imdp m = chain(0.1);
    const ValueTable v = robust_value_iteration(m, 5, VerifyMode::MaxMax);
    EXPECT_NEAR(v[5][0], 0.40951, 1e-12);
    for (std::size_t t = 0; t <= 5; ++t) EXPECT_NEAR(v[t][0], 1.0 - std::pow(0.9, static_cast<double>(t)), 1e-12);
}

TEST(ValueIteration, FailStateIsOneAtEveryHorizon) {
    const Imdp m = chain(0.1);
    const ValueTable v = robust_value_iteration(m, 7, VerifyMode::MaxMin);
    for (const auto& row : v) EXPECT_EQ(row[1], 1.0);
}

TEST(ValueIteration, MatchesBruteForceOnSmallImdps) {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng.below(3);
        const std::size_t k = 1 + rng.below(5);
        const Imdp m = oracle::random_imdp(rng, n, k);
        const ValueTable hi = robust_value_iteration(m, k, VerifyMode::MaxMax);
        const ValueTable lo = robust_value_iteration(m, k, VerifyMode::MaxMin);
        const Vector bf_hi = oracle::brute_force_values(m, k, true);
        const Vector bf_lo = oracle::brute_force_values(m, k, false);
        for (std::size_t s = 0; s < n; ++s) {
            EXPECT_NEAR(hi[k][s], bf_hi[s], 1e-9);
            EXPECT_NEAR(lo[k][s], bf_lo[s], 1e-9);
        }
    }
}

TEST(ValueIteration, MonotoneInHorizonAndOrdered) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Imdp m = oracle::random_imdp(rng, 4, 8);
        const ValueTable hi = robust_value_iteration(m, 8, VerifyMode::MaxMax);
        const ValueTable lo = robust_value_iteration(m, 8, VerifyMode::MaxMin);
        for (std::size_t t = 1; t <= 8; ++t)
            for (std::size_t s = 0; s < 4; ++s) {
                EXPECT_GE(hi[t][s], hi[t - 1][s] - 1e-15);
                EXPECT_LE(lo[t][s], hi[t][s] + 1e-15);
            }
    }
}

TEST(BuildAbstraction, UnreachableFailGivesZero) {
    const auto env = drift_env();
    const Network net = oracle::constant_policy(1, {0.5, 0.5});
    const auto t = Template::rect(1);
    VerifyOptions o;
    o.build = options(4);
    o.p_safe = 0.0;
    const VerifyReport r = verify(*env, net, env->initial_polyhedron(t), o);
    EXPECT_EQ(r.global_maxmax, 0.0);
    EXPECT_EQ(r.global_maxmin, 0.0);
    ASSERT_TRUE(r.pass.has_value());
    EXPECT_TRUE(*r.pass);
}

TEST(BuildAbstraction, ConstantPolicyWalkMatchesHandValue) {
    const auto env = walk_env();
    const Network net = oracle::constant_policy(1, {0.3, 0.7});
    const auto t = Template::rect(1);
    Imdp m;
    VerifyOptions o;
    o.build = options(3);
    const VerifyReport r = verify(*env, net, env->initial_polyhedron(t), o, &m);
    // Three downs reach [-0.5, 0], whose closure touches the fail region.
    EXPECT_NEAR(r.global_maxmax, 0.027, 1e-9);
    EXPECT_LE(r.global_maxmin, r.global_maxmax);
    EXPECT_NEAR(exact_tree_probability(*env, net, {2.7}, 3), 0.027, 1e-15);
    EXPECT_EQ(exact_tree_probability(*env, net, {3.0}, 3), 0.0);
}

TEST(BuildAbstraction, InitialStateInFail) {
    const auto env = walk_env(-1.0, -0.5);
    const Network net = oracle::constant_policy(1, {0.5, 0.5});
    VerifyOptions o;
    o.build = options(3);
    const VerifyReport r = verify(*env, net, env->initial_polyhedron(Template::rect(1)), o);
    EXPECT_EQ(r.global_maxmax, 1.0);
    EXPECT_EQ(r.global_maxmin, 1.0);
}

TEST(BuildAbstraction, StructuralInvariants) {
    const auto env = regime_env();
    Rng rng(8);
    const Network net = oracle::random_network(rng, {1, 6, 2}, 1.5);
    Imdp m = build_abstraction(*env, net, env->initial_polyhedron(Template::rect(1)), options(4));
    ASSERT_FALSE(m.initial.empty());
    // Initial states cover the initial region.
    for (const auto& x : oracle::uniform_box_points(rng, {-1.0}, {1.0}, 500))
        EXPECT_TRUE(covering_initial_state(m, x).has_value()) << x[0];
    bool two_groups = false;
    for (const auto& s : m.states) {
        if (s.fail) {
            EXPECT_TRUE(s.choices.empty());
        }
        if (!s.expanded) continue;
        EXPECT_LT(s.depth, m.horizon);
        for (const auto& c : s.choices) {
            EXPECT_TRUE(intervals_consistent(c.transitions));
            for (const auto& tr : c.transitions) {
                EXPECT_GT(tr.interval.lower, 0.0);
                EXPECT_LE(tr.interval.upper, 1.0);
                // Breadth-first order: targets are never discovered later than the next level.
                EXPECT_LE(m.states[tr.target].depth, s.depth + 1);
            }
            two_groups = two_groups || c.groups[1] == 1;
        }
    }
    EXPECT_TRUE(two_groups);
}

TEST(BuildAbstraction, GroupChoicesRespectJointGuards) {
    const auto env = regime_env();
    const Network net = oracle::constant_policy(1, {0.5, 0.5});
    auto groups_over = [&](double lo, double hi) {
        Imdp m = build_abstraction(*env, net, Polyhedron::box(Template::rect(1), {lo}, {hi}), options(1));
        std::vector<std::size_t> g;
        for (std::size_t id : m.initial)
            for (const auto& c : m.states[id].choices) g.push_back(c.groups[1]);
        return g;
    };
    EXPECT_EQ(groups_over(-1.0, -0.5), (std::vector<std::size_t>{0}));
    EXPECT_EQ(groups_over(0.5, 1.0), (std::vector<std::size_t>{1}));
    // Straddling the switch: both regimes are possible.
    EXPECT_EQ(groups_over(-0.5, 0.5), (std::vector<std::size_t>{0, 1}));
}

TEST(BuildAbstraction, ContainmentNeverTightensAndShrinksGraph) {
    const auto env = regime_env();
    Rng rng(21);
    const Network net = oracle::random_network(rng, {1, 6, 2}, 1.5);
    VerifyOptions on, off;
    on.build = off.build = options(5);
    off.build.containment = false;
    const auto init = env->initial_polyhedron(Template::rect(1));
    const VerifyReport a = verify(*env, net, init, on), b = verify(*env, net, init, off);
    EXPECT_GE(a.global_maxmax, b.global_maxmax - 1e-12);
    EXPECT_LE(a.imdp_states, b.imdp_states);
}

TEST(BuildAbstraction, StateBudgetCutsFrontierToFail) {
    const auto env = walk_env();
    const Network net = oracle::constant_policy(1, {0.3, 0.7});
    BuildOptions o = options(6);
    o.max_states = 3;
    const Imdp m = build_abstraction(*env, net, env->initial_polyhedron(Template::rect(1)), o);
    EXPECT_TRUE(m.stats.budget_exhausted);
    bool cut = false;
    for (const auto& s : m.states)
        if (s.cut_off) {
            cut = true;
            EXPECT_TRUE(s.fail);
        }
    EXPECT_TRUE(cut);
    // Over-approximation: the cut bound is no smaller than the full one.
    VerifyOptions full;
    full.build = options(6);
    const double exact_bound = verify(*env, net, env->initial_polyhedron(Template::rect(1)), full).global_maxmax;
    VerifyOptions cutv;
    cutv.build = o;
    EXPECT_GE(verify(*env, net, env->initial_polyhedron(Template::rect(1)), cutv).global_maxmax, exact_bound);
}

TEST(BuildAbstraction, SoundAgainstExactTreeOnRandomPolicies) {
    const auto env = regime_env();
    Rng rng(123);
    for (int net_i = 0; net_i < 3; ++net_i) {
        const Network net = oracle::random_network(rng, {1, 5, 2}, 1.5);
        const std::size_t k = 5;
        Imdp m;
        VerifyOptions o;
        o.build = options(k, 0.15);
        verify(*env, net, env->initial_polyhedron(Template::rect(1)), o, &m);
        const ValueTable v = robust_value_iteration(m, k, VerifyMode::MaxMax);
        for (const auto& x : oracle::uniform_box_points(rng, {-1.0}, {1.0}, 10)) {
            const auto id = covering_initial_state(m, x);
            ASSERT_TRUE(id.has_value());
            EXPECT_LE(exact_tree_probability(*env, net, x, k), v[k][*id]) << x[0];
        }
    }
}

TEST(ImdpDump, LinesMatchTransitions) {
    const auto env = walk_env();
    const Network net = oracle::constant_policy(1, {0.3, 0.7});
    const Imdp m = build_abstraction(*env, net, env->initial_polyhedron(Template::rect(1)), options(3));
    std::ostringstream out;
    write_imdp(out, m);
    std::istringstream in(out.str());
    std::string word;
    in >> word;
    EXPECT_EQ(word, "initial");
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    EXPECT_EQ(line.rfind("fail", 0), 0u);
    std::size_t count = 0;
    std::size_t s, c, t;
    double lo, hi;
    while (in >> s >> c >> t >> lo >> hi) {
        const auto& tr = m.states[s].choices[c].transitions;
        const auto it = std::find_if(tr.begin(), tr.end(), [&](const Transition& x) { return x.target == t; });
        ASSERT_NE(it, tr.end());
        EXPECT_EQ(it->interval.lower, lo);
        EXPECT_EQ(it->interval.upper, hi);
        ++count;
    }
    EXPECT_EQ(count, m.stats.transitions);
}

TEST(BuildAbstraction, DeterministicAcrossThreadCounts) {
    const auto env = regime_env();
    Rng rng(4);
    const Network net = oracle::random_network(rng, {1, 6, 2}, 1.5);
    BuildOptions one = options(4), two = options(4);
    two.threads = 3;
    const auto init = env->initial_polyhedron(Template::rect(1));
    std::ostringstream a, b;
    write_imdp(a, build_abstraction(*env, net, init, one));
    write_imdp(b, build_abstraction(*env, net, init, two));
    EXPECT_EQ(a.str(), b.str());
}
