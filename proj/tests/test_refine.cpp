#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pverify/refine.hpp"

using namespace pverify;
using nlohmann::json;

namespace {

Network constant_net() {
    return load_network(json::parse(R"({"inputs": 2, "actions": 2, "layers": [
        {"weights": [[0, 0], [0, 0]], "bias": [0, 0], "activation": "relu"},
        {"weights": [[0, 0], [0, 0]], "bias": [0, 0], "activation": "linear"}]})"));
}

// Steep logistic in x around 0.5: logit difference 40 (x - 0.5).
Network step_net() {
    return load_network(json::parse(R"({"inputs": 2, "actions": 2, "layers": [
        {"weights": [[20, 0], [-20, 0]], "bias": [-10, 10], "activation": "relu"},
        {"weights": [[1, -1], [-1, 1]], "bias": [0, 0], "activation": "linear"}]})"));
}

Network fixture(const char* name) {
    return load_network_file(std::string(PVERIFY_FIXTURES) + "/networks/" + name + ".json");
}

SampleSet manual_samples(const std::vector<Point>& pts, const Vector& p_action0) {
    SampleSet s;
    s.points = pts;
    for (double p : p_action0) s.probs.push_back({p, 1.0 - p});
    return s;
}

// Every cut of every direction, evaluated without prefix sums.
double brute_best_loss(const SampleSet& s, const Polyhedron& p, std::size_t action, std::size_t bins, double min_frac) {
    const Vector y = relative_probabilities(s.action_column(action));
    const Vector w = bin_weights(y, bins);
    double best = kInf;
    for (std::size_t j = 0; j < p.tmpl()->size(); ++j) {
        const auto& d = p.tmpl()->direction(j);
        std::vector<std::size_t> order(s.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](auto a, auto b) { return dot(d, s.points[a]) < dot(d, s.points[b]); });
        const auto [lo, hi] = p.direction_range(j);
        for (std::size_t k = 1; k < s.size(); ++k) {
            const double a = dot(d, s.points[order[k - 1]]), b = dot(d, s.points[order[k]]);
            const double c = 0.5 * (a + b);
            if (!(b > a) || c < lo + min_frac * (hi - lo) || c > hi - min_frac * (hi - lo)) continue;
            double h = 0;
            for (std::size_t r = 0; r < s.size(); ++r) {
                const double q = std::clamp(y[order[r]], 1e-7, 1 - 1e-7);
                h -= w[order[r]] * (r < k ? std::log(q) : std::log(1 - q));
            }
            best = std::min(best, h / s.size());
        }
    }
    return best;
}

}  // namespace

TEST(SampleActionProbs, ConstantNet) {
    const auto s = sample_action_probs(constant_net(), Polyhedron::box(Template::rect(2), {0, 0}, {1, 1}), 100, 1);
    for (const auto& row : s.probs) EXPECT_EQ(row, (Vector{0.5, 0.5}));
}

TEST(SampleActionProbs, Reproducible) {
    const auto p = Polyhedron::box(Template::rect(2), {0, 0}, {1, 1});
    const auto a = sample_action_probs(step_net(), p, 1000, 42), b = sample_action_probs(step_net(), p, 1000, 42);
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(a.probs, b.probs);
}

TEST(SampleActionProbs, SampledSpreadUnderApproximatesMilp) {
    const Network net = fixture("bouncing_ball_policy");
    std::ifstream in(std::string(PVERIFY_FIXTURES) + "/states/bouncing_ball_state.json");
    const json doc = json::parse(in);
    const auto p = Polyhedron::box(Template::rect(2), doc.at("lower").get<Vector>(), doc.at("upper").get<Vector>());
    EXPECT_LE(sample_action_probs(net, p, 1000, 3).spread(), policy_abstraction(net, p).spread + 1e-9);
}

TEST(CrossEntropySplit, OneDimensionalExample) {
    auto t = Template::custom({{1, 0}, {-1, 0}, {0, 1}, {0, -1}});
    const auto p = Polyhedron::box(t, {0, 0}, {0.8, 1});
    const auto s = manual_samples({{0.1, 0.5}, {0.2, 0.5}, {0.6, 0.5}, {0.7, 0.5}}, {0.9, 0.9, 0.1, 0.1});
    const auto choice = cross_entropy_split(s, p, 0.1);
    EXPECT_EQ(choice.direction, 0u);
    EXPECT_EQ(choice.cut, 2u);
    EXPECT_NEAR(choice.boundary, 0.4, 1e-15);
    // Rescaled to (1, 1, 0, 0) the cut separates the groups perfectly; only the clamp remains.
    EXPECT_NEAR(choice.loss, -std::log(1.0 - 1e-7), 1e-12);
}

TEST(CrossEntropySplit, EqualLossesPickFirstDirectionAndCut) {
    const auto p = Polyhedron::box(Template::rect(2), {0, 0}, {1, 1});
    const auto s = manual_samples({{0.25, 0.6}, {0.5, 0.3}, {0.75, 0.9}}, {0.5, 0.5, 0.5});
    const auto choice = cross_entropy_split(s, p, 0.1);
    EXPECT_EQ(choice.direction, 0u);
    EXPECT_EQ(choice.cut, 1u);
}

TEST(CrossEntropySplit, PicksAxisAlongWhichProbabilityVaries) {
    const auto p = Polyhedron::box(Template::rect(2), {0, 0}, {1, 1});
    Rng rng(4);
    std::vector<Point> pts;
    Vector probs;
    for (int i = 0; i < 400; ++i) {
        pts.push_back({rng.uniform(), rng.uniform()});
        probs.push_back(0.05 + 0.9 * pts.back()[1]);
    }
    const auto choice = cross_entropy_split(manual_samples(pts, probs), p, 0.1);
    const auto& d = p.tmpl()->direction(choice.direction);
    EXPECT_EQ(d[0], 0.0);
    EXPECT_NE(d[1], 0.0);
}

TEST(CrossEntropySplit, RelativeProbabilitiesSpanUnitInterval) {
    const Vector r = relative_probabilities({0.6, 0.8, 0.7});
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[1], 1.0);
    EXPECT_NEAR(r[2], 0.5, 1e-15);
    EXPECT_EQ(relative_probabilities({0.3, 0.3}), (Vector{0.3, 0.3}));
}

TEST(CrossEntropySplit, NoValidCutWhenProjectionsCoincide) {
    const auto p = Polyhedron::box(Template::rect(2), {0, 0}, {1, 1});
    EXPECT_THROW(cross_entropy_split(manual_samples({{0.5, 0.5}, {0.5, 0.5}}, {0.2, 0.8}), p, 0.1), NoValidCut);
}

TEST(CrossEntropySplitProperty, ChosenLossIsMinimalOverAdmissibleCuts) {
    Rng rng(12);
    for (int t = 0; t < 10; ++t) {
        const Network net = oracle::random_network(rng, {2, 6, 2});
        const auto p = Polyhedron::box(Template::octagon(2), {-1, -1}, {1, 1});
        const auto s = sample_action_probs(net, p, 60, rng.next());
        const auto choice = cross_entropy_split(s, p, 0.1);
        EXPECT_LE(choice.loss, brute_best_loss(s, p, choice.action, 10, 0.1) + 1e-12);
    }
}

TEST(RefineToThreshold, ConstantNetSingleLeaf) {
    RefineOptions opt;
    opt.phi = 0.1;
    const auto r = refine_to_threshold(constant_net(), Polyhedron::box(Template::rect(2), {0, 0}, {1, 1}), opt);
    ASSERT_EQ(r.leaves.size(), 1u);
    EXPECT_LT(r.leaves[0].abstraction.spread, 1e-8);
}

TEST(RefineToThreshold, StepBoundaryGetsThinPieces) {
    RefineOptions opt;
    opt.phi = 0.2;
    opt.seed = 9;
    const auto p = Polyhedron::box(Template::rect(2), {0, 0}, {1, 1});
    const auto r = refine_to_threshold(step_net(), p, opt);
    EXPECT_FALSE(r.saturated);
    bool straddles = false;
    for (const auto& leaf : r.leaves) {
        EXPECT_LE(leaf.abstraction.spread, 0.2);
        EXPECT_LE(policy_abstraction(step_net(), leaf.piece).spread, 0.2 + 1e-9);
        if (leaf.piece.box_lower()[0] < 0.5 && leaf.piece.box_upper()[0] > 0.5) {
            straddles = true;
            EXPECT_LT(leaf.piece.box_upper()[0] - leaf.piece.box_lower()[0], 0.1);
        }
    }
    EXPECT_TRUE(straddles);
    // Coverage: every sampled point lies in some leaf.
    Rng rng(1);
    for (const auto& x : oracle::uniform_box_points(rng, {0, 0}, {1, 1}, 2000))
        EXPECT_TRUE(std::any_of(r.leaves.begin(), r.leaves.end(), [&](const Leaf& l) { return l.piece.contains_point(x); }));
}

TEST(RefineToThreshold, Deterministic) {
    RefineOptions opt;
    opt.phi = 0.2;
    opt.seed = 5;
    const auto p = Polyhedron::box(Template::octagon(2), {0, 0}, {1, 1});
    const auto a = refine_to_threshold(step_net(), p, opt), b = refine_to_threshold(step_net(), p, opt);
    ASSERT_EQ(a.leaves.size(), b.leaves.size());
    for (std::size_t i = 0; i < a.leaves.size(); ++i) EXPECT_EQ(a.leaves[i].piece, b.leaves[i].piece);
}

TEST(RefineToThreshold, BudgetSaturatesButStaysSound) {
    RefineOptions opt;
    opt.phi = 0.01;
    opt.leaf_budget = 3;
    const auto r = refine_to_threshold(step_net(), Polyhedron::box(Template::rect(2), {0, 0}, {1, 1}), opt);
    EXPECT_LE(r.leaves.size(), 3u);
    EXPECT_TRUE(r.saturated);
}

TEST(RefineToThreshold, DegeneratePieceIsALeaf) {
    RefineOptions opt;
    opt.phi = 0.05;
    const auto r = refine_to_threshold(step_net(), Polyhedron::box(Template::rect(2), {0.3, 0}, {0.7, 0}), opt);
    ASSERT_EQ(r.leaves.size(), 1u);
    EXPECT_TRUE(r.leaves[0].saturated);
}

TEST(RefineToThreshold, RejectsBadPhi) {
    RefineOptions opt;
    opt.phi = 0.0;
    EXPECT_THROW(refine_to_threshold(step_net(), Polyhedron::box(Template::rect(2), {0, 0}, {1, 1}), opt), ConfigError);
}

TEST(RefineToThreshold, FixtureBallSmallRegion) {
    const Network net = fixture("bouncing_ball_policy");
    RefineOptions opt;
    opt.phi = 0.1;
    opt.seed = 1;
    const auto r = refine_to_threshold(net, Polyhedron::box(Template::rect(2), {5, -0.1}, {9, 0}), opt);
    EXPECT_FALSE(r.saturated);
    for (const auto& leaf : r.leaves) EXPECT_LE(policy_abstraction(net, leaf.piece).spread, 0.1 + 1e-9);
}
