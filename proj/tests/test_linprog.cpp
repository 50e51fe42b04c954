#include <gtest/gtest.h>

#include "pverify/linprog.hpp"
#include "pverify/random.hpp"

using namespace pverify;

TEST(SolveLp, BoxedSingleVariable) {
    LinearProgram lp(1, Sense::Maximize);
    lp.objective = {1.0};
    lp.set_bounds(0, 0.0, 1.0);
    const auto r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.optimum, 1.0, 1e-12);
}

TEST(SolveLp, SimplexCorner) {
    LinearProgram lp(2, Sense::Maximize);
    lp.objective = {1.0, 1.0};
    lp.add_constraint({1.0, 1.0}, Relation::LessEqual, 1.0);
    lp.set_bounds(0, 0.0, kInf);
    lp.set_bounds(1, 0.0, kInf);
    const auto r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.optimum, 1.0, 1e-12);
}

TEST(SolveLp, Infeasible) {
    LinearProgram lp(1, Sense::Maximize);
    lp.objective = {1.0};
    lp.add_constraint({1.0}, Relation::GreaterEqual, 2.0);
    lp.add_constraint({1.0}, Relation::LessEqual, 1.0);
    EXPECT_EQ(solve_lp(lp).status, LpStatus::Infeasible);
}

TEST(SolveLp, Unbounded) {
    LinearProgram lp(2, Sense::Maximize);
    lp.objective = {1.0, 0.0};
    lp.add_constraint({0.0, 1.0}, Relation::LessEqual, 1.0);
    EXPECT_EQ(solve_lp(lp).status, LpStatus::Unbounded);
}

TEST(SolveLp, FreeVariablesAndEquality) {
    // min x - y s.t. x + y = 2, x - y >= -4, x,y free, y <= 5
    LinearProgram lp(2, Sense::Minimize);
    lp.objective = {1.0, -1.0};
    lp.add_constraint({1.0, 1.0}, Relation::Equal, 2.0);
    lp.add_constraint({1.0, -1.0}, Relation::GreaterEqual, -4.0);
    lp.set_bounds(1, -kInf, 5.0);
    const auto r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.optimum, -4.0, 1e-9);
    EXPECT_NEAR(r.witness[0] + r.witness[1], 2.0, 1e-9);
}

TEST(SolveLp, UpperBoundOnlyVariable) {
    LinearProgram lp(1, Sense::Minimize);
    lp.objective = {-1.0};
    lp.set_bounds(0, -kInf, 3.5);
    const auto r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.optimum, -3.5, 1e-12);
}

TEST(SolveLp, RedundantEqualities) {
    LinearProgram lp(2, Sense::Maximize);
    lp.objective = {1.0, 2.0};
    lp.add_constraint({1.0, 1.0}, Relation::Equal, 1.0);
    lp.add_constraint({2.0, 2.0}, Relation::Equal, 2.0);
    lp.set_bounds(0, 0.0, kInf);
    lp.set_bounds(1, 0.0, kInf);
    const auto r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.optimum, 2.0, 1e-12);
}

TEST(SolveLp, BealeCyclingExample) {
    // Classic instance on which Dantzig's rule without anti-cycling cycles.
    LinearProgram lp(4, Sense::Minimize);
    lp.objective = {-0.75, 150.0, -0.02, 6.0};
    lp.add_constraint({0.25, -60.0, -0.04, 9.0}, Relation::LessEqual, 0.0);
    lp.add_constraint({0.5, -90.0, -0.02, 3.0}, Relation::LessEqual, 0.0);
    lp.add_constraint({0.0, 0.0, 1.0, 0.0}, Relation::LessEqual, 1.0);
    for (std::size_t i = 0; i < 4; ++i) lp.set_bounds(i, 0.0, kInf);
    const auto r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::Optimal);
    EXPECT_NEAR(r.optimum, -0.05, 1e-9);
}

// Primal max c.x s.t. Ax <= b, x >= 0 against its dual min b.y s.t. A^T y >= c, y >= 0,
// solved as a separate program.
TEST(SolveLpProperty, StrongDualityOnRandomInstances) {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(6), m = 2 + rng.below(6);
        std::vector<std::vector<double>> a(m, std::vector<double>(n));
        std::vector<double> b(m), c(n);
        for (auto& row : a)
            for (double& v : row) v = rng.uniform(-1.0, 3.0);
        for (double& v : b) v = rng.uniform(0.5, 5.0);
        for (double& v : c) v = rng.uniform(-1.0, 2.0);
        // A box row keeps the primal bounded.
        a.push_back(std::vector<double>(n, 1.0));
        b.push_back(10.0);

        LinearProgram primal(n, Sense::Maximize);
        primal.objective = c;
        for (std::size_t i = 0; i < a.size(); ++i) primal.add_constraint(a[i], Relation::LessEqual, b[i]);
        for (std::size_t j = 0; j < n; ++j) primal.set_bounds(j, 0.0, kInf);

        LinearProgram dual(a.size(), Sense::Minimize);
        dual.objective = b;
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> col(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) col[i] = a[i][j];
            dual.add_constraint(col, Relation::GreaterEqual, c[j]);
        }
        for (std::size_t i = 0; i < a.size(); ++i) dual.set_bounds(i, 0.0, kInf);

        const auto p = solve_lp(primal);
        const auto d = solve_lp(dual);
        ASSERT_EQ(p.status, LpStatus::Optimal);
        ASSERT_EQ(d.status, LpStatus::Optimal);
        EXPECT_NEAR(p.optimum, d.optimum, 1e-6) << "trial " << trial;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double lhs = 0.0;
            for (std::size_t j = 0; j < n; ++j) lhs += a[i][j] * p.witness[j];
            EXPECT_LE(lhs, b[i] + 1e-9);
        }
    }
}
