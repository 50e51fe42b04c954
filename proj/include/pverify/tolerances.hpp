#pragma once

namespace pverify::tol {

// Shared numeric tolerances. Every module reads its thresholds from here.

inline constexpr double kLpFeasibility = 1e-9;
inline constexpr double kLpOptimality = 1e-9;
inline constexpr double kLpPivot = 1e-9;
inline constexpr double kLpTinyPivot = 1e-12;
inline constexpr int kLpDegenerateBeforeBland = 1000;
inline constexpr int kLpMaxIterations = 200000;

inline constexpr double kContainment = 1e-9;
inline constexpr double kMembership = 1e-9;
inline constexpr double kWidthFloor = 1e-9;
inline constexpr double kInteriorRadius = 1e-9;

inline constexpr double kBranchGap = 1e-6;
inline constexpr double kIntegrality = 1e-9;
inline constexpr double kLogitPadding = 1e-9;
inline constexpr double kProbabilityPadding = 1e-12;

inline constexpr double kProbClampInLog = 1e-7;
inline constexpr double kMinTransitionLower = 1e-12;
inline constexpr double kIntervalSum = 1e-9;
inline constexpr double kDedupGrid = 1e-9;

}  // namespace pverify::tol
