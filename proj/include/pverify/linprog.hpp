#pragma once

// Dense two-phase tableau simplex. Problems here are small (at most a few
// hundred columns), so the solver favours robustness and determinism over
// speed: Dantzig pricing with a permanent switch to Bland's rule once the
// solver stalls on degenerate pivots.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "pverify/errors.hpp"
#include "pverify/tolerances.hpp"

namespace pverify {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Maximize, Minimize };
enum class Relation { LessEqual, Equal, GreaterEqual };

struct LinearConstraint {
    std::vector<double> coeffs;
    Relation relation = Relation::LessEqual;
    double rhs = 0.0;
};

/// A linear program over `num_vars` real variables. Variables are free
/// unless bounded through set_bounds().
struct LinearProgram {
    explicit LinearProgram(std::size_t n, Sense s = Sense::Maximize)
        : sense(s), objective(n, 0.0), lower(n, -kInf), upper(n, kInf) {}

    std::size_t num_vars() const noexcept { return objective.size(); }

    void add_constraint(std::vector<double> coeffs, Relation relation, double rhs) {
        if (coeffs.size() != num_vars()) throw std::invalid_argument("constraint dimension mismatch");
        constraints.push_back({std::move(coeffs), relation, rhs});
    }

    void set_bounds(std::size_t var, double lo, double hi) {
        lower.at(var) = lo;
        upper.at(var) = hi;
    }

    Sense sense;
    std::vector<double> objective;
    std::vector<LinearConstraint> constraints;
    std::vector<double> lower;
    std::vector<double> upper;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double optimum = 0.0;
    std::vector<double> witness;

    bool optimal() const noexcept { return status == LpStatus::Optimal; }
};

namespace detail {

class DenseSimplex {
public:
    explicit DenseSimplex(const LinearProgram& lp) : lp_(lp) {}

    LpResult run() {
        build();
        LpResult result;
        if (infeasible_bounds_) {
            result.status = LpStatus::Infeasible;
            return result;
        }
        if (num_art_ > 0) {
            set_phase_one_costs();
            if (iterate(/*allow_artificial=*/true) == Outcome::Unbounded)
                throw NumericalFailure("phase one reported an unbounded ray");
            if (-obj_[cols_] > tol::kLpFeasibility * (1.0 + rhs_scale_)) {
                result.status = LpStatus::Infeasible;
                return result;
            }
            drive_out_artificials();
        }
        set_phase_two_costs();
        if (iterate(/*allow_artificial=*/false) == Outcome::Unbounded) {
            result.status = LpStatus::Unbounded;
            return result;
        }
        result.status = LpStatus::Optimal;
        result.witness = extract();
        result.optimum = 0.0;
        for (std::size_t i = 0; i < lp_.num_vars(); ++i) result.optimum += lp_.objective[i] * result.witness[i];
        verify(result.witness);
        return result;
    }

private:
    enum class Outcome { Optimal, Unbounded };

    struct VarMap {
        double offset = 0.0;
        double sign = 1.0;
        std::size_t col = 0;
        std::size_t neg_col = npos;  // second column of a split free variable
    };

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    double& at(std::size_t r, std::size_t c) { return tab_[r * (cols_ + 1) + c]; }
    double at(std::size_t r, std::size_t c) const { return tab_[r * (cols_ + 1) + c]; }

    void build() {
        const std::size_t n = lp_.num_vars();
        maps_.resize(n);
        std::size_t ycols = 0;
        struct BoundRow {
            std::size_t col;
            double width;
        };
        std::vector<BoundRow> bound_rows;
        for (std::size_t i = 0; i < n; ++i) {
            const double lo = lp_.lower[i], hi = lp_.upper[i];
            if (lo > hi) infeasible_bounds_ = true;
            VarMap& m = maps_[i];
            if (std::isfinite(lo)) {
                m.offset = lo;
                m.sign = 1.0;
                m.col = ycols++;
                if (std::isfinite(hi)) bound_rows.push_back({m.col, hi - lo});
            } else if (std::isfinite(hi)) {
                m.offset = hi;
                m.sign = -1.0;
                m.col = ycols++;
            } else {
                m.col = ycols++;
                m.neg_col = ycols++;
            }
        }
        ycols_ = ycols;

        struct Row {
            std::vector<double> a;
            Relation rel;
            double b;
        };
        std::vector<Row> rows;
        rows.reserve(lp_.constraints.size() + bound_rows.size());
        for (const auto& c : lp_.constraints) {
            Row row{std::vector<double>(ycols, 0.0), c.relation, c.rhs};
            for (std::size_t i = 0; i < n; ++i) {
                const double coef = c.coeffs[i];
                if (coef == 0.0) continue;
                const VarMap& m = maps_[i];
                row.b -= coef * m.offset;
                row.a[m.col] += coef * m.sign;
                if (m.neg_col != npos) row.a[m.neg_col] -= coef;
            }
            rows.push_back(std::move(row));
        }
        for (const auto& br : bound_rows) {
            Row row{std::vector<double>(ycols, 0.0), Relation::LessEqual, br.width};
            row.a[br.col] = 1.0;
            rows.push_back(std::move(row));
        }

        for (auto& row : rows) {
            if (row.b < 0.0) {
                for (double& v : row.a) v = -v;
                row.b = -row.b;
                if (row.rel == Relation::LessEqual)
                    row.rel = Relation::GreaterEqual;
                else if (row.rel == Relation::GreaterEqual)
                    row.rel = Relation::LessEqual;
            }
        }

        rows_ = rows.size();
        std::size_t num_slack = 0;
        num_art_ = 0;
        for (const auto& row : rows) {
            if (row.rel != Relation::Equal) ++num_slack;
            if (row.rel != Relation::LessEqual) ++num_art_;
        }
        slack_begin_ = ycols;
        art_begin_ = ycols + num_slack;
        cols_ = art_begin_ + num_art_;
        tab_.assign(rows_ * (cols_ + 1), 0.0);
        basis_.assign(rows_, 0);
        rhs_scale_ = 0.0;

        std::size_t slack = slack_begin_, art = art_begin_;
        for (std::size_t r = 0; r < rows_; ++r) {
            const Row& row = rows[r];
            for (std::size_t c = 0; c < ycols; ++c) at(r, c) = row.a[c];
            at(r, cols_) = row.b;
            rhs_scale_ = std::max(rhs_scale_, row.b);
            if (row.rel == Relation::LessEqual) {
                at(r, slack) = 1.0;
                basis_[r] = slack++;
            } else {
                if (row.rel == Relation::GreaterEqual) at(r, slack++) = -1.0;
                at(r, art) = 1.0;
                basis_[r] = art++;
            }
        }
        obj_.assign(cols_ + 1, 0.0);
    }

    void set_phase_one_costs() {
        std::fill(obj_.begin(), obj_.end(), 0.0);
        for (std::size_t c = art_begin_; c < cols_; ++c) obj_[c] = 1.0;
        for (std::size_t r = 0; r < rows_; ++r) {
            if (basis_[r] < art_begin_) continue;
            for (std::size_t c = 0; c <= cols_; ++c) obj_[c] -= at(r, c);
        }
    }

    // Phase two minimizes; a maximization objective is negated.
    void set_phase_two_costs() {
        std::vector<double> cost(cols_, 0.0);
        const double s = lp_.sense == Sense::Maximize ? -1.0 : 1.0;
        for (std::size_t i = 0; i < lp_.num_vars(); ++i) {
            const VarMap& m = maps_[i];
            cost[m.col] += s * lp_.objective[i] * m.sign;
            if (m.neg_col != npos) cost[m.neg_col] -= s * lp_.objective[i];
        }
        std::fill(obj_.begin(), obj_.end(), 0.0);
        for (std::size_t c = 0; c < cols_; ++c) obj_[c] = cost[c];
        for (std::size_t r = 0; r < rows_; ++r) {
            const double cb = basis_[r] < cols_ ? cost[basis_[r]] : 0.0;
            if (cb == 0.0) continue;
            for (std::size_t c = 0; c <= cols_; ++c) obj_[c] -= cb * at(r, c);
        }
    }

    Outcome iterate(bool allow_artificial) {
        const std::size_t limit = allow_artificial ? cols_ : art_begin_;
        int degenerate_run = 0;
        bool bland = false;
        for (int iter = 0; iter < tol::kLpMaxIterations; ++iter) {
            std::size_t enter = npos;
            double best = -tol::kLpOptimality;
            for (std::size_t c = 0; c < limit; ++c) {
                if (obj_[c] < best) {
                    enter = c;
                    if (bland) break;
                    best = obj_[c];
                }
            }
            if (enter == npos) return Outcome::Optimal;

            std::size_t leave = npos;
            double best_ratio = kInf;
            for (std::size_t r = 0; r < rows_; ++r) {
                const double a = at(r, enter);
                if (a <= tol::kLpPivot) continue;
                const double ratio = std::max(0.0, at(r, cols_)) / a;
                if (leave == npos || ratio < best_ratio - 1e-12) {
                    leave = r;
                    best_ratio = ratio;
                } else if (ratio <= best_ratio + 1e-12) {
                    const bool prefer = bland ? basis_[r] < basis_[leave] : a > at(leave, enter);
                    if (prefer) {
                        leave = r;
                        best_ratio = std::min(best_ratio, ratio);
                    }
                }
            }
            if (leave == npos) return Outcome::Unbounded;
            if (std::abs(at(leave, enter)) < tol::kLpTinyPivot)
                throw NumericalFailure("pivot magnitude below threshold");

            if (best_ratio <= 1e-12) {
                if (++degenerate_run >= tol::kLpDegenerateBeforeBland) bland = true;
            } else {
                degenerate_run = 0;
            }
            pivot(leave, enter);
        }
        throw NumericalFailure("iteration limit reached");
    }

    void pivot(std::size_t r, std::size_t c) {
        const std::size_t stride = cols_ + 1;
        double* prow = &tab_[r * stride];
        const double inv = 1.0 / prow[c];
        nz_.clear();
        for (std::size_t j = 0; j < stride; ++j) {
            if (prow[j] != 0.0) {
                prow[j] *= inv;
                nz_.push_back(j);
            }
        }
        prow[c] = 1.0;
        auto eliminate = [&](double* row) {
            const double f = row[c];
            if (f == 0.0) return;
            for (std::size_t j : nz_) row[j] -= f * prow[j];
            row[c] = 0.0;
        };
        for (std::size_t i = 0; i < rows_; ++i) {
            if (i == r) continue;
            double* row = &tab_[i * stride];
            eliminate(row);
            if (row[cols_] < 0.0 && row[cols_] > -1e-11) row[cols_] = 0.0;
        }
        eliminate(obj_.data());
        basis_[r] = c;
    }

    void drive_out_artificials() {
        std::vector<std::size_t> redundant;
        for (std::size_t r = 0; r < rows_; ++r) {
            if (basis_[r] < art_begin_) continue;
            std::size_t enter = npos;
            double best = tol::kLpPivot;
            for (std::size_t c = 0; c < art_begin_; ++c) {
                if (std::abs(at(r, c)) > best) {
                    best = std::abs(at(r, c));
                    enter = c;
                }
            }
            if (enter == npos)
                redundant.push_back(r);
            else
                pivot(r, enter);
        }
        if (redundant.empty()) return;
        const std::size_t stride = cols_ + 1;
        std::vector<double> kept;
        std::vector<std::size_t> kept_basis;
        kept.reserve(tab_.size());
        for (std::size_t r = 0, k = 0; r < rows_; ++r) {
            if (k < redundant.size() && redundant[k] == r) {
                ++k;
                continue;
            }
            kept.insert(kept.end(), tab_.begin() + r * stride, tab_.begin() + (r + 1) * stride);
            kept_basis.push_back(basis_[r]);
        }
        tab_ = std::move(kept);
        basis_ = std::move(kept_basis);
        rows_ = basis_.size();
    }

    std::vector<double> extract() const {
        std::vector<double> y(cols_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r)
            if (basis_[r] < cols_) y[basis_[r]] = std::max(0.0, at(r, cols_));
        std::vector<double> x(lp_.num_vars());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const VarMap& m = maps_[i];
            double v = m.offset + m.sign * y[m.col];
            if (m.neg_col != npos) v -= y[m.neg_col];
            x[i] = std::clamp(v, lp_.lower[i], lp_.upper[i]);
        }
        return x;
    }

    void verify(const std::vector<double>& x) const {
        for (std::size_t k = 0; k < lp_.constraints.size(); ++k) {
            const auto& c = lp_.constraints[k];
            double lhs = 0.0, mag = std::abs(c.rhs);
            for (std::size_t i = 0; i < x.size(); ++i) {
                lhs += c.coeffs[i] * x[i];
                mag += std::abs(c.coeffs[i] * x[i]);
            }
            const double slack = tol::kLpFeasibility * (1.0 + mag);
            const bool ok = c.relation == Relation::LessEqual      ? lhs <= c.rhs + slack
                            : c.relation == Relation::GreaterEqual ? lhs >= c.rhs - slack
                                                                   : std::abs(lhs - c.rhs) <= slack;
            if (!ok)
                throw NumericalFailure("witness violates constraint " + std::to_string(k) + " by " +
                                       std::to_string(std::abs(lhs - c.rhs)));
        }
    }

    const LinearProgram& lp_;
    std::vector<VarMap> maps_;
    std::vector<double> tab_;
    std::vector<double> obj_;
    std::vector<std::size_t> basis_;
    std::vector<std::size_t> nz_;
    std::size_t rows_ = 0, cols_ = 0, ycols_ = 0, slack_begin_ = 0, art_begin_ = 0, num_art_ = 0;
    double rhs_scale_ = 0.0;
    bool infeasible_bounds_ = false;
};

}  // namespace detail

/// Solves `lp` to proven optimality, or classifies it as infeasible or unbounded.
/// Throws NumericalFailure when the tableau degrades beyond repair.
inline LpResult solve_lp(const LinearProgram& lp) { return detail::DenseSimplex(lp).run(); }

}  // namespace pverify
