#pragma once

// Bounded template polyhedra: a fixed direction set (the template) plus one
// support bound per direction. Every Polyhedron is kept in canonical form,
// i.e. each bound equals the support value of the set in that direction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pverify/errors.hpp"
#include "pverify/linprog.hpp"
#include "pverify/random.hpp"
#include "pverify/tolerances.hpp"

namespace pverify {

using Vector = std::vector<double>;
using Point = Vector;

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

inline Vector negated(Vector v) {
    for (double& x : v) x = -x;
    return v;
}

/// Closed (or strict) halfspace {x : <normal, x> <= offset}.
struct Halfspace {
    Vector normal;
    double offset = 0.0;
    bool strict = false;

    /// Exact membership; strict halfspaces exclude their boundary.
    bool contains(const Point& x) const {
        const double v = dot(normal, x);
        return strict ? v < offset : v <= offset;
    }
};

/// Conjunction of halfspaces.
using Region = std::vector<Halfspace>;
/// Disjunction of conjunctions.
using RegionUnion = std::vector<Region>;

inline bool region_contains(const Region& region, const Point& x) {
    return std::all_of(region.begin(), region.end(), [&](const Halfspace& h) { return h.contains(x); });
}

inline bool region_union_contains(const RegionUnion& regions, const Point& x) {
    return std::any_of(regions.begin(), regions.end(), [&](const Region& r) { return region_contains(r, x); });
}

class Template;
using TemplatePtr = std::shared_ptr<const Template>;

/// Ordered direction set. Bounds of a Polyhedron are indexed by position.
class Template {
public:
    enum class Kind { Rect, Octagon, Custom };

    /// 2n axis directions ordered +e0, -e0, +e1, -e1, ...
    static TemplatePtr rect(std::size_t n) {
        if (n == 0) throw InvalidTemplate("dimension must be positive");
        std::vector<Vector> dirs;
        for (std::size_t i = 0; i < n; ++i) {
            dirs.push_back(axis(n, i, 1.0));
            dirs.push_back(axis(n, i, -1.0));
        }
        return TemplatePtr(new Template(Kind::Rect, std::move(dirs)));
    }

    /// Rect directions followed by, for each axis pair i<j,
    /// (+ei+ej), (-ei-ej), (+ei-ej), (-ei+ej).
    static TemplatePtr octagon(std::size_t n) {
        if (n == 0) throw InvalidTemplate("dimension must be positive");
        std::vector<Vector> dirs;
        for (std::size_t i = 0; i < n; ++i) {
            dirs.push_back(axis(n, i, 1.0));
            dirs.push_back(axis(n, i, -1.0));
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                for (auto [si, sj] : {std::pair{1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}, {-1.0, 1.0}}) {
                    Vector d(n, 0.0);
                    d[i] = si;
                    d[j] = sj;
                    dirs.push_back(std::move(d));
                }
            }
        }
        return TemplatePtr(new Template(Kind::Octagon, std::move(dirs)));
    }

    /// User-supplied directions; rejects zero vectors and direction sets that
    /// cannot bound every axis.
    static TemplatePtr custom(std::vector<Vector> dirs) {
        if (dirs.empty()) throw InvalidTemplate("empty direction list");
        const std::size_t n = dirs.front().size();
        if (n == 0) throw InvalidTemplate("dimension must be positive");
        for (const auto& d : dirs) {
            if (d.size() != n) throw InvalidTemplate("directions differ in dimension");
            if (norm(d) == 0.0) throw InvalidTemplate("zero direction");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const bool pos = std::any_of(dirs.begin(), dirs.end(), [i](const Vector& d) { return d[i] > 0.0; });
            const bool neg = std::any_of(dirs.begin(), dirs.end(), [i](const Vector& d) { return d[i] < 0.0; });
            if (!pos || !neg) throw InvalidTemplate("axis " + std::to_string(i) + " is not bounded by the template");
        }
        // Boundedness proper: every axis must be bounded over {x : <d, x> <= 1}.
        for (std::size_t i = 0; i < n; ++i) {
            for (double s : {1.0, -1.0}) {
                LinearProgram lp(n, Sense::Maximize);
                lp.objective[i] = s;
                for (const auto& d : dirs) lp.add_constraint(d, Relation::LessEqual, 1.0);
                if (solve_lp(lp).status != LpStatus::Optimal)
                    throw InvalidTemplate("directions do not positively span the state space");
            }
        }
        return TemplatePtr(new Template(Kind::Custom, std::move(dirs)));
    }

    Kind kind() const noexcept { return kind_; }
    std::string kind_name() const {
        switch (kind_) {
            case Kind::Rect: return "rect";
            case Kind::Octagon: return "oct";
            default: return "custom";
        }
    }
    std::size_t dimension() const noexcept { return dirs_.front().size(); }
    std::size_t size() const noexcept { return dirs_.size(); }
    const Vector& direction(std::size_t j) const { return dirs_.at(j); }
    const std::vector<Vector>& directions() const noexcept { return dirs_; }

    /// Index of the direction equal to -direction(j), if the template has one.
    std::optional<std::size_t> opposite(std::size_t j) const { return opposite_.at(j); }

    /// Index of +e_i (positive) or -e_i.
    std::optional<std::size_t> axis_index(std::size_t i, bool positive) const {
        const Vector e = axis(dimension(), i, positive ? 1.0 : -1.0);
        for (std::size_t j = 0; j < dirs_.size(); ++j)
            if (dirs_[j] == e) return j;
        return std::nullopt;
    }

    bool same_as(const Template& other) const { return this == &other || dirs_ == other.dirs_; }

private:
    Template(Kind kind, std::vector<Vector> dirs) : kind_(kind), dirs_(std::move(dirs)) {
        opposite_.resize(dirs_.size());
        for (std::size_t j = 0; j < dirs_.size(); ++j) {
            const Vector neg = negated(dirs_[j]);
            for (std::size_t k = 0; k < dirs_.size(); ++k)
                if (dirs_[k] == neg) opposite_[j] = k;
        }
    }

    static Vector axis(std::size_t n, std::size_t i, double s) {
        Vector e(n, 0.0);
        e[i] = s;
        return e;
    }

    Kind kind_;
    std::vector<Vector> dirs_;
    std::vector<std::optional<std::size_t>> opposite_;
};

class Polyhedron {
public:
    /// Builds {x : <d_j, x> <= bounds_j} and canonicalizes it.
    /// Throws InfeasibleInput when the constraints are inconsistent.
    Polyhedron(TemplatePtr tmpl, Vector bounds) : tmpl_(std::move(tmpl)), bounds_(std::move(bounds)) {
        if (!tmpl_) throw InvalidTemplate("null template");
        if (bounds_.size() != tmpl_->size()) throw InvalidTemplate("bound count differs from template size");
        for (double b : bounds_)
            if (std::isnan(b)) throw InfeasibleInput("NaN bound");
        canonicalize();
        if (empty_) throw InfeasibleInput("polyhedron is empty");
    }

    /// The tightest template polyhedron enclosing the axis-aligned box [lo, hi].
    static Polyhedron box(TemplatePtr tmpl, const Vector& lo, const Vector& hi) {
        if (lo.size() != tmpl->dimension() || hi.size() != tmpl->dimension())
            throw InvalidTemplate("box dimension differs from template");
        Vector b(tmpl->size());
        for (std::size_t j = 0; j < tmpl->size(); ++j) b[j] = box_support(tmpl->direction(j), lo, hi);
        return Polyhedron(std::move(tmpl), std::move(b));
    }

    /// Explicitly empty polyhedron.
    static Polyhedron empty(TemplatePtr tmpl) {
        Polyhedron p;
        p.tmpl_ = std::move(tmpl);
        p.bounds_.assign(p.tmpl_->size(), -kInf);
        p.empty_ = true;
        return p;
    }

    /// Tightest template polyhedron enclosing base ∩ closure(extra); empty if the
    /// intersection is empty.
    static Polyhedron enclose(const Polyhedron& base, const Region& extra) {
        if (base.is_empty()) return base;
        if (extra.empty()) return base;
        LinearProgram lp = base.feasibility_lp(0);
        for (const auto& h : extra) lp.add_constraint(h.normal, Relation::LessEqual, h.offset);
        Vector b(base.tmpl_->size());
        for (std::size_t j = 0; j < b.size(); ++j) {
            lp.objective = base.tmpl_->direction(j);
            const LpResult r = solve_lp(lp);
            if (r.status == LpStatus::Infeasible) return empty(base.tmpl_);
            if (r.status == LpStatus::Unbounded) throw NumericalFailure("unbounded support on bounded template");
            b[j] = std::min(r.optimum, base.bounds_[j]);
        }
        Polyhedron out;
        out.tmpl_ = base.tmpl_;
        out.bounds_ = std::move(b);
        out.canonicalize();
        return out;
    }

    bool is_empty() const noexcept { return empty_; }
    const TemplatePtr& tmpl() const noexcept { return tmpl_; }
    const Vector& bounds() const noexcept { return bounds_; }
    std::size_t dimension() const noexcept { return tmpl_->dimension(); }
    const Vector& box_lower() const noexcept { return lo_; }
    const Vector& box_upper() const noexcept { return hi_; }

    /// sup{<d, x> : x in P}.
    double support(const Vector& d) const {
        if (empty_) throw InfeasibleInput("support of an empty polyhedron");
        if (d.size() != dimension()) throw InvalidTemplate("direction dimension mismatch");
        if (tmpl_->kind() == Template::Kind::Rect) return box_support(d, lo_, hi_);
        LinearProgram lp = feasibility_lp(0);
        lp.objective = d;
        const LpResult r = solve_lp(lp);
        if (r.status == LpStatus::Infeasible) throw InfeasibleInput("polyhedron is empty");
        if (r.status == LpStatus::Unbounded) throw NumericalFailure("unbounded support on bounded template");
        return r.optimum;
    }

    /// [inf <d,x>, sup <d,x>] over P.
    std::pair<double, double> range(const Vector& d) const { return {-support(negated(d)), support(d)}; }

    /// Range of template direction j, reusing the opposite bound when available.
    std::pair<double, double> direction_range(std::size_t j) const {
        if (auto k = tmpl_->opposite(j)) return {-bounds_[*k], bounds_[j]};
        return {-support(negated(tmpl_->direction(j))), bounds_[j]};
    }

    bool contains_point(const Point& x, double slack = tol::kMembership) const {
        if (empty_) return false;
        for (std::size_t j = 0; j < bounds_.size(); ++j)
            if (dot(tmpl_->direction(j), x) > bounds_[j] + slack * (1.0 + std::abs(bounds_[j]))) return false;
        return true;
    }

    /// Appends the template constraints to an LP whose variables
    /// [first, first + n) are the state coordinates, bounding them by the box.
    void add_to(LinearProgram& lp, std::size_t first) const {
        const std::size_t n = dimension();
        for (std::size_t j = 0; j < bounds_.size(); ++j) {
            Vector row(lp.num_vars(), 0.0);
            const Vector& d = tmpl_->direction(j);
            for (std::size_t i = 0; i < n; ++i) row[first + i] = d[i];
            lp.add_constraint(std::move(row), Relation::LessEqual, bounds_[j]);
        }
        for (std::size_t i = 0; i < n; ++i) lp.set_bounds(first + i, lo_[i], hi_[i]);
    }

    /// LP over the state coordinates (plus `extra` trailing variables) constrained to P.
    LinearProgram feasibility_lp(std::size_t extra) const {
        LinearProgram lp(dimension() + extra, Sense::Maximize);
        add_to(lp, 0);
        return lp;
    }

    friend bool operator==(const Polyhedron& a, const Polyhedron& b) {
        return a.empty_ == b.empty_ && a.tmpl_->same_as(*b.tmpl_) && a.bounds_ == b.bounds_;
    }

private:
    Polyhedron() = default;

    static double box_support(const Vector& d, const Vector& lo, const Vector& hi) {
        double s = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) s += d[i] > 0.0 ? d[i] * hi[i] : (d[i] < 0.0 ? d[i] * lo[i] : 0.0);
        return s;
    }

    void canonicalize() {
        const std::size_t n = tmpl_->dimension();
        lo_.assign(n, -kInf);
        hi_.assign(n, kInf);
        if (tmpl_->kind() == Template::Kind::Rect) {
            for (std::size_t i = 0; i < n; ++i) {
                hi_[i] = bounds_[2 * i];
                lo_[i] = -bounds_[2 * i + 1];
                if (lo_[i] > hi_[i] + tol::kLpFeasibility * (1.0 + std::abs(hi_[i]))) {
                    empty_ = true;
                    return;
                }
                if (lo_[i] > hi_[i]) lo_[i] = hi_[i];
                bounds_[2 * i + 1] = -lo_[i];
            }
            return;
        }
        LinearProgram lp(n, Sense::Maximize);
        for (std::size_t j = 0; j < bounds_.size(); ++j)
            lp.add_constraint(tmpl_->direction(j), Relation::LessEqual, bounds_[j]);
        Vector tight(bounds_.size());
        for (std::size_t j = 0; j < bounds_.size(); ++j) {
            lp.objective = tmpl_->direction(j);
            const LpResult r = solve_lp(lp);
            if (r.status == LpStatus::Infeasible) {
                empty_ = true;
                return;
            }
            if (r.status == LpStatus::Unbounded) throw NumericalFailure("template does not bound the polyhedron");
            tight[j] = std::min(r.optimum, bounds_[j]);
        }
        bounds_ = std::move(tight);
        for (std::size_t i = 0; i < n; ++i) {
            Vector e(n, 0.0);
            e[i] = 1.0;
            lp.objective = e;
            hi_[i] = solve_lp(lp).optimum;
            e[i] = -1.0;
            lp.objective = e;
            lo_[i] = -solve_lp(lp).optimum;
        }
    }

    TemplatePtr tmpl_;
    Vector bounds_;
    Vector lo_, hi_;
    bool empty_ = false;
};

// ---------------------------------------------------------------------------
// Free operations

inline double support_value(const Polyhedron& p, const Vector& d) { return p.support(d); }

/// inner ⊆ outer, decided componentwise on canonical bounds.
inline bool contains(const Polyhedron& outer, const Polyhedron& inner, double eps = tol::kContainment) {
    if (!outer.tmpl()->same_as(*inner.tmpl())) throw TemplateMismatch("containment across different templates");
    if (inner.is_empty()) return true;
    if (outer.is_empty()) return false;
    for (std::size_t j = 0; j < outer.bounds().size(); ++j)
        if (inner.bounds()[j] > outer.bounds()[j] + eps) return false;
    return true;
}

/// True iff p ∩ region is non-empty. Strict halfspaces are honoured: the
/// intersection must contain a point strictly inside each of them.
inline bool intersects_region(const Polyhedron& p, const Region& region) {
    if (p.is_empty()) return false;
    const bool any_strict = std::any_of(region.begin(), region.end(), [](const Halfspace& h) { return h.strict; });
    const std::size_t n = p.dimension();
    LinearProgram lp = p.feasibility_lp(any_strict ? 1 : 0);
    for (const auto& h : region) {
        Vector row(lp.num_vars(), 0.0);
        std::copy(h.normal.begin(), h.normal.end(), row.begin());
        if (h.strict) row[n] = 1.0;
        lp.add_constraint(std::move(row), Relation::LessEqual, h.offset);
    }
    if (!any_strict) return solve_lp(lp).status == LpStatus::Optimal;
    lp.set_bounds(n, -1.0, 1.0);
    lp.objective.assign(lp.num_vars(), 0.0);
    lp.objective[n] = 1.0;
    const LpResult r = solve_lp(lp);
    return r.optimal() && r.optimum > tol::kLpFeasibility;
}

inline bool intersects_any(const Polyhedron& p, const RegionUnion& regions) {
    return std::any_of(regions.begin(), regions.end(), [&](const Region& r) { return intersects_region(p, r); });
}

/// Chebyshev centre of p: the centre and radius of the largest inscribed ball.
inline std::pair<Point, double> chebyshev_center(const Polyhedron& p) {
    if (p.is_empty()) throw EmptyInput("chebyshev centre of an empty polyhedron");
    const std::size_t n = p.dimension();
    LinearProgram lp(n + 1, Sense::Maximize);
    const auto& t = *p.tmpl();
    for (std::size_t j = 0; j < t.size(); ++j) {
        Vector row(n + 1);
        std::copy(t.direction(j).begin(), t.direction(j).end(), row.begin());
        row[n] = norm(t.direction(j));
        lp.add_constraint(std::move(row), Relation::LessEqual, p.bounds()[j]);
    }
    for (std::size_t i = 0; i < n; ++i) lp.set_bounds(i, p.box_lower()[i], p.box_upper()[i]);
    lp.set_bounds(n, 0.0, kInf);
    lp.objective[n] = 1.0;
    const LpResult r = solve_lp(lp);
    if (!r.optimal()) throw DegenerateGeometry("no interior point");
    return {Point(r.witness.begin(), r.witness.begin() + static_cast<std::ptrdiff_t>(n)), r.optimum};
}

inline bool has_interior(const Polyhedron& p) {
    return !p.is_empty() && chebyshev_center(p).second > tol::kInteriorRadius;
}

/// Splits p along template direction `dir_index` at `boundary`. The cut is
/// clamped so each slice spans at least `min_frac` of the direction's extent.
inline std::pair<Polyhedron, Polyhedron> bisect(const Polyhedron& p, std::size_t dir_index, double boundary,
                                                double min_frac) {
    if (p.is_empty()) throw EmptyInput("bisecting an empty polyhedron");
    if (!(min_frac > 0.0 && min_frac <= 0.5)) throw std::invalid_argument("min_frac must lie in (0, 0.5]");
    const auto& t = *p.tmpl();
    const auto [lo, hi] = p.direction_range(dir_index);
    const double extent = hi - lo;
    if (!(extent > tol::kWidthFloor * std::max(1.0, std::max(std::abs(lo), std::abs(hi)))))
        throw DegenerateSplit("extent " + std::to_string(extent) + " along direction " + std::to_string(dir_index));
    const double c = std::clamp(boundary, lo + min_frac * extent, hi - min_frac * extent);

    Vector lower_bounds = p.bounds();
    lower_bounds[dir_index] = std::min(lower_bounds[dir_index], c);
    Polyhedron lower(p.tmpl(), std::move(lower_bounds));

    if (auto k = t.opposite(dir_index)) {
        Vector upper_bounds = p.bounds();
        upper_bounds[*k] = std::min(upper_bounds[*k], -c);
        return {std::move(lower), Polyhedron(p.tmpl(), std::move(upper_bounds))};
    }
    Polyhedron upper = Polyhedron::enclose(p, {Halfspace{negated(t.direction(dir_index)), -c, false}});
    return {std::move(lower), std::move(upper)};
}

/// Hit & Run samples from p, started at the Chebyshev centre with a fixed burn-in.
inline std::vector<Point> hit_and_run_sample(const Polyhedron& p, std::size_t count, std::uint64_t seed,
                                             std::size_t burn_in = 100) {
    if (p.is_empty()) throw EmptyInput("sampling an empty polyhedron");
    if (count == 0) throw std::invalid_argument("count must be positive");
    auto [x, radius] = chebyshev_center(p);
    if (!(radius > tol::kInteriorRadius)) throw DegenerateGeometry("polyhedron has no interior");
    const auto& t = *p.tmpl();
    const std::size_t n = p.dimension();
    Rng rng(seed);
    std::vector<Point> out;
    out.reserve(count);
    Vector dir(n);
    for (std::size_t step = 0; out.size() < count; ++step) {
        double len = 0.0;
        while (len < 1e-12) {
            for (double& v : dir) v = rng.normal();
            len = norm(dir);
        }
        for (double& v : dir) v /= len;
        double tmin = -kInf, tmax = kInf;
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double a = dot(t.direction(j), dir);
            const double s = std::max(0.0, p.bounds()[j] - dot(t.direction(j), x));
            if (a > 1e-15)
                tmax = std::min(tmax, s / a);
            else if (a < -1e-15)
                tmin = std::max(tmin, s / a);
        }
        if (std::isfinite(tmin) && std::isfinite(tmax) && tmax > tmin) {
            const double step_len = rng.uniform(tmin, tmax);
            for (std::size_t i = 0; i < n; ++i) x[i] += step_len * dir[i];
        }
        if (step >= burn_in) out.push_back(x);
    }
    return out;
}

}  // namespace pverify
