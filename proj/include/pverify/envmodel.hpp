#pragma once

// Benchmark environments: concrete steppers and sound abstract post operators
// over template polyhedra.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"

namespace pverify {

/// Successor polyhedron produced by one dynamics mode.
struct ModePost {
    std::size_t mode = 0;
    std::size_t group = 0;
    Region guard;
    Polyhedron post;
};

class Environment {
public:
    virtual ~Environment() = default;

    const std::string& name() const noexcept { return name_; }
    std::size_t dimension() const noexcept { return dim_; }
    std::size_t num_actions() const noexcept { return actions_.size(); }
    const std::vector<std::string>& action_names() const noexcept { return actions_; }
    const RegionUnion& fail_region() const noexcept { return fail_; }
    const Vector& initial_lower() const noexcept { return init_lo_; }
    const Vector& initial_upper() const noexcept { return init_hi_; }
    /// Resolved constants, echoed into reports.
    const nlohmann::json& constants() const noexcept { return constants_; }

    virtual Point step(const Point& s, std::size_t a) const = 0;
    virtual std::vector<ModePost> abstract_post(const Polyhedron& p, std::size_t a) const = 0;

    /// Exact membership in the fail region (strict inequalities honoured).
    bool is_fail(const Point& s) const { return region_union_contains(fail_, s); }

    /// Existential fail label of an abstract state, over the closure of the fail region.
    bool label_fail(const Polyhedron& p) const {
        for (const auto& region : fail_) {
            Region closed = region;
            for (auto& h : closed) h.strict = false;
            if (intersects_region(p, closed)) return true;
        }
        return false;
    }

    Polyhedron initial_polyhedron(const TemplatePtr& t) const { return Polyhedron::box(t, init_lo_, init_hi_); }

protected:
    void check_action(std::size_t a) const {
        if (a >= actions_.size()) throw std::out_of_range("action index " + std::to_string(a));
    }

    std::string name_;
    std::size_t dim_ = 0;
    std::vector<std::string> actions_;
    RegionUnion fail_;
    Vector init_lo_, init_hi_;
    nlohmann::json constants_;
};

using EnvironmentPtr = std::shared_ptr<const Environment>;

/// Affine dynamics s' = A s + c restricted to a guard.
struct AffineMode {
    std::string name;
    Region guard;
    std::vector<Vector> A;  // rows
    Vector c;
    std::size_t group = 0;

    Point apply(const Point& s) const {
        Point out(c);
        for (std::size_t r = 0; r < A.size(); ++r) out[r] += dot(A[r], s);
        return out;
    }
};

/// Tightest template polyhedron enclosing {A s + c : s in p ∩ closure(guard)},
/// or nullopt when the guard misses p.
inline std::optional<Polyhedron> affine_post(const Polyhedron& p, const AffineMode& m) {
    const std::size_t n = p.dimension();
    if (!m.guard.empty() && !intersects_region(p, m.guard)) return std::nullopt;
    LinearProgram lp = p.feasibility_lp(0);
    for (const auto& h : m.guard) lp.add_constraint(h.normal, Relation::LessEqual, h.offset);
    const auto& t = *p.tmpl();
    Vector b(t.size());
    for (std::size_t j = 0; j < t.size(); ++j) {
        const Vector& d = t.direction(j);
        Vector obj(n, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < n; ++i) obj[i] += d[r] * m.A[r][i];
        lp.objective = obj;
        const LpResult res = solve_lp(lp);
        if (res.status == LpStatus::Infeasible) return std::nullopt;
        if (!res.optimal()) throw NumericalFailure("affine post LP did not reach an optimum");
        b[j] = res.optimum + dot(d, m.c);
        b[j] += tol::kLpFeasibility * (1.0 + std::abs(b[j]));
    }
    return Polyhedron(p.tmpl(), std::move(b));
}

/// Environment whose dynamics per action are a list of guarded affine modes.
/// The concrete step uses the first mode whose guard holds.
class PiecewiseAffineEnvironment : public Environment {
public:
    Point step(const Point& s, std::size_t a) const override {
        check_action(a);
        for (const auto& m : modes_[a])
            if (region_contains(m.guard, s)) return m.apply(s);
        throw std::logic_error("no dynamics mode covers the state");
    }

    std::vector<ModePost> abstract_post(const Polyhedron& p, std::size_t a) const override {
        check_action(a);
        if (p.is_empty()) throw EmptyInput("abstract post of an empty polyhedron");
        std::vector<ModePost> out;
        for (std::size_t i = 0; i < modes_[a].size(); ++i) {
            const auto& m = modes_[a][i];
            if (auto post = affine_post(p, m)) out.push_back(ModePost{i, m.group, m.guard, std::move(*post)});
        }
        if (out.empty()) throw std::logic_error("no dynamics mode intersects the polyhedron");
        return out;
    }

    const std::vector<AffineMode>& modes(std::size_t a) const { return modes_.at(a); }

protected:
    std::vector<std::vector<AffineMode>> modes_;
};

namespace detail {

inline double constant(const nlohmann::json& c, const char* key) {
    if (!c.contains(key) || !c.at(key).is_number()) throw ConfigError(std::string("missing constant '") + key + "'");
    return c.at(key).get<double>();
}

inline nlohmann::json merge_constants(nlohmann::json defaults, const nlohmann::json& overrides) {
    if (overrides.is_null()) return defaults;
    if (!overrides.is_object()) throw ConfigError("environment constants must be an object");
    for (const auto& [key, value] : overrides.items()) {
        if (!defaults.contains(key)) throw ConfigError("unknown environment constant '" + key + "'");
        defaults[key] = value;
    }
    return defaults;
}

inline Halfspace le(Vector normal, double offset) { return Halfspace{std::move(normal), offset, false}; }
inline Halfspace lt(Vector normal, double offset) { return Halfspace{std::move(normal), offset, true}; }

}  // namespace detail

/// Adaptive cruise control on relative coordinates (x_rel, v_ego).
class CruiseControl : public PiecewiseAffineEnvironment {
public:
    static nlohmann::json defaults() {
        return {{"dt", 0.1},          {"lead_speed", 28.0},  {"accel", 1.0},         {"half_accel_term", false},
                {"x_rel_min", 3.0},   {"x_rel_max", 10.0},   {"v_ego_min", 26.0},    {"v_ego_max", 32.0}};
    }

    explicit CruiseControl(const nlohmann::json& overrides = nullptr) {
        constants_ = detail::merge_constants(defaults(), overrides);
        const double dt = detail::constant(constants_, "dt");
        const double vl = detail::constant(constants_, "lead_speed");
        const double acc = detail::constant(constants_, "accel");
        const bool half = constants_.at("half_accel_term").get<bool>();
        name_ = "cruise_control";
        dim_ = 2;
        actions_ = {"accelerate", "decelerate"};
        fail_ = {{detail::lt({1.0, 0.0}, 0.0)}};
        init_lo_ = {detail::constant(constants_, "x_rel_min"), detail::constant(constants_, "v_ego_min")};
        init_hi_ = {detail::constant(constants_, "x_rel_max"), detail::constant(constants_, "v_ego_max")};
        for (double a : {acc, -acc}) {
            AffineMode m;
            m.name = a > 0 ? "accelerate" : "decelerate";
            m.A = {{1.0, -dt}, {0.0, 1.0}};
            m.c = {vl * dt - (half ? 0.5 * a * dt * dt : 0.0), a * dt};
            modes_.push_back({m});
        }
    }
};

/// Bouncing ball with a paddle: state (height p, velocity v); actions noop and hit.
class BouncingBall : public PiecewiseAffineEnvironment {
public:
    static nlohmann::json defaults() {
        return {{"dt", 0.1},          {"g", 9.81},           {"restitution", 0.9},  {"energy_exact", false},
                {"hit_impulse", 4.0}, {"hit_low", 4.0},      {"hit_high", 9.0},     {"fail_height", 0.1},
                {"fail_speed", 1.0},  {"initial", "small"}};
    }

    explicit BouncingBall(const nlohmann::json& overrides = nullptr) {
        constants_ = detail::merge_constants(defaults(), overrides);
        const double dt = detail::constant(constants_, "dt");
        const double g = detail::constant(constants_, "g");
        double e = detail::constant(constants_, "restitution");
        if (constants_.at("energy_exact").get<bool>()) e = std::sqrt(e);
        const double impulse = detail::constant(constants_, "hit_impulse");
        const double lo = detail::constant(constants_, "hit_low"), hi = detail::constant(constants_, "hit_high");
        const double fh = detail::constant(constants_, "fail_height"), fs = detail::constant(constants_, "fail_speed");
        name_ = "bouncing_ball";
        dim_ = 2;
        actions_ = {"noop", "hit"};
        fail_ = {{detail::le({1.0, 0.0}, fh), detail::le({0.0, 1.0}, fs), detail::le({0.0, -1.0}, fs)}};
        const std::string init = constants_.at("initial").get<std::string>();
        if (init == "small") {
            init_lo_ = {5.0, -0.1};
            init_hi_ = {9.0, 0.0};
        } else if (init == "large") {
            init_lo_ = {5.0, -1.0};
            init_hi_ = {9.0, 1.0};
        } else {
            throw ConfigError("bouncing_ball initial must be 'small' or 'large'");
        }

        // Free flight: (p + v dt, v - g dt), landing: (0, v - g dt), bounce: (0, -e v).
        // Groups: flight, landing and bounce at offsets 0, 1, 2 from the segment base;
        // modes sharing dynamics share a group.
        auto physics = [&](double dv, const Region& extra, const std::string& tag, std::size_t group0) {
            std::vector<AffineMode> ms;
            auto with = [&](Region r) {
                r.insert(r.end(), extra.begin(), extra.end());
                return r;
            };
            if (dv == 0.0)
                ms.push_back({"bounce" + tag, with({detail::le({1, 0}, 0), detail::lt({0, 1}, 0)}),
                              {{0, 0}, {0, -e}}, {0, 0}, group0 + 2});
            const Vector fly_c{dv * dt, dv - g * dt}, land_c{0, dv - g * dt};
            const Region above{detail::lt({-1, 0}, 0)};
            const Region rising{detail::le({1, 0}, 0), detail::le({0, -1}, 0)};
            for (const Region& base : {above, rising}) {
                Region fly = base, land = base;
                fly.push_back(detail::le({-1, -dt}, dv * dt));
                land.push_back(detail::le({1, dt}, -dv * dt));
                ms.push_back({"flight" + tag, with(fly), {{1, dt}, {0, 1}}, fly_c, group0});
                ms.push_back({"landing" + tag, with(land), {{0, 0}, {0, 1}}, land_c, group0 + 1});
            }
            return ms;
        };
        modes_.push_back(physics(0.0, {}, "", 0));
        std::vector<AffineMode> hit = physics(-impulse, {detail::le({-1, 0}, -lo), detail::le({1, 0}, hi)}, "+hit", 0);
        for (auto& m : physics(0.0, {detail::lt({1, 0}, lo)}, "+low", 3)) hit.push_back(m);
        for (auto& m : physics(0.0, {detail::lt({-1, 0}, -hi)}, "+high", 6)) hit.push_back(m);
        modes_.push_back(std::move(hit));
    }
};

/// Inverted pendulum: state (theta, omega); actions noop, left, right.
class Pendulum : public Environment {
public:
    static nlohmann::json defaults() {
        return {{"dt", 0.05},         {"g", 10.0},          {"m", 1.0},            {"l", 1.0},
                {"torque", 2.0},      {"max_speed", 8.0},   {"theta_fail", 0.57},  {"omega_fail", 2.5},
                {"initial_half_width", 0.05},               {"slab_width", 0.05},  {"min_slabs", 4}};
    }

    explicit Pendulum(const nlohmann::json& overrides = nullptr) {
        constants_ = detail::merge_constants(defaults(), overrides);
        dt_ = detail::constant(constants_, "dt");
        const double g = detail::constant(constants_, "g"), m = detail::constant(constants_, "m");
        const double l = detail::constant(constants_, "l");
        gain_ = 3.0 * g / (2.0 * l);
        const double torque = detail::constant(constants_, "torque");
        const double inv = 3.0 / (m * l * l);
        push_ = {0.0, -torque * inv, torque * inv};
        max_speed_ = detail::constant(constants_, "max_speed");
        slab_width_ = detail::constant(constants_, "slab_width");
        min_slabs_ = constants_.at("min_slabs").get<std::size_t>();
        const double tf = detail::constant(constants_, "theta_fail"), wf = detail::constant(constants_, "omega_fail");
        const double hw = detail::constant(constants_, "initial_half_width");
        name_ = "pendulum";
        dim_ = 2;
        actions_ = {"noop", "left", "right"};
        fail_ = {{detail::lt({-1, 0}, -tf)}, {detail::lt({1, 0}, -tf)}, {detail::lt({0, -1}, -wf)}, {detail::lt({0, 1}, -wf)}};
        init_lo_ = {-hw, -hw};
        init_hi_ = {hw, hw};
    }

    Point step(const Point& s, std::size_t a) const override {
        check_action(a);
        const double w = s[1] + (gain_ * std::sin(s[0]) + push_[a]) * dt_;
        return {s[0] + w * dt_, std::clamp(w, -max_speed_, max_speed_)};
    }

    std::vector<ModePost> abstract_post(const Polyhedron& p, std::size_t a) const override {
        const auto [lo, hi] = p.direction_range(0);
        const std::size_t slabs = std::max(min_slabs_, static_cast<std::size_t>(std::ceil((hi - lo) / slab_width_)));
        return {ModePost{0, 0, {}, post_with_slabs(p, a, slabs)}};
    }

    /// Post computed from `slabs` equal-width theta slices, with sin bounded
    /// exactly on each slice and the remaining dynamics solved by LP.
    Polyhedron post_with_slabs(const Polyhedron& p, std::size_t a, std::size_t slabs) const {
        check_action(a);
        if (p.is_empty()) throw EmptyInput("abstract post of an empty polyhedron");
        if (slabs == 0) throw std::invalid_argument("slab count must be positive");
        const auto& t = *p.tmpl();
        const auto [lo, hi] = p.range({1.0, 0.0});
        Vector b(t.size(), -kInf);
        double w_lo = kInf, w_hi = -kInf;
        for (std::size_t k = 0; k < slabs; ++k) {
            const double a0 = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(slabs);
            const double a1 = k + 1 == slabs ? hi : lo + (hi - lo) * static_cast<double>(k + 1) / static_cast<double>(slabs);
            const auto [s0, s1] = sin_range(a0, a1);
            // Variables (theta, omega, sigma) with sigma standing in for sin(theta).
            LinearProgram lp(3, Sense::Maximize);
            p.add_to(lp, 0);
            lp.set_bounds(0, std::max(a0, p.box_lower()[0]), std::min(a1, p.box_upper()[0]));
            lp.set_bounds(2, s0 - 1e-15, s1 + 1e-15);
            // omega' = omega + (gain sigma + push) dt; theta' = theta + omega' dt
            const double cw = gain_ * dt_, cc = push_[a] * dt_;
            auto maximize = [&](const Vector& d) -> std::optional<double> {
                lp.objective = {d[0], d[1] + d[0] * dt_, (d[1] + d[0] * dt_) * cw};
                const LpResult r = solve_lp(lp);
                if (r.status == LpStatus::Infeasible) return std::nullopt;
                if (!r.optimal()) throw NumericalFailure("pendulum post LP did not reach an optimum");
                return r.optimum + (d[1] + d[0] * dt_) * cc;
            };
            bool feasible = true;
            for (std::size_t j = 0; j < t.size() && feasible; ++j) {
                const auto v = maximize(t.direction(j));
                if (!v) feasible = false;
                else b[j] = std::max(b[j], *v);
            }
            if (!feasible) continue;
            // Unclamped omega' range, used to detect the speed clamp.
            w_hi = std::max(w_hi, *maximize({0.0, 1.0}));
            w_lo = std::min(w_lo, -*maximize({0.0, -1.0}));
        }
        for (double& v : b) v += tol::kLpFeasibility * (1.0 + std::abs(v));
        if (w_lo >= -max_speed_ && w_hi <= max_speed_) return Polyhedron(p.tmpl(), std::move(b));
        // The clamp is active somewhere: fall back to the clamped bounding box.
        Polyhedron unclamped(p.tmpl(), std::move(b));
        Vector blo = unclamped.box_lower(), bhi = unclamped.box_upper();
        blo[1] = std::clamp(blo[1], -max_speed_, max_speed_);
        bhi[1] = std::clamp(bhi[1], -max_speed_, max_speed_);
        return Polyhedron::box(p.tmpl(), blo, bhi);
    }

    /// Exact range of sin over [a, b].
    static std::pair<double, double> sin_range(double a, double b) {
        double lo = std::min(std::sin(a), std::sin(b)), hi = std::max(std::sin(a), std::sin(b));
        const double two_pi = 2.0 * std::numbers::pi;
        // Interior maxima at pi/2 + 2k pi, minima at -pi/2 + 2k pi.
        if (std::ceil((a - std::numbers::pi / 2) / two_pi) <= std::floor((b - std::numbers::pi / 2) / two_pi)) hi = 1.0;
        if (std::ceil((a + std::numbers::pi / 2) / two_pi) <= std::floor((b + std::numbers::pi / 2) / two_pi)) lo = -1.0;
        // Guard against libm rounding.
        return {std::max(-1.0, lo - 1e-15), std::min(1.0, hi + 1e-15)};
    }

private:
    double dt_ = 0.05, gain_ = 15.0, max_speed_ = 8.0, slab_width_ = 0.05;
    std::size_t min_slabs_ = 4;
    Vector push_;
};

/// Piecewise-affine environment described entirely in JSON; used for crafted
/// test systems and user models.
class CustomAffineEnvironment : public PiecewiseAffineEnvironment {
public:
    explicit CustomAffineEnvironment(const nlohmann::json& doc) {
        auto region = [](const nlohmann::json& arr) {
            Region r;
            for (const auto& h : arr)
                r.push_back(Halfspace{h.at("normal").get<Vector>(), h.at("offset").get<double>(), h.value("strict", false)});
            return r;
        };
        try {
            constants_ = doc;
            name_ = doc.value("name", std::string("affine"));
            dim_ = doc.at("dimension").get<std::size_t>();
            for (const auto& act : doc.at("actions")) {
                actions_.push_back(act.at("name").get<std::string>());
                std::vector<AffineMode> ms;
                for (const auto& m : act.at("modes")) {
                    AffineMode mode{m.value("name", std::string()), region(m.value("guard", nlohmann::json::array())),
                                    m.at("A").get<std::vector<Vector>>(), m.at("c").get<Vector>(),
                                    m.value("group", std::size_t{0})};
                    if (mode.A.size() != dim_ || mode.c.size() != dim_) throw ConfigError("mode dimension mismatch");
                    ms.push_back(std::move(mode));
                }
                modes_.push_back(std::move(ms));
            }
            for (const auto& f : doc.at("fail")) fail_.push_back(region(f));
            init_lo_ = doc.at("initial").at("lower").get<Vector>();
            init_hi_ = doc.at("initial").at("upper").get<Vector>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("affine environment: ") + e.what());
        }
        if (actions_.size() < 2) throw ConfigError("affine environment needs at least two actions");
    }
};

inline EnvironmentPtr make_environment(const std::string& name, const nlohmann::json& constants = nullptr) {
    if (name == "cruise_control") return std::make_shared<CruiseControl>(constants);
    if (name == "bouncing_ball") return std::make_shared<BouncingBall>(constants);
    if (name == "pendulum") return std::make_shared<Pendulum>(constants);
    if (name == "affine") return std::make_shared<CustomAffineEnvironment>(constants);
    throw ConfigError("unknown environment '" + name + "'");
}

}  // namespace pverify
