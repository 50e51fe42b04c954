#pragma once

// Certified logit bounds over a polyhedron (big-M MILP solved by best-first
// branch and bound) and the softmax probability intervals derived from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"
#include "pverify/linprog.hpp"
#include "pverify/neural.hpp"
#include "pverify/tolerances.hpp"

namespace pverify {

struct BoundsOptions {
    /// Global big-M supplied by the user; 0 selects per-neuron values from the pre-pass.
    double big_m = 0.0;
    /// Safety factor applied to pre-pass bounds when they become big-M constants.
    double big_m_factor = 1.05;
    std::size_t node_budget = 10000;
};

struct LogitBounds {
    Vector lower;
    Vector upper;
    bool certified = true;
    std::size_t nodes = 0;
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return lower.size(); }
};

struct ProbInterval {
    double lower = 0.0;
    double upper = 1.0;

    bool contains(double p, double slack = 0.0) const { return p >= lower - slack && p <= upper + slack; }
    double width() const noexcept { return upper - lower; }
};

struct PolicyAbstraction {
    std::vector<ProbInterval> intervals;
    double spread = 0.0;
    bool certified = true;
};

/// Per-neuron pre-activation bounds over a polyhedron.
struct NeuronBounds {
    std::vector<Vector> lower;  // [hidden layer][neuron]
    std::vector<Vector> upper;
    Vector logit_lower;
    Vector logit_upper;
};

namespace detail {

// Linear form over the input coordinates plus a trailing constant.
using Affine = Vector;

inline double affine_max_over_box(const Affine& f, const Vector& lo, const Vector& hi) {
    double s = f.back();
    for (std::size_t i = 0; i + 1 < f.size(); ++i) s += f[i] > 0.0 ? f[i] * hi[i] : f[i] * lo[i];
    return s;
}

inline double affine_min_over_box(const Affine& f, const Vector& lo, const Vector& hi) {
    double s = f.back();
    for (std::size_t i = 0; i + 1 < f.size(); ++i) s += f[i] > 0.0 ? f[i] * lo[i] : f[i] * hi[i];
    return s;
}

inline std::pair<double, double> affine_range_over(const Affine& f, const Polyhedron& p) {
    const Vector coeffs(f.begin(), f.end() - 1);
    const auto [lo, hi] = p.range(coeffs);
    return {lo + f.back(), hi + f.back()};
}

// Outward rounding guard for floating-point accumulation in the pre-pass.
inline double widen(double x) { return 1e-12 * (1.0 + std::abs(x)); }

}  // namespace detail

/// Interval arithmetic combined with symbolic linear bounds (each neuron bounded
/// above and below by affine functions of the input). The first layer is
/// concretized exactly over p, deeper layers over p's bounding box.
inline NeuronBounds neuron_bounds(const Network& net, const Polyhedron& p) {
    if (p.is_empty()) throw EmptyInput("neuron bounds over an empty polyhedron");
    const std::size_t n = net.input_dim;
    if (p.dimension() != n) throw DimensionMismatch(0, "polyhedron dimension differs from network input");
    const Vector& blo = p.box_lower();
    const Vector& bhi = p.box_upper();

    std::vector<detail::Affine> eq_lo(n, detail::Affine(n + 1, 0.0)), eq_up;
    for (std::size_t i = 0; i < n; ++i) eq_lo[i][i] = 1.0;
    eq_up = eq_lo;
    Vector ilo = blo, ihi = bhi;

    NeuronBounds out;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& L = net.layers[li];
        std::vector<detail::Affine> pre_lo(L.outputs, detail::Affine(n + 1, 0.0)), pre_up = pre_lo;
        Vector l(L.outputs), u(L.outputs);
        for (std::size_t r = 0; r < L.outputs; ++r) {
            double al = L.bias[r], au = L.bias[r];
            pre_lo[r].back() = pre_up[r].back() = L.bias[r];
            for (std::size_t c = 0; c < L.inputs; ++c) {
                const double w = L.w(r, c);
                if (w == 0.0) continue;
                const auto& lo_src = w > 0.0 ? eq_lo[c] : eq_up[c];
                const auto& up_src = w > 0.0 ? eq_up[c] : eq_lo[c];
                for (std::size_t k = 0; k <= n; ++k) {
                    pre_lo[r][k] += w * lo_src[k];
                    pre_up[r][k] += w * up_src[k];
                }
                al += w > 0.0 ? w * ilo[c] : w * ihi[c];
                au += w > 0.0 ? w * ihi[c] : w * ilo[c];
            }
            double sl, su;
            if (li == 0) {
                sl = detail::affine_range_over(pre_lo[r], p).first;
                su = detail::affine_range_over(pre_up[r], p).second;
            } else {
                sl = detail::affine_min_over_box(pre_lo[r], blo, bhi);
                su = detail::affine_max_over_box(pre_up[r], blo, bhi);
            }
            l[r] = std::max(al, sl);
            u[r] = std::min(au, su);
            l[r] -= detail::widen(l[r]);
            u[r] += detail::widen(u[r]);
            if (l[r] > u[r]) std::swap(l[r], u[r]);
        }
        if (L.activation == Activation::Linear) {
            out.logit_lower = l;
            out.logit_upper = u;
            break;
        }
        out.lower.push_back(l);
        out.upper.push_back(u);

        // ReLU relaxation of the symbolic forms.
        eq_lo.assign(L.outputs, detail::Affine(n + 1, 0.0));
        eq_up.assign(L.outputs, detail::Affine(n + 1, 0.0));
        ilo.assign(L.outputs, 0.0);
        ihi.assign(L.outputs, 0.0);
        for (std::size_t r = 0; r < L.outputs; ++r) {
            ilo[r] = std::max(l[r], 0.0);
            ihi[r] = std::max(u[r], 0.0);
            if (u[r] <= 0.0) continue;
            if (l[r] >= 0.0) {
                eq_lo[r] = pre_lo[r];
                eq_up[r] = pre_up[r];
                continue;
            }
            const double uu = detail::affine_max_over_box(pre_up[r], blo, bhi);
            const double ul = detail::affine_min_over_box(pre_up[r], blo, bhi);
            if (ul >= 0.0) {
                eq_up[r] = pre_up[r];
            } else if (uu > 0.0) {
                const double lambda = uu / (uu - ul);
                for (std::size_t k = 0; k <= n; ++k) eq_up[r][k] = lambda * pre_up[r][k];
                eq_up[r].back() -= lambda * ul;
            }
            // relu(x) >= x when the upper side dominates, else >= 0.
            if (u[r] > -l[r]) eq_lo[r] = pre_lo[r];
        }
    }
    return out;
}

namespace detail {

// Big-M mixed-integer encoding of the network over p. State variables come
// first; each unstable neuron contributes (z, a) with a the activity indicator.
struct MilpEncoding {
    LinearProgram base{1, Sense::Maximize};
    std::vector<std::size_t> indicators;  // LP variable index of each a
    std::vector<Affine> logits;           // over LP variables, constant last
    std::size_t state_dim = 0;
};

inline MilpEncoding encode_network(const Network& net, const Polyhedron& p, const NeuronBounds& nb,
                                   const BoundsOptions& opt, std::vector<std::string>& warnings) {
    const std::size_t n = net.input_dim;
    std::size_t unstable = 0;
    double needed_m = 0.0;
    for (std::size_t li = 0; li < nb.lower.size(); ++li)
        for (std::size_t r = 0; r < nb.lower[li].size(); ++r) {
            if (nb.lower[li][r] < 0.0 && nb.upper[li][r] > 0.0) ++unstable;
            needed_m = std::max({needed_m, std::abs(nb.lower[li][r]), std::abs(nb.upper[li][r])});
        }
    double global_m = 0.0;
    if (opt.big_m > 0.0) {
        global_m = opt.big_m;
        if (global_m < needed_m) {
            warnings.push_back("big_m " + std::to_string(opt.big_m) + " enlarged to " + std::to_string(needed_m));
            global_m = needed_m;
        }
    }

    const std::size_t vars = n + 2 * unstable;
    MilpEncoding enc;
    enc.state_dim = n;
    enc.base = LinearProgram(vars, Sense::Maximize);
    p.add_to(enc.base, 0);

    std::vector<Affine> outs(n, Affine(vars + 1, 0.0));
    for (std::size_t i = 0; i < n; ++i) outs[i][i] = 1.0;
    std::size_t next = n;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& L = net.layers[li];
        std::vector<Affine> pre(L.outputs, Affine(vars + 1, 0.0));
        for (std::size_t r = 0; r < L.outputs; ++r) {
            pre[r].back() = L.bias[r];
            for (std::size_t c = 0; c < L.inputs; ++c) {
                const double w = L.w(r, c);
                if (w == 0.0) continue;
                const Affine& src = outs[c];
                for (std::size_t k = 0; k <= vars; ++k)
                    if (src[k] != 0.0) pre[r][k] += w * src[k];
            }
        }
        if (L.activation == Activation::Linear) {
            enc.logits = std::move(pre);
            break;
        }
        std::vector<Affine> next_outs(L.outputs, Affine(vars + 1, 0.0));
        for (std::size_t r = 0; r < L.outputs; ++r) {
            const double l = nb.lower[li][r], u = nb.upper[li][r];
            if (u <= 0.0) continue;
            if (l >= 0.0) {
                next_outs[r] = pre[r];
                continue;
            }
            const double m_hi = global_m > 0.0 ? global_m : opt.big_m_factor * u;
            const double m_lo = global_m > 0.0 ? -global_m : opt.big_m_factor * l;
            const std::size_t z = next++, a = next++;
            Vector row(vars, 0.0);
            // z >= pre
            for (std::size_t k = 0; k < vars; ++k) row[k] = pre[r][k];
            row[z] -= 1.0;
            enc.base.add_constraint(row, Relation::LessEqual, -pre[r].back());
            // z <= pre - m_lo (1 - a)
            for (std::size_t k = 0; k < vars; ++k) row[k] = -pre[r][k];
            row[z] += 1.0;
            row[a] -= m_lo;
            enc.base.add_constraint(row, Relation::LessEqual, pre[r].back() - m_lo);
            // z <= m_hi a
            std::fill(row.begin(), row.end(), 0.0);
            row[z] = 1.0;
            row[a] = -m_hi;
            enc.base.add_constraint(row, Relation::LessEqual, 0.0);
            enc.base.set_bounds(z, 0.0, m_hi);
            enc.base.set_bounds(a, 0.0, 1.0);
            enc.indicators.push_back(a);
            next_outs[r][z] = 1.0;
        }
        outs = std::move(next_outs);
    }
    return enc;
}

struct BranchResult {
    double value = 0.0;
    bool certified = true;
    std::size_t nodes = 0;
};

// Maximizes sign * logit_j over the encoding.
inline BranchResult branch_and_bound(const Network& net, const MilpEncoding& enc, std::size_t j, double sign,
                                     std::size_t node_budget) {
    const std::size_t vars = enc.base.num_vars();
    const Affine& f = enc.logits[j];
    LinearProgram lp = enc.base;
    for (std::size_t k = 0; k < vars; ++k) lp.objective[k] = sign * f[k];
    const double offset = sign * f.back();

    struct Node {
        double bound;
        std::size_t id;
        std::vector<std::int8_t> fix;  // -1 free, 0 inactive, 1 active
    };
    auto worse = [](const Node& x, const Node& y) { return x.bound < y.bound || (x.bound == y.bound && x.id > y.id); };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

    BranchResult out;
    double incumbent = -kInf;
    double settled = -kInf;  // max bound over pruned or closed nodes
    std::size_t ids = 0;
    open.push(Node{kInf, ids++, std::vector<std::int8_t>(enc.indicators.size(), -1)});

    while (!open.empty()) {
        if (out.nodes >= node_budget) {
            out.certified = false;
            break;
        }
        Node node = open.top();
        open.pop();
        if (node.bound <= incumbent + tol::kBranchGap) {
            settled = std::max(settled, node.bound);
            continue;
        }
        for (std::size_t i = 0; i < enc.indicators.size(); ++i) {
            const std::size_t a = enc.indicators[i];
            if (node.fix[i] < 0)
                lp.set_bounds(a, 0.0, 1.0);
            else
                lp.set_bounds(a, node.fix[i], node.fix[i]);
        }
        ++out.nodes;
        LpResult r;
        try {
            r = solve_lp(lp);
        } catch (const NumericalFailure&) {
            if (!std::isfinite(node.bound)) throw;
            out.certified = false;
            settled = std::max(settled, node.bound);
            continue;
        }
        if (r.status == LpStatus::Infeasible) continue;
        if (r.status == LpStatus::Unbounded) throw NumericalFailure("unbounded MILP relaxation");
        const double value = std::min(node.bound, r.optimum + offset);

        const Point x(r.witness.begin(), r.witness.begin() + static_cast<std::ptrdiff_t>(enc.state_dim));
        incumbent = std::max(incumbent, sign * forward_logits(net, x)[j]);
        if (value <= incumbent + tol::kBranchGap) {
            settled = std::max(settled, value);
            continue;
        }
        std::optional<std::size_t> pick;
        double best = tol::kIntegrality;
        for (std::size_t i = 0; i < enc.indicators.size(); ++i) {
            if (node.fix[i] >= 0) continue;
            const double v = r.witness[enc.indicators[i]];
            const double frac = std::min(v, 1.0 - v);
            if (frac > best) {
                best = frac;
                pick = i;
            }
        }
        if (!pick) {
            settled = std::max(settled, value);
            continue;
        }
        for (std::int8_t side : {std::int8_t{0}, std::int8_t{1}}) {
            Node child{value, ids++, node.fix};
            child.fix[*pick] = side;
            open.push(std::move(child));
        }
    }
    double result = std::max(incumbent, settled);
    if (!open.empty()) result = std::max(result, open.top().bound);
    if (!std::isfinite(result)) throw EmptyInput("network encoding is infeasible over the polyhedron");
    out.value = result;
    return out;
}

}  // namespace detail

/// Certified per-action logit bounds over p.
inline LogitBounds logit_bounds(const Network& net, const Polyhedron& p, const BoundsOptions& opt = {}) {
    if (p.is_empty()) throw EmptyInput("logit bounds over an empty polyhedron");
    NeuronBounds nb = neuron_bounds(net, p);
    LogitBounds out;
    const auto enc = detail::encode_network(net, p, nb, opt, out.warnings);
    const std::size_t k = net.output_dim;
    out.lower.resize(k);
    out.upper.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        double hi = nb.logit_upper[j], lo = nb.logit_lower[j];
        try {
            const auto up = detail::branch_and_bound(net, enc, j, 1.0, opt.node_budget);
            const auto dn = detail::branch_and_bound(net, enc, j, -1.0, opt.node_budget);
            hi = std::min(hi, up.value);
            lo = std::max(lo, -dn.value);
            out.certified = out.certified && up.certified && dn.certified;
            out.nodes += up.nodes + dn.nodes;
        } catch (const NumericalFailure& e) {
            // The pre-pass bounds remain sound.
            out.certified = false;
            out.warnings.push_back(e.what());
        }
        out.upper[j] = hi + tol::kLogitPadding * (1.0 + std::abs(hi));
        out.lower[j] = lo - tol::kLogitPadding * (1.0 + std::abs(lo));
    }
    return out;
}

/// Order-preserving worst-case combination: action j is most likely when its
/// logit is at its upper bound and every other logit at its lower bound.
inline std::vector<ProbInterval> softmax_intervals(const LogitBounds& lb) {
    const std::size_t k = lb.size();
    std::vector<ProbInterval> out(k);
    for (std::size_t j = 0; j < k; ++j) {
        Vector v = lb.lower, w = lb.upper;
        v[j] = lb.upper[j];
        w[j] = lb.lower[j];
        out[j] = ProbInterval{softmax(w)[j], softmax(v)[j]};
    }
    return out;
}

inline double max_spread(const std::vector<ProbInterval>& intervals) {
    double s = 0.0;
    for (const auto& iv : intervals) s = std::max(s, iv.width());
    return s;
}

inline PolicyAbstraction policy_abstraction(const Network& net, const Polyhedron& p, const BoundsOptions& opt = {}) {
    const LogitBounds lb = logit_bounds(net, p, opt);
    PolicyAbstraction out;
    out.intervals = softmax_intervals(lb);
    for (auto& iv : out.intervals) {
        iv.lower = std::max(0.0, iv.lower - tol::kProbabilityPadding);
        iv.upper = std::min(1.0, iv.upper + tol::kProbabilityPadding);
    }
    out.spread = max_spread(out.intervals);
    out.certified = lb.certified;
    return out;
}

}  // namespace pverify
