#pragma once

// SVG rendering of a refinement partition: one polygon per leaf, filled with
// the midpoints of the action probability intervals as colour channels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pverify/errors.hpp"
#include "pverify/geometry.hpp"
#include "pverify/linprog.hpp"

namespace pverify {

using Polygon = std::vector<std::array<double, 2>>;

/// Clips a convex polygon against {x : a x + b y <= c}.
inline Polygon clip_polygon(const Polygon& poly, double a, double b, double c) {
    Polygon out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % poly.size()];
        const double fp = a * p[0] + b * p[1] - c, fq = a * q[0] + b * q[1] - c;
        if (fp <= 0.0) out.push_back(p);
        if ((fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0)) {
            const double t = fp / (fp - fq);
            out.push_back({p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])});
        }
    }
    return out;
}

/// Outline of {x : <d_j, x> <= b_j} projected onto axes (ax, ay). Exact for
/// two-dimensional polyhedra; higher dimensions use supports at 64 angles.
inline Polygon polyhedron_outline(const std::vector<Vector>& dirs, const Vector& b, std::size_t ax, std::size_t ay) {
    const std::size_t n = dirs.front().size();
    LinearProgram lp(n, Sense::Maximize);
    for (std::size_t j = 0; j < dirs.size(); ++j) lp.add_constraint(dirs[j], Relation::LessEqual, b[j]);
    auto support = [&](double cx, double cy) {
        lp.objective.assign(n, 0.0);
        lp.objective[ax] = cx;
        lp.objective[ay] = cy;
        const LpResult r = solve_lp(lp);
        if (!r.optimal()) throw DegenerateGeometry("leaf polyhedron is empty or unbounded");
        return r.optimum;
    };
    const double xhi = support(1, 0), xlo = -support(-1, 0), yhi = support(0, 1), ylo = -support(0, -1);
    Polygon poly{{xlo, ylo}, {xhi, ylo}, {xhi, yhi}, {xlo, yhi}};
    if (n == 2) {
        for (std::size_t j = 0; j < dirs.size(); ++j) poly = clip_polygon(poly, dirs[j][ax], dirs[j][ay], b[j]);
        return poly;
    }
    for (int i = 0; i < 64; ++i) {
        const double th = 2.0 * std::numbers::pi * i / 64.0;
        poly = clip_polygon(poly, std::cos(th), std::sin(th), support(std::cos(th), std::sin(th)));
    }
    return poly;
}

/// Colour channel (0 red, 1 green, 2 blue) of each action. Pendulum-style
/// names map noop, right and left to red, green and blue; otherwise actions
/// take channels in order.
inline std::vector<int> action_channels(const std::vector<std::string>& names) {
    std::vector<int> ch(names.size(), -1);
    const auto find = [&](const char* n) { return std::find(names.begin(), names.end(), n) - names.begin(); };
    const auto noop = find("noop"), right = find("right"), left = find("left");
    const auto k = static_cast<std::ptrdiff_t>(names.size());
    if (noop < k && right < k && left < k) {
        ch[noop] = 0;
        ch[right] = 1;
        ch[left] = 2;
        return ch;
    }
    for (std::size_t i = 0; i < names.size() && i < 3; ++i) ch[i] = static_cast<int>(i);
    return ch;
}

struct PlotOptions {
    std::size_t axis_x = 0, axis_y = 1;
    bool axes_given = false;
    double width = 640.0, height = 480.0;
};

/// Renders a partition document (see partition_to_json) as SVG.
inline std::string render_partition_svg(const nlohmann::json& doc, const PlotOptions& opt = {}) {
    const std::size_t dim = doc.at("dimension").get<std::size_t>();
    if (dim > 2 && !opt.axes_given) throw DimensionError("more than two axes: select a projection");
    if (opt.axis_x >= dim || opt.axis_y >= dim || opt.axis_x == opt.axis_y) throw DimensionError("invalid axis selection");
    const auto dirs = doc.at("directions").get<std::vector<Vector>>();
    const auto names = doc.at("actions").get<std::vector<std::string>>();
    const auto channels = action_channels(names);

    struct Item {
        Polygon poly;
        std::array<int, 3> rgb;
    };
    std::vector<Item> items;
    double xlo = kInf, xhi = -kInf, ylo = kInf, yhi = -kInf;
    for (const auto& leaf : doc.at("leaves")) {
        Item it{polyhedron_outline(dirs, leaf.at("bounds").get<Vector>(), opt.axis_x, opt.axis_y), {0, 0, 0}};
        const auto iv = leaf.at("intervals").get<std::vector<std::array<double, 2>>>();
        for (std::size_t a = 0; a < iv.size() && a < channels.size(); ++a)
            if (channels[a] >= 0)
                it.rgb[channels[a]] = static_cast<int>(std::lround(255.0 * std::clamp(0.5 * (iv[a][0] + iv[a][1]), 0.0, 1.0)));
        for (const auto& p : it.poly) {
            xlo = std::min(xlo, p[0]);
            xhi = std::max(xhi, p[0]);
            ylo = std::min(ylo, p[1]);
            yhi = std::max(yhi, p[1]);
        }
        items.push_back(std::move(it));
    }
    if (items.empty()) xlo = ylo = 0.0, xhi = yhi = 1.0;
    const double sx = opt.width / std::max(xhi - xlo, 1e-12), sy = opt.height / std::max(yhi - ylo, 1e-12);

    std::ostringstream out;
    char buf[96];
    std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\">\n", opt.width,
                  opt.height);
    out << buf;
    for (const auto& it : items) {
        out << "<polygon points=\"";
        for (std::size_t i = 0; i < it.poly.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.3f,%.3f", i ? " " : "", (it.poly[i][0] - xlo) * sx,
                          (yhi - it.poly[i][1]) * sy);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "\" fill=\"rgb(%d,%d,%d)\" stroke=\"black\" stroke-width=\"0.5\"/>\n", it.rgb[0],
                      it.rgb[1], it.rgb[2]);
        out << buf;
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace pverify
