#pragma once

// Command-line front end. run_cli is kept in the library so tests can drive it
// in-process.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pverify/config.hpp"
#include "pverify/imdp.hpp"
#include "pverify/neural.hpp"
#include "pverify/oracle.hpp"
#include "pverify/plot.hpp"

namespace pverify {

enum ExitCode : int { kExitOk = 0, kExitUnsafe = 1, kExitConfig = 2, kExitBudget = 3 };

inline constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success (verify: no p_safe given, or bound <= p_safe)\n"
    "  1  bound exceeds p_safe\n"
    "  2  invalid config, arguments or input files\n"
    "  3  budget exhausted (state budget cut the unfolding, or the exact tree cap was hit)\n";

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << text;
}

struct Loaded {
    RunConfig config;
    EnvironmentPtr env;
    Network net;
    TemplatePtr tmpl;
};

inline Loaded load_run(const std::string& path) {
    Loaded l;
    l.config = load_config(path);
    l.env = make_environment(l.config);
    try {
        l.net = load_network_file(l.config.network_path().string());
    } catch (const Error& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }
    if (l.net.input_dim != l.env->dimension() || l.net.output_dim != l.env->num_actions())
        throw ConfigError("network shape does not match the environment");
    try {
        l.tmpl = make_template(l.config, l.env->dimension());
    } catch (const InvalidTemplate& e) {
        throw ConfigError(e.what());
    }
    return l;
}

inline Point parse_point(const std::vector<double>& xs, const Environment& env) {
    if (xs.size() != env.dimension()) throw ConfigError("--point needs " + std::to_string(env.dimension()) + " values");
    return xs;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Verification of neural network policies through interval MDP abstractions"};
    app.footer(kExitCodeHelp);
    app.require_subcommand(1);
    std::size_t threads = 1;
    app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)")->capture_default_str();

    std::string config_path, report_path, imdp_path, partition_path;
    auto* verify_cmd = app.add_subcommand("verify", "Build the IMDP abstraction and bound the failure probability");
    verify_cmd->add_option("config", config_path, "Run config (JSON)")->required();
    verify_cmd->add_option("-o,--report", report_path, "Report output path (default: <config stem>_report.json)");
    verify_cmd->add_option("--imdp-dump", imdp_path, "Write the IMDP transitions as text");
    verify_cmd->add_option("--partition", partition_path, "Write the initial-state partition (JSON)");

    std::vector<double> point;
    std::size_t trials = 10000;
    std::uint64_t seed = 0;
    std::string trace_path;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo failure estimate from one initial point");
    sim_cmd->add_option("config", config_path, "Run config (JSON)")->required();
    sim_cmd->add_option("--point", point, "Initial state, comma separated")->required()->delimiter(',');
    sim_cmd->add_option("--trials", trials, "Number of traces")->capture_default_str();
    sim_cmd->add_option("--seed", seed, "Trace seed")->capture_default_str();
    sim_cmd->add_option("--trace", trace_path, "Write the first trace as text");

    auto* exact_cmd = app.add_subcommand("exact", "Exact failure probability by full tree expansion");
    exact_cmd->add_option("config", config_path, "Run config (JSON)")->required();
    exact_cmd->add_option("--point", point, "Initial state, comma separated")->required()->delimiter(',');

    std::string input_path, svg_path = "partition.svg";
    std::vector<std::size_t> axes;
    auto* plot_cmd = app.add_subcommand("plot", "Render a partition dump as SVG");
    plot_cmd->add_option("partition", input_path, "Partition JSON written by verify --partition")->required();
    plot_cmd->add_option("-o,--output", svg_path, "SVG output path")->capture_default_str();
    plot_cmd->add_option("--axes", axes, "Two state axes to plot")->expected(2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*verify_cmd) {
            auto run = detail::load_run(config_path);
            const nlohmann::json resolved = resolved_config(run.config, *run.env);
            const Polyhedron init = initial_region(run.config, *run.env, run.tmpl);
            Imdp m;
            const VerifyReport r = verify(*run.env, run.net, init, verify_options(run.config, threads), &m);
            const nlohmann::json doc = report_to_json(r, resolved);
            if (report_path.empty())
                report_path = std::filesystem::path(config_path).stem().string() + "_report.json";
            detail::write_text(report_path, doc.dump(2) + "\n");
            if (!imdp_path.empty()) {
                std::ofstream f(imdp_path);
                if (!f) throw ConfigError("cannot write '" + imdp_path + "'");
                write_imdp(f, m);
            }
            if (!partition_path.empty()) detail::write_text(partition_path, partition_to_json(m, *run.env).dump() + "\n");
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "bound (maxmax): %.6g\nmaxmin: %.6g (refinement guidance, not a lower bound)\n"
                          "IMDP size: %zu states\npolyhedra: %zu\ncontainment merges: %zu\nruntime: %.2f s\n",
                          r.global_maxmax, r.global_maxmin, r.imdp_states, r.stats.polyhedra,
                          r.stats.containment_merges, r.wall_clock_s);
            out << buf;
            for (const auto& f : r.flags) out << "flag: " << f << '\n';
            if (r.pass) out << (*r.pass ? "PASS" : "FAIL") << " at p_safe = " << *r.p_safe << '\n';
            out << "report: " << report_path << '\n';
            if (r.stats.budget_exhausted) return kExitBudget;
            if (r.pass && !*r.pass) return kExitUnsafe;
            return kExitOk;
        }
        if (*sim_cmd) {
            auto run = detail::load_run(config_path);
            const Point s0 = detail::parse_point(point, *run.env);
            const McEstimate est = mc_failure_estimate(*run.env, run.net, s0, run.config.horizon, trials, seed, threads);
            if (!trace_path.empty()) {
                std::ofstream f(trace_path);
                if (!f) throw ConfigError("cannot write '" + trace_path + "'");
                write_trace(f, simulate_trace(*run.env, run.net, s0, run.config.horizon, derive_seed(seed, 0)));
            }
            out << nlohmann::json{{"estimate", est.estimate},
                                  {"trials", est.trials},
                                  {"failures", est.failures},
                                  {"wilson_ci", {est.ci_lo, est.ci_hi}}}
                       .dump()
                << '\n';
            return kExitOk;
        }
        if (*exact_cmd) {
            auto run = detail::load_run(config_path);
            const Point s0 = detail::parse_point(point, *run.env);
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g\n", exact_tree_probability(*run.env, run.net, s0, run.config.horizon));
            out << buf;
            return kExitOk;
        }
        if (*plot_cmd) {
            std::ifstream in(input_path);
            if (!in) throw ConfigError("cannot open '" + input_path + "'");
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError(std::string("malformed partition: ") + e.what());
            }
            PlotOptions po;
            if (axes.size() == 2) {
                po.axis_x = axes[0];
                po.axis_y = axes[1];
                po.axes_given = true;
            }
            detail::write_text(svg_path, render_partition_svg(doc, po));
            out << "wrote " << doc.at("leaves").size() << " leaves to " << svg_path << '\n';
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const CapExceeded& e) {
        err << "error: " << e.what() << '\n';
        return kExitBudget;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace pverify
