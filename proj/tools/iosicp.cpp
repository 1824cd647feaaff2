// Command-line front end for the collaborative-perception pipeline: single
// runs, the four experiment protocols, plot rendering and a deterministic
// self test. Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "iosicp/harness.hpp"

namespace {

using namespace iosicp;

struct CommonOpts {
    std::string config_path;
    std::string params_path;
    std::string scene;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int replicates = 1;
    bool no_hpha = false;
    bool no_selection = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, const std::string& default_scene) {
    o.scene = default_scene;
    cmd->add_option("--config", o.config_path, "scenario config file (key value lines)");
    cmd->add_option("--params", o.params_path,
                    "parameter file overriding gnn.default / sta.default");
    cmd->add_option("--scene", o.scene, "built-in scene when no config file is given");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "base seed")->each([&](const std::string&) {
        o.seed_given = true;
    });
    cmd->add_option("--replicates", o.replicates, "episodes per configuration")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--no-hpha", o.no_hpha, "replace HPHA fusion with a naive mean");
    cmd->add_flag("--no-selection", o.no_selection, "fuse all neighbors unconditionally");
}

RunConfig make_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) {
        std::ifstream is(o.config_path);
        if (!is) throw ConfigError("cannot open config file: " + o.config_path);
        cfg.scenario = parse_scenario_config(is);
    } else {
        cfg.scenario = ScenarioConfig::for_scene(o.scene);
    }
    if (!o.params_path.empty()) {
        std::ifstream is(o.params_path);
        if (!is) throw ConfigError("cannot open params file: " + o.params_path);
        cfg.params = read_params(is);
    }
    cfg.base_seed = o.seed_given ? o.seed : cfg.scenario.seed;
    cfg.replicates = o.replicates;
    cfg.hpha_on = !o.no_hpha;
    cfg.selection_on = !o.no_selection;
    return cfg;
}

std::string write_csv(const std::string& out_dir, const std::string& name,
                      const std::vector<ResultRow>& rows) {
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/" + name + ".csv";
    const std::string csv = rows_to_csv(rows);
    write_text_file(path, csv);
    std::printf("wrote %s (%zu rows)\n", path.c_str(), rows.size());
    return csv;
}

void write_sweep_plots(const std::string& csv, const std::string& out_dir,
                       const std::string& name, const std::string& xlabel) {
    for (const auto& f : emit_plots(csv, out_dir, name, xlabel))
        std::printf("wrote %s\n", f.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iosicp: deterministic collaborative-perception experiments"};
    app.require_subcommand(1);

    CommonOpts run_o, lat_o, dist_o, noise_o, abl_o;
    std::vector<double> lat_values{0.0, 0.1, 0.2, 0.3, 0.4};
    std::vector<double> dist_buckets{10, 20, 30, 40, 50, 60};
    std::vector<double> noise_stds{0.0, 0.2};

    CLI::App* run_cmd = app.add_subcommand("run", "one batch of full episodes");
    add_common(run_cmd, run_o, "dense_traffic");

    CLI::App* lat_cmd =
        app.add_subcommand("sweep-latency", "force the designated collaborator's latency");
    add_common(lat_cmd, lat_o, "latency_probe");
    lat_cmd->add_option("--values", lat_values, "forced latencies in seconds");

    CLI::App* dist_cmd =
        app.add_subcommand("sweep-distance", "AP per ground-truth distance bucket");
    add_common(dist_cmd, dist_o, "sparse_highway");
    dist_cmd->add_option("--buckets", dist_buckets, "bucket centers in meters");

    CLI::App* noise_cmd =
        app.add_subcommand("sweep-noise", "localization noise on collaborator poses");
    add_common(noise_cmd, noise_o, "occlusion");
    noise_cmd->add_option("--stds", noise_stds, "noise standard deviations");

    CLI::App* abl_cmd = app.add_subcommand("ablate", "baseline vs +HPHA vs +HPHA+selection");
    add_common(abl_cmd, abl_o, "ablation");

    std::string plot_csv, plot_name = "sweep", plot_xlabel = "sweep value", plot_out = "out";
    CLI::App* plot_cmd = app.add_subcommand("plot", "render SVG line plots from a results CSV");
    plot_cmd->add_option("--csv", plot_csv, "results CSV path")->required();
    plot_cmd->add_option("--out", plot_out, "output directory");
    plot_cmd->add_option("--name", plot_name, "output base name");
    plot_cmd->add_option("--xlabel", plot_xlabel, "x axis label");

    std::string self_out = "out/selftest";
    std::uint64_t self_seed = 1;
    CLI::App* self_cmd =
        app.add_subcommand("selftest", "deterministic miniature of every protocol");
    self_cmd->add_option("--out", self_out, "output directory");
    self_cmd->add_option("--seed", self_seed, "base seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) {
            RunConfig cfg = make_config(run_o);
            cfg.run_id = "run";
            write_csv(run_o.out_dir, "run", run_batch(cfg));
        } else if (lat_cmd->parsed()) {
            RunConfig cfg = make_config(lat_o);
            const auto rows = sweep_latency(cfg, lat_values);
            const std::string csv = write_csv(lat_o.out_dir, "latency", rows);
            write_sweep_plots(csv, lat_o.out_dir, "latency", "forced latency [s]");
        } else if (dist_cmd->parsed()) {
            RunConfig cfg = make_config(dist_o);
            const auto rows = sweep_distance(cfg, dist_buckets);
            const std::string csv = write_csv(dist_o.out_dir, "distance", rows);
            write_sweep_plots(csv, dist_o.out_dir, "distance", "object distance [m]");
        } else if (noise_cmd->parsed()) {
            RunConfig cfg = make_config(noise_o);
            const auto rows = sweep_noise(cfg, noise_stds);
            const std::string csv = write_csv(noise_o.out_dir, "noise", rows);
            write_sweep_plots(csv, noise_o.out_dir, "noise", "localization noise std");
        } else if (abl_cmd->parsed()) {
            RunConfig cfg = make_config(abl_o);
            write_csv(abl_o.out_dir, "ablate", ablate(cfg));
        } else if (plot_cmd->parsed()) {
            std::ifstream is(plot_csv, std::ios::binary);
            if (!is) throw ConfigError("cannot open CSV: " + plot_csv);
            std::stringstream ss;
            ss << is.rdbuf();
            write_sweep_plots(ss.str(), plot_out, plot_name, plot_xlabel);
        } else if (self_cmd->parsed()) {
            for (const auto& f : selftest(self_out, self_seed))
                std::printf("wrote %s\n", f.c_str());
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
