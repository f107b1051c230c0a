#include "qmetasur/errors.hpp"
#include "qmetasur/log.hpp"
#include "qmetasur/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace qmetasur;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::string out;
    std::string name;
    bool quiet = false;
};

// Defaults <- config file <- environment <- flags.
auto resolve(const Common& c) -> pipeline::RunConfig {
    nlohmann::json j = nlohmann::json::object();
    if (!c.config.empty()) {
        std::ifstream in(c.config);
        if (!in) {
            throw ConfigError("missing artifact " + c.config + " (config file)");
        }
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(c.config + ": " + e.what());
        }
    }
    j = pipeline::apply_env_overrides(j, [](const char* k) { return std::getenv(k); });
    if (c.seed) {
        j["seed"] = *c.seed;
    }
    if (c.runs) {
        j["runs"] = *c.runs;
    }
    if (!c.out.empty()) {
        j["out"] = c.out;
    }
    if (!c.name.empty()) {
        j["name"] = c.name;
    }
    return pipeline::config_from_json(j);
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON run configuration");
    sub->add_option("--seed", c.seed, "Base seed");
    sub->add_option("--runs", c.runs, "Independent optimization runs");
    sub->add_option("--out", c.out, "Root directory holding run directories");
    sub->add_option("--name", c.name, "Run name (directory under --out)");
    sub->add_flag("--quiet", c.quiet, "Only warnings on stderr");
}

void print_written(const pipeline::CommandResult& r) {
    for (const auto& p : r.written) {
        std::cout << p.string() << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline multi-task multi-objective optimization with a sequence-model surrogate"};
    app.require_subcommand(1);
    Common common;
    std::string mode = "qmetasur";
    std::vector<std::string> run_dirs;
    std::string report_out;

    auto* gen = app.add_subcommand("gen-data", "Sample the offline dataset (LHS) and write data/");
    auto* train = app.add_subcommand("train", "Supervised then offline-RL fine-tuning; writes ckpt/");
    auto* eval = app.add_subcommand("eval-surrogate", "Per-task, per-objective sMAE and R2 tables");
    auto* opt = app.add_subcommand("optimize", "MO-MaTDE runs; writes fronts/, trace/ and metrics/igd-<mode>.tsv");
    auto* report = app.add_subcommand("report", "MSS and Wilcoxon verdicts across methods");
    auto* show = app.add_subcommand("show-config", "Print the resolved configuration");
    for (auto* s : {gen, train, eval, opt, report, show}) {
        add_common(s, common);
    }
    opt->add_option("--mode", mode, "Fitness source")->check(CLI::IsMember({"real", "qmetasur", "rbfn"}));
    report->add_option("run_dirs", run_dirs, "Run directories (default: the configured run)");
    report->add_option("--report-dir", report_out, "Where mss.tsv goes (default: <run>/metrics)");

    CLI11_PARSE(app, argc, argv);
    if (common.quiet) {
        log::set_level(log::Level::Warn);
    }
    try {
        const auto cfg = resolve(common);
        if (*gen) {
            print_written(pipeline::cmd_gen_data(cfg));
        } else if (*train) {
            print_written(pipeline::cmd_train(cfg));
        } else if (*eval) {
            print_written(pipeline::cmd_eval_surrogate(cfg));
        } else if (*opt) {
            print_written(pipeline::cmd_optimize(cfg, pipeline::parse_mode(mode)));
        } else if (*report) {
            std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
            if (dirs.empty()) {
                dirs.push_back(cfg.run_dir());
            }
            const fs::path out = report_out.empty() ? cfg.run_dir() / "metrics" : fs::path(report_out);
            print_written(pipeline::cmd_report(dirs, out));
        } else if (*show) {
            std::cout << pipeline::to_json(cfg).dump(2) << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error\t" << e.kind() << '\t' << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error\tInternal\t" << e.what() << '\n';
        return 3;
    }
    return 0;
}
