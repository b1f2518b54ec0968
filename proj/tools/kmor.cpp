// kmor: staged command-line driver.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 missing or stale dependency.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kmor/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitDependency = 4;

struct Options {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::string> stages;
    std::string format = "markdown";
    std::string report_path;
};

kmor::PipelineConfig load(const Options& o, const CLI::App& app) {
    kmor::PipelineConfig cfg = kmor::load_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (app.count("--seed") > 0) cfg.seed = o.seed;
    return cfg;
}

void print_outcomes(const std::vector<kmor::StageOutcome>& outcomes) {
    for (const auto& oc : outcomes) {
        std::printf("%-18s %s (%.3f s)\n", kmor::stage_name(oc.stage), oc.skipped ? "up to date" : "done",
                    oc.seconds);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reduced-order eddy-current pipeline"};
    app.require_subcommand(0, 1);
    Options o;
    app.add_option("--config", o.config, "Pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--out", o.out, "Output directory (overrides output_dir)");
    app.add_option("--seed", o.seed, "Top-level random seed (overrides seed)");
    app.add_option("--stage", o.stages, "Additional stage to run; repeatable")
        ->take_all()
        ->allow_extra_args(false);

    std::vector<kmor::Stage> requested;
    auto stage_cmd = [&](CLI::App* parent, const char* name, const char* help, kmor::Stage s) {
        parent->add_subcommand(name, help)->callback([&requested, s] { requested.push_back(s); });
    };
    stage_cmd(&app, "generate", "Assemble the filament model", kmor::Stage::generate);
    stage_cmd(&app, "transient", "Full-order transient", kmor::Stage::full_transient);
    CLI::App* mor = app.add_subcommand("mor", "Reduced model construction and solution");
    mor->require_subcommand(1);
    stage_cmd(mor, "build", "Forcing manifold and Krylov enrichment", kmor::Stage::mor_build);
    stage_cmd(mor, "solve", "Reduced transient", kmor::Stage::mor_transient);
    stage_cmd(&app, "compare", "Full vs reduced current error", kmor::Stage::compare);
    stage_cmd(&app, "nullfield", "Null-field control currents", kmor::Stage::nullfield);
    CLI::App* sur = app.add_subcommand("surrogate", "POD and neural-network surrogate");
    sur->require_subcommand(1);
    stage_cmd(sur, "dataset", "Sample parameters and simulate snapshots", kmor::Stage::surrogate_dataset);
    stage_cmd(sur, "pod", "Compress snapshots", kmor::Stage::surrogate_pod);
    stage_cmd(sur, "train", "Train the coefficient network", kmor::Stage::surrogate_train);
    stage_cmd(sur, "predict", "Evaluate on held-out parameters", kmor::Stage::surrogate_predict);
    CLI::App* report = app.add_subcommand("report", "Summarize persisted artifacts");
    report->add_option("--format", o.format, "json, csv or markdown")
        ->check(CLI::IsMember({"json", "csv", "markdown", "md"}));
    report->add_option("-o,--output", o.report_path, "Write to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        const kmor::PipelineConfig cfg = load(o, app);
        for (const auto& s : o.stages) requested.push_back(kmor::parse_stage(s));
        if (!requested.empty()) print_outcomes(kmor::run_pipeline(cfg, requested));
        if (report->parsed()) {
            const kmor::RunReport rep = kmor::collect_report(cfg);
            const auto fmt = kmor::parse_report_format(o.format);
            if (o.report_path.empty()) {
                std::cout << kmor::render_report(rep, fmt);
            } else {
                kmor::export_report(rep, fmt, o.report_path);
            }
        } else if (requested.empty()) {
            std::cerr << "nothing to do: give a subcommand or --stage\n" << app.help();
            return kExitConfig;
        }
    } catch (const kmor::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const kmor::StageError& e) {
        std::cerr << "missing dependency: " << e.what() << '\n';
        return kExitDependency;
    } catch (const kmor::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
