// reasonlab CLI: validate / search / export / eval / report.
//
// Configuration precedence: flags > environment > config file > built-in
// defaults. API keys are environment-only (see profile api_key_env).

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "reasonlab/config.hpp"
#include "reasonlab/errors.hpp"
#include "reasonlab/exporter.hpp"
#include "reasonlab/pipeline.hpp"

namespace {

using namespace reasonlab;
namespace fs = std::filesystem;

struct GlobalFlags {
    std::string config_file;
    std::string output_dir;
    std::string cache_dir;
    std::optional<std::int64_t> base_seed;
    bool strict = false;
    std::optional<int> instance_parallel;
};

RunConfig resolve_config(const GlobalFlags& flags) {
    RunConfig cfg;
    if (!flags.config_file.empty()) {
        cfg = RunConfig::load_file(flags.config_file);
    }
    cfg.apply_environment();
    if (!flags.output_dir.empty()) cfg.output_dir = flags.output_dir;
    if (!flags.cache_dir.empty()) cfg.cache_dir = flags.cache_dir;
    if (flags.base_seed) {
        cfg.search.base_seed = static_cast<std::uint64_t>(*flags.base_seed);
    }
    if (flags.strict) cfg.strict = true;
    if (flags.instance_parallel) cfg.instance_parallel = *flags.instance_parallel;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "reasonlab: search per-question reasoning-action trajectories, export "
        "planner training data, and evaluate reasoning strategies"};
    app.require_subcommand(1);

    GlobalFlags flags;
    app.add_option("-c,--config", flags.config_file, "Run config JSON file");
    app.add_option("--output-dir", flags.output_dir, "Override the output directory");
    app.add_option("--cache-dir", flags.cache_dir, "Override the generation cache directory");
    std::int64_t seed_value = 0;
    auto* seed_opt = app.add_option("--base-seed", seed_value,
                                    "Override the base seed all trial seeds derive from");
    app.add_flag("--strict", flags.strict,
                 "Fail instead of degrading (e.g. missing explanation generator)");
    int parallel_value = 0;
    auto* parallel_opt = app.add_option("--instance-parallel", parallel_value,
                                        "Concurrent instances in corpus runs");

    // validate
    auto* validate_cmd = app.add_subcommand(
        "validate", "Check corpus files against the instance schema");
    std::vector<std::string> validate_paths;
    validate_cmd->add_option("corpora", validate_paths, "JSON-lines corpus files")
        ->required();

    // search
    auto* search_cmd = app.add_subcommand(
        "search", "Search the optimal trajectory for every training instance");
    std::string train_override;
    search_cmd->add_option("--train", train_override, "Training corpus (overrides config)");

    // export
    auto* export_cmd =
        app.add_subcommand("export", "Build SFT records from search outcomes");
    std::string flavor_name = "external";
    export_cmd->add_option("--flavor", flavor_name,
                           "external (explanation+trajectory) or internalized "
                           "(+reasoning+answer)");
    int upsample_factor = -1;
    export_cmd->add_option("--upsample-factor", upsample_factor,
                           "Weight for few-shot source instances");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a reasoning strategy on a split");
    std::string mode = "static:cot";
    eval_cmd->add_option("--mode", mode,
                         "static:<solution>|static:<a>,<s>,<v>|planner|oracle");
    std::string run_name;
    eval_cmd->add_option("--run-name", run_name, "Artifact directory name");
    std::string eval_override;
    eval_cmd->add_option("--split-file", eval_override, "Eval corpus (overrides config)");

    // report
    auto* report_cmd =
        app.add_subcommand("report", "Compare finished eval runs (tokens, accuracy)");
    std::vector<std::string> run_dirs;
    report_cmd->add_option("runs", run_dirs, "Eval run directories")->required();
    std::string csv_out;
    report_cmd->add_option("--csv", csv_out, "Also write the comparison as CSV");

    CLI11_PARSE(app, argc, argv);

    if (seed_opt->count() > 0) flags.base_seed = seed_value;
    if (parallel_opt->count() > 0) flags.instance_parallel = parallel_value;

    try {
        if (validate_cmd->parsed()) {
            return pipeline::cmd_validate(
                {validate_paths.begin(), validate_paths.end()}, std::cout);
        }

        RunConfig cfg = resolve_config(flags);
        if (search_cmd->parsed()) {
            if (!train_override.empty()) cfg.train_corpus = train_override;
            return pipeline::cmd_search(cfg, std::cout);
        }
        if (export_cmd->parsed()) {
            if (upsample_factor > 0) cfg.upsample_factor = upsample_factor;
            SftFlavor flavor;
            if (flavor_name == "external") {
                flavor = SftFlavor::ExternalPlanner;
            } else if (flavor_name == "internalized") {
                flavor = SftFlavor::Internalized;
            } else {
                std::cerr << "unknown flavor '" << flavor_name
                          << "' (external|internalized)\n";
                return pipeline::kExitConfig;
            }
            return pipeline::cmd_export(cfg, flavor, std::cout);
        }
        if (eval_cmd->parsed()) {
            if (!eval_override.empty()) cfg.eval_corpus = eval_override;
            return pipeline::cmd_eval(cfg, mode, std::cout, run_name);
        }
        if (report_cmd->parsed()) {
            return pipeline::cmd_report({run_dirs.begin(), run_dirs.end()},
                                        std::cout,
                                        csv_out.empty() ? fs::path{} : fs::path(csv_out));
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return pipeline::kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return pipeline::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::kExitPartial;
    }
    return pipeline::kExitConfig;
}
