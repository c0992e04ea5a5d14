#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "reasonlab/config.hpp"
#include "reasonlab/eval.hpp"
#include "reasonlab/exporter.hpp"
#include "reasonlab/search.hpp"

namespace reasonlab::pipeline {

// Exit codes shared by every subcommand: success / partial failure /
// configuration-or-I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

// The long-lived objects one command needs, assembled once from the config.
struct Components {
    Catalog catalog;
    std::shared_ptr<const TemplateStore> templates;
    std::shared_ptr<SolverGateway> gateway;
    std::shared_ptr<TrajectoryExecutor> executor;
};
Components assemble(const RunConfig& cfg);

// Reads serialized outcomes for every corpus instance that has one, in
// corpus order.
std::vector<std::pair<QueryInstance, SearchOutcome>> load_outcomes(
    const std::filesystem::path& output_dir,
    const std::vector<QueryInstance>& corpus, const Catalog& catalog);

// "static:<solution>", "static:<a>,<s>,<v>", "planner", or "oracle".
EvalModeSpec parse_eval_mode(const std::string& mode, const RunConfig& cfg,
                             const Catalog& catalog);

int cmd_validate(const std::vector<std::filesystem::path>& corpora,
                 std::ostream& out);
int cmd_search(const RunConfig& cfg, std::ostream& out);
int cmd_export(const RunConfig& cfg, SftFlavor flavor, std::ostream& out);
int cmd_eval(const RunConfig& cfg, const std::string& mode, std::ostream& out,
             const std::string& run_name = "");
int cmd_report(const std::vector<std::filesystem::path>& run_dirs,
               std::ostream& out, const std::filesystem::path& csv_out = {});

// The emitted SFT file for a flavor lives at a fixed spot under output_dir.
std::filesystem::path sft_output_path(const RunConfig& cfg, SftFlavor flavor);

}  // namespace reasonlab::pipeline
