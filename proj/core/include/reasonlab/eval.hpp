#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reasonlab/actions.hpp"
#include "reasonlab/dataset.hpp"
#include "reasonlab/executor.hpp"
#include "reasonlab/exporter.hpp"
#include "reasonlab/search.hpp"

namespace reasonlab {

// What decides the trajectory for each instance: a fixed one, an external
// planner endpoint, or the replayed search optimum.
struct EvalModeSpec {
    enum class Kind { Static, PlannerDriven, OracleReplay };
    Kind kind = Kind::Static;
    std::string name;  // report label, e.g. "static:cot", "planner", "oracle"

    Trajectory static_trajectory;                       // Static
    std::optional<SolverProfile> planner;               // PlannerDriven
    std::map<std::string, SearchOutcome> oracle_outcomes;  // OracleReplay, by id

    static EvalModeSpec static_mode(Trajectory t, std::string label);
    static EvalModeSpec planner_mode(SolverProfile planner);
    static EvalModeSpec oracle_mode(std::map<std::string, SearchOutcome> outcomes);
};

struct EvalInstanceRow {
    std::string instance_id;
    std::string task_tag;
    std::optional<int> difficulty_level;
    Trajectory trajectory;  // the one actually executed
    bool correct = false;
    int output_tokens = 0;  // planner + solver output
    bool aborted = false;
    bool planner_parse_failed = false;
    int verification_rounds = 0;
};

struct EvalRun {
    std::string mode_name;
    std::string config_digest;
    std::vector<EvalInstanceRow> per_instance;
    int planner_parse_failures = 0;

    double accuracy() const;
    double mean_output_tokens() const;
    nlohmann::json summary_json() const;
};

struct EvalOptions {
    std::uint64_t base_seed = 0;
    std::size_t instance_parallel = 1;
    std::string config_digest;
    // Few-shot ICL: per-trajectory prompt block, selected by trajectory id
    // once the trajectory for an instance is known.
    std::map<std::string, std::string> few_shot_blocks;
    JudgeFn judge;
};

class EvalHarness {
public:
    EvalHarness(std::shared_ptr<TrajectoryExecutor> executor,
                std::shared_ptr<SolverGateway> gateway, Catalog catalog,
                std::shared_ptr<const TemplateStore> templates);

    // Evaluates every instance of the split once: pick trajectory, execute,
    // grade, count tokens. Planner outputs that fail to parse fall back to
    // plain chain-of-thought and are counted. Gateway failures mark the
    // instance incorrect-with-abort; the run completes.
    EvalRun evaluate(const EvalModeSpec& mode,
                     const std::vector<QueryInstance>& split,
                     const ExecutionPolicy& policy, const EvalOptions& options);

private:
    std::shared_ptr<TrajectoryExecutor> executor_;
    std::shared_ptr<SolverGateway> gateway_;
    Catalog catalog_;
    std::shared_ptr<const TemplateStore> templates_;
};

// --- reports ----------------------------------------------------------------

// Per group, per layer: fraction of instances that used each action.
// Fractions within one layer sum to 1. group_by is "task_tag" or "category".
struct DistributionTable {
    std::string group_by;
    // group -> layer name -> action id -> fraction
    std::map<std::string, std::map<std::string, std::map<std::string, double>>> fractions;
    std::map<std::string, int> group_counts;

    std::string to_csv() const;
    nlohmann::json to_json() const;
};
DistributionTable action_distribution(const EvalRun& run, const std::string& group_by);

struct TokenReportRow {
    std::string mode;
    double mean_output_tokens = 0.0;
    double accuracy = 0.0;
    int instances = 0;
};
struct TokenReport {
    std::vector<TokenReportRow> rows;  // sorted by mode name

    std::string to_csv() const;
    std::string to_text() const;
    nlohmann::json to_json() const;
};
TokenReport token_report(const std::vector<EvalRun>& runs);

struct DifficultyReport {
    struct Row {
        int level = 0;
        double mean_length = 0.0;
        int instances = 0;
    };
    std::vector<Row> rows;  // ascending level
    bool no_levels = false; // nothing annotated; table is empty

    std::string to_csv() const;
    nlohmann::json to_json() const;
};

// Mean static trajectory length (empty=0 / other=1) per difficulty level.
// Verification retry attempts are reported separately, never folded in.
DifficultyReport difficulty_length_report(
    const std::vector<std::pair<int, Trajectory>>& leveled);
DifficultyReport difficulty_length_report(const EvalRun& run);

// Writes rows.jsonl, summary.json, and the report CSVs under run_dir.
void write_eval_run(const EvalRun& run, const std::filesystem::path& run_dir);

}  // namespace reasonlab
