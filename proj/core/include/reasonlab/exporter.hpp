#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reasonlab/actions.hpp"
#include "reasonlab/dataset.hpp"
#include "reasonlab/gateway.hpp"
#include "reasonlab/search.hpp"

namespace reasonlab {

// Canonical textual trajectory encoding, the planner wire format:
//   "ANALYSIS: <id> | SOLUTION: <id> | VERIFY: <id>"
std::string render_trajectory_text(const Trajectory& t);

// Scans `text` for the last well-formed trajectory line and validates its
// ids against the catalog (explanations precede the trajectory, so the last
// block wins). Unknown ids or no block at all parse to nullopt.
std::optional<Trajectory> parse_trajectory_text(const std::string& text,
                                                const Catalog& catalog);

enum class SftFlavor { ExternalPlanner, Internalized };
std::string sft_flavor_name(SftFlavor flavor);

// One training pair. External targets carry explanation + trajectory only;
// internalized targets additionally carry the reasoning process and the
// answer.
struct SftRecord {
    SftFlavor flavor = SftFlavor::ExternalPlanner;
    std::string input_text;
    std::string target_text;
    std::string source_instance_id;
    Trajectory trajectory;
    std::string explanation;
    int upsample_weight = 1;
    bool explanation_placeholder = false;

    nlohmann::json to_json() const;
};

struct ExportReport {
    int built = 0;
    int dropped_no_success = 0;
    int skipped_filtered = 0;
    int explanation_placeholders = 0;
    std::vector<std::string> dropped_ids;
    // task_tag -> trajectory id -> count
    std::map<std::string, std::map<std::string, int>> trajectory_histogram;

    nlohmann::json to_json() const;
};

class TrainingExporter {
public:
    TrainingExporter(std::shared_ptr<SolverGateway> gateway,
                     std::shared_ptr<const TemplateStore> templates,
                     Catalog catalog);

    // Renders the explanation template and asks the generator why the found
    // trajectory is the right one. Cached like any generation. On generator
    // failure: strict mode throws, otherwise returns empty text and sets
    // *placeholder.
    std::string generate_explanation(const QueryInstance& q,
                                     const Trajectory& optimal,
                                     const std::vector<CandidateStats>& final_ranking,
                                     const SolverProfile* generator, bool strict,
                                     bool* placeholder);

    // One record per kept instance. Internalized records pull the reasoning
    // process from the outcome's canonical successful transcript; instances
    // whose optimal trajectory never succeeded are dropped and reported.
    std::vector<SftRecord> build_records(
        const std::vector<std::pair<QueryInstance, SearchOutcome>>& outcomes,
        SftFlavor flavor, const SolverProfile* generator, bool strict,
        ExportReport* report);

private:
    std::shared_ptr<SolverGateway> gateway_;
    std::shared_ptr<const TemplateStore> templates_;
    Catalog catalog_;
};

// Sets upsample_weight = factor on records whose source instance is few-shot,
// 1 elsewhere.
std::vector<SftRecord> upsample(std::vector<SftRecord> records,
                                const std::set<std::string>& few_shot_ids,
                                int factor);

// JSON-lines {input, target, meta}; a record with weight w is emitted as w
// lines, so the file's line count is the weight sum.
void write_sft_file(const std::filesystem::path& path,
                    const std::vector<SftRecord>& records);

std::vector<nlohmann::json> read_sft_file(const std::filesystem::path& path);

}  // namespace reasonlab
