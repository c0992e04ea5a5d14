#include "reasonlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

EvalModeSpec EvalModeSpec::static_mode(Trajectory t, std::string label) {
    EvalModeSpec spec;
    spec.kind = Kind::Static;
    spec.static_trajectory = std::move(t);
    spec.name = std::move(label);
    return spec;
}

EvalModeSpec EvalModeSpec::planner_mode(SolverProfile planner) {
    EvalModeSpec spec;
    spec.kind = Kind::PlannerDriven;
    spec.planner = std::move(planner);
    spec.name = "planner";
    return spec;
}

EvalModeSpec EvalModeSpec::oracle_mode(
    std::map<std::string, SearchOutcome> outcomes) {
    EvalModeSpec spec;
    spec.kind = Kind::OracleReplay;
    spec.oracle_outcomes = std::move(outcomes);
    spec.name = "oracle";
    return spec;
}

double EvalRun::accuracy() const {
    if (per_instance.empty()) return 0.0;
    const auto correct = std::count_if(per_instance.begin(), per_instance.end(),
                                       [](const auto& r) { return r.correct; });
    return static_cast<double>(correct) / per_instance.size();
}

double EvalRun::mean_output_tokens() const {
    if (per_instance.empty()) return 0.0;
    double total = 0;
    for (const auto& r : per_instance) total += r.output_tokens;
    return total / per_instance.size();
}

json EvalRun::summary_json() const {
    return json{{"mode", mode_name},
                {"config_digest", config_digest},
                {"instances", per_instance.size()},
                {"accuracy", accuracy()},
                {"mean_output_tokens", mean_output_tokens()},
                {"planner_parse_failures", planner_parse_failures}};
}

EvalHarness::EvalHarness(std::shared_ptr<TrajectoryExecutor> executor,
                         std::shared_ptr<SolverGateway> gateway, Catalog catalog,
                         std::shared_ptr<const TemplateStore> templates)
    : executor_(std::move(executor)),
      gateway_(std::move(gateway)),
      catalog_(std::move(catalog)),
      templates_(std::move(templates)) {}

EvalRun EvalHarness::evaluate(const EvalModeSpec& mode,
                              const std::vector<QueryInstance>& split,
                              const ExecutionPolicy& policy,
                              const EvalOptions& options) {
    if (split.empty()) throw ConfigError("evaluate: empty split");
    if (mode.kind == EvalModeSpec::Kind::PlannerDriven && !mode.planner) {
        throw ConfigError("planner-driven evaluation needs a planner profile");
    }

    EvalRun run;
    run.mode_name = mode.name;
    run.config_digest = options.config_digest;
    run.per_instance.resize(split.size());

    // Parse failures fall back to the plain chain-of-thought baseline.
    const Trajectory fallback =
        catalog_.make_trajectory("empty_a", "cot", "empty_v");

    util::parallel_for(
        split.size(), options.instance_parallel, [&](std::size_t i) {
            const QueryInstance& q = split[i];
            EvalInstanceRow row;
            row.instance_id = q.id;
            row.task_tag = q.task_tag;
            row.difficulty_level = q.difficulty_level;

            Trajectory trajectory = fallback;
            int planner_tokens = 0;
            switch (mode.kind) {
                case EvalModeSpec::Kind::Static:
                    trajectory = mode.static_trajectory;
                    break;
                case EvalModeSpec::Kind::PlannerDriven: {
                    const std::string prompt =
                        templates_->contains("planner_input")
                            ? templates_->get("planner_input")
                                  .render({{"question", q.question}})
                            : "Question: " + q.question + "\n";
                    try {
                        const GenerationRecord rec = gateway_->generate(
                            *mode.planner, prompt,
                            util::derive_seed(options.base_seed, {q.id, "planner"}));
                        planner_tokens = rec.output_tokens;
                        const auto parsed =
                            parse_trajectory_text(rec.output_text, catalog_);
                        if (parsed) {
                            trajectory = *parsed;
                        } else {
                            row.planner_parse_failed = true;
                        }
                    } catch (const GatewayError&) {
                        row.planner_parse_failed = true;
                    }
                    break;
                }
                case EvalModeSpec::Kind::OracleReplay: {
                    const auto it = mode.oracle_outcomes.find(q.id);
                    if (it == mode.oracle_outcomes.end()) {
                        throw ConfigError("oracle replay: no searched outcome for '" +
                                          q.id + "'");
                    }
                    trajectory = it->second.optimal;
                    break;
                }
            }

            ExecutionPolicy instance_policy = policy;
            const auto block = options.few_shot_blocks.find(trajectory.id());
            if (block != options.few_shot_blocks.end()) {
                instance_policy.few_shot_block = block->second;
            }

            // Seeds match the search's iteration-1/trial-0 derivation, so a
            // replay of a searched trajectory reuses its cached generations.
            const std::uint64_t seed = util::derive_seed(
                options.base_seed, {q.id, trajectory.id()}, {1, 0});
            const ExecutionTranscript transcript =
                executor_->execute(q, trajectory, instance_policy, seed);

            json payload = q.payload;
            payload["question"] = q.question;
            row.trajectory = trajectory;
            row.output_tokens = planner_tokens + transcript.total_output_tokens;
            row.verification_rounds = transcript.verification_rounds_used;
            row.aborted = transcript.aborted_reason.has_value() &&
                          *transcript.aborted_reason != AbortReason::ExtractionFailed;
            row.correct = grade(transcript.extracted_answer, q.gold_answer, q.grade,
                                payload, options.judge ? &options.judge : nullptr);
            run.per_instance[i] = std::move(row);
        });

    run.planner_parse_failures = static_cast<int>(std::count_if(
        run.per_instance.begin(), run.per_instance.end(),
        [](const auto& r) { return r.planner_parse_failed; }));
    return run;
}

DistributionTable action_distribution(const EvalRun& run,
                                      const std::string& group_by) {
    if (group_by != "task_tag" && group_by != "category") {
        throw ConfigError("action_distribution: unknown group key '" + group_by +
                          "' (valid: task_tag, category)");
    }
    DistributionTable table;
    table.group_by = group_by;

    std::map<std::string, std::map<std::string, std::map<std::string, int>>> counts;
    for (const EvalInstanceRow& row : run.per_instance) {
        const std::string group =
            group_by == "task_tag"
                ? row.task_tag
                : (row.task_tag.find(':') == std::string::npos
                       ? row.task_tag
                       : row.task_tag.substr(0, row.task_tag.find(':')));
        table.group_counts[group] += 1;
        counts[group]["analysis"][row.trajectory.analysis.id] += 1;
        counts[group]["solution"][row.trajectory.solution.id] += 1;
        counts[group]["verification"][row.trajectory.verification.id] += 1;
    }
    for (const auto& [group, layers] : counts) {
        const int total = table.group_counts[group];
        for (const auto& [layer, actions] : layers) {
            for (const auto& [action, count] : actions) {
                table.fractions[group][layer][action] =
                    static_cast<double>(count) / total;
            }
        }
    }
    return table;
}

std::string DistributionTable::to_csv() const {
    std::ostringstream out;
    out << "group,layer,action,fraction,instances\n";
    for (const auto& [group, layers] : fractions) {
        for (const auto& [layer, actions] : layers) {
            for (const auto& [action, fraction] : actions) {
                out << group << "," << layer << "," << action << ","
                    << std::setprecision(10) << fraction << ","
                    << group_counts.at(group) << "\n";
            }
        }
    }
    return out.str();
}

json DistributionTable::to_json() const {
    json j = {{"group_by", group_by}, {"groups", json::object()}};
    for (const auto& [group, layers] : fractions) {
        json layers_json = json::object();
        for (const auto& [layer, actions] : layers) {
            layers_json[layer] = actions;
        }
        j["groups"][group] = {{"instances", group_counts.at(group)},
                              {"layers", layers_json}};
    }
    return j;
}

TokenReport token_report(const std::vector<EvalRun>& runs) {
    if (runs.empty()) throw ConfigError("token_report: no runs given");
    TokenReport report;
    for (const EvalRun& run : runs) {
        report.rows.push_back({run.mode_name, run.mean_output_tokens(),
                               run.accuracy(),
                               static_cast<int>(run.per_instance.size())});
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const auto& a, const auto& b) { return a.mode < b.mode; });
    return report;
}

std::string TokenReport::to_csv() const {
    std::ostringstream out;
    out << "mode,mean_output_tokens,accuracy,instances\n";
    for (const TokenReportRow& r : rows) {
        out << r.mode << "," << std::setprecision(10) << r.mean_output_tokens
            << "," << r.accuracy << "," << r.instances << "\n";
    }
    return out.str();
}

std::string TokenReport::to_text() const {
    std::ostringstream out;
    out << std::left << std::setw(24) << "mode" << std::right << std::setw(18)
        << "mean out tokens" << std::setw(12) << "accuracy" << std::setw(12)
        << "instances" << "\n";
    for (const TokenReportRow& r : rows) {
        out << std::left << std::setw(24) << r.mode << std::right
            << std::setw(18) << std::fixed << std::setprecision(1)
            << r.mean_output_tokens << std::setw(12) << std::setprecision(3)
            << r.accuracy << std::setw(12) << r.instances << "\n";
    }
    return out.str();
}

json TokenReport::to_json() const {
    json rows_json = json::array();
    for (const TokenReportRow& r : rows) {
        rows_json.push_back({{"mode", r.mode},
                             {"mean_output_tokens", r.mean_output_tokens},
                             {"accuracy", r.accuracy},
                             {"instances", r.instances}});
    }
    return json{{"rows", rows_json}};
}

DifficultyReport difficulty_length_report(
    const std::vector<std::pair<int, Trajectory>>& leveled) {
    std::map<int, std::pair<double, int>> acc;  // level -> (length sum, count)
    for (const auto& [level, trajectory] : leveled) {
        acc[level].first += trajectory_length(trajectory);
        acc[level].second += 1;
    }
    DifficultyReport report;
    report.no_levels = acc.empty();
    for (const auto& [level, sums] : acc) {
        report.rows.push_back({level, sums.first / sums.second, sums.second});
    }
    return report;
}

DifficultyReport difficulty_length_report(const EvalRun& run) {
    std::vector<std::pair<int, Trajectory>> leveled;
    for (const EvalInstanceRow& row : run.per_instance) {
        if (row.difficulty_level) {
            leveled.emplace_back(*row.difficulty_level, row.trajectory);
        }
    }
    return difficulty_length_report(leveled);
}

std::string DifficultyReport::to_csv() const {
    std::ostringstream out;
    out << "level,mean_trajectory_length,instances\n";
    for (const Row& r : rows) {
        out << r.level << "," << std::setprecision(10) << r.mean_length << ","
            << r.instances << "\n";
    }
    return out.str();
}

json DifficultyReport::to_json() const {
    json rows_json = json::array();
    for (const Row& r : rows) {
        rows_json.push_back({{"level", r.level},
                             {"mean_trajectory_length", r.mean_length},
                             {"instances", r.instances}});
    }
    return json{{"rows", rows_json}, {"no_levels", no_levels}};
}

void write_eval_run(const EvalRun& run, const std::filesystem::path& run_dir) {
    std::ostringstream rows;
    for (const EvalInstanceRow& r : run.per_instance) {
        json j = {{"id", r.instance_id},
                  {"task_tag", r.task_tag},
                  {"trajectory", render_trajectory_text(r.trajectory)},
                  {"correct", r.correct},
                  {"output_tokens", r.output_tokens},
                  {"aborted", r.aborted},
                  {"planner_parse_failed", r.planner_parse_failed},
                  {"verification_rounds", r.verification_rounds}};
        if (r.difficulty_level) j["difficulty_level"] = *r.difficulty_level;
        rows << j.dump() << "\n";
    }
    util::atomic_write_file(run_dir / "rows.jsonl", rows.str());
    util::atomic_write_file(run_dir / "summary.json", run.summary_json().dump(2));
    util::atomic_write_file(run_dir / "distribution.csv",
                            action_distribution(run, "task_tag").to_csv());
    util::atomic_write_file(run_dir / "tokens.csv", token_report({run}).to_csv());
    util::atomic_write_file(run_dir / "difficulty.csv",
                            difficulty_length_report(run).to_csv());
}

}  // namespace reasonlab
