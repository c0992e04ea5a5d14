#include "reasonlab/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    }
    return out;
}

// Timestamps and invocation details are quarantined here; every other output
// file is byte-reproducible across identically configured runs.
void write_run_metadata(const RunConfig& cfg, const std::string& command) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::ostringstream stamp;
    stamp << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
    const json meta = {{"command", command},
                       {"finished_at", stamp.str()},
                       {"output_dir", cfg.output_dir.string()},
                       {"cache_dir", cfg.cache_dir.string()}};
    util::atomic_write_file(cfg.output_dir / "run_meta.json", meta.dump(2));
}

void write_resolved_config(const RunConfig& cfg) {
    json j = cfg.to_json();
    j["config_digest"] = cfg.digest();
    util::atomic_write_file(cfg.output_dir / "resolved_config.json", j.dump(2));
}

}  // namespace

Components assemble(const RunConfig& cfg) {
    Components c{cfg.load_catalog(), cfg.load_templates(), nullptr, nullptr};
    SolverGateway::Options gateway_options;
    gateway_options.cache_dir = cfg.cache_dir;
    c.gateway = std::make_shared<SolverGateway>(gateway_options);
    c.executor = std::make_shared<TrajectoryExecutor>(c.gateway, c.templates);
    return c;
}

std::vector<std::pair<QueryInstance, SearchOutcome>> load_outcomes(
    const fs::path& output_dir, const std::vector<QueryInstance>& corpus,
    const Catalog& catalog) {
    std::vector<std::pair<QueryInstance, SearchOutcome>> pairs;
    for (const QueryInstance& q : corpus) {
        const fs::path path = outcome_path(output_dir, q.id);
        if (!fs::exists(path)) continue;
        const json j = json::parse(util::read_file(path));
        pairs.emplace_back(q, SearchOutcome::from_json(j, catalog));
    }
    return pairs;
}

EvalModeSpec parse_eval_mode(const std::string& mode, const RunConfig& cfg,
                             const Catalog& catalog) {
    if (mode == "planner") {
        if (!cfg.planner) {
            throw ConfigError("mode 'planner' needs a planner profile");
        }
        return EvalModeSpec::planner_mode(*cfg.planner);
    }
    if (mode == "oracle") {
        if (cfg.eval_corpus.empty()) {
            throw ConfigError("mode 'oracle' needs an eval corpus");
        }
        std::map<std::string, SearchOutcome> outcomes;
        for (auto& [q, outcome] :
             load_outcomes(cfg.output_dir, load_corpus(cfg.eval_corpus), catalog)) {
            outcomes.emplace(q.id, std::move(outcome));
        }
        return EvalModeSpec::oracle_mode(std::move(outcomes));
    }
    if (mode.rfind("static:", 0) == 0) {
        const std::string spec = mode.substr(7);
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = spec.find(',', start);
            parts.push_back(spec.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        Trajectory t;
        if (parts.size() == 1) {
            t = catalog.make_trajectory("empty_a", parts[0], "empty_v");
        } else if (parts.size() == 3) {
            t = catalog.make_trajectory(parts[0], parts[1], parts[2]);
        } else {
            throw ConfigError("static mode wants 'static:<solution>' or "
                              "'static:<analysis>,<solution>,<verification>'");
        }
        return EvalModeSpec::static_mode(std::move(t), mode);
    }
    throw ConfigError("unknown eval mode '" + mode +
                      "' (valid: static:..., planner, oracle)");
}

int cmd_validate(const std::vector<fs::path>& corpora, std::ostream& out) {
    if (corpora.empty()) {
        out << "validate: no corpus files given\n";
        return kExitConfig;
    }
    int exit_code = kExitOk;
    for (const fs::path& path : corpora) {
        try {
            const auto corpus = load_corpus(path);
            out << path.string() << ": " << corpus.size() << " instances OK\n";
        } catch (const ValidationError& e) {
            out << path.string() << ": INVALID\n" << e.what() << "\n";
            exit_code = std::max(exit_code, kExitPartial);
        } catch (const ConfigError& e) {
            out << e.what() << "\n";
            exit_code = kExitConfig;
        }
    }
    return exit_code;
}

int cmd_search(const RunConfig& cfg, std::ostream& out) {
    if (cfg.train_corpus.empty()) {
        throw ConfigError("search: no training corpus configured");
    }
    const auto corpus = load_corpus(cfg.train_corpus);
    Components c = assemble(cfg);
    const auto initial = enumerate_trajectories(c.catalog);
    const ExecutionPolicy policy = cfg.make_policy();

    fs::create_directories(cfg.output_dir);
    write_resolved_config(cfg);

    TrajectorySearch search(c.executor);
    CorpusRunOptions options;
    options.output_dir = cfg.output_dir;
    options.instance_parallel = static_cast<std::size_t>(cfg.instance_parallel);
    const CorpusRunSummary summary =
        run_search_corpus(corpus, initial, cfg.search, policy, search, options);

    json summary_json = summary.to_json();
    summary_json["search"] = cfg.search.to_json();
    summary_json["initial_candidates"] = initial.size();
    util::atomic_write_file(cfg.output_dir / "search_summary.json",
                            summary_json.dump(2));
    write_run_metadata(cfg, "search");

    out << "searched " << corpus.size() << " instance(s): " << summary.completed
        << " completed, " << summary.journal_skipped << " journaled, "
        << summary.failed << " failed\n";
    out << "kept " << summary.kept << ", dropped " << summary.dropped_all_fail
        << " all-fail, " << summary.dropped_all_succeed << " all-succeed\n";
    out << "schedule: K=" << cfg.search.iterations
        << " N_eval=" << cfg.search.trials_per_candidate << " retain=[";
    for (std::size_t i = 0; i < cfg.search.retain.size(); ++i) {
        out << (i ? "," : "") << cfg.search.retain[i];
    }
    out << "] temperature=" << cfg.search.temperature << "\n";
    out << "generation backend calls: " << c.gateway->backend_calls()
        << " (cache hits " << c.gateway->cache_hits() << ")\n";

    return (summary.completed + summary.journal_skipped > 0) ? kExitOk : kExitPartial;
}

fs::path sft_output_path(const RunConfig& cfg, SftFlavor flavor) {
    return cfg.output_dir / ("sft_" + sft_flavor_name(flavor) + ".jsonl");
}

int cmd_export(const RunConfig& cfg, SftFlavor flavor, std::ostream& out) {
    if (cfg.train_corpus.empty()) {
        throw ConfigError("export: no training corpus configured");
    }
    const auto corpus = load_corpus(cfg.train_corpus);
    Components c = assemble(cfg);
    const auto pairs = load_outcomes(cfg.output_dir, corpus, c.catalog);
    if (pairs.empty()) {
        throw ConfigError("export: no search outcomes under " +
                          (cfg.output_dir / "outcomes").string() +
                          " (run `search` first)");
    }

    TrainingExporter exporter(c.gateway, c.templates, c.catalog);
    ExportReport report;
    auto records = exporter.build_records(
        pairs, flavor, cfg.generator ? &*cfg.generator : nullptr, cfg.strict,
        &report);

    std::set<std::string> few_shot_ids;
    for (const QueryInstance& q : corpus) {
        if (q.split == Split::FewShot) few_shot_ids.insert(q.id);
    }
    records = upsample(std::move(records), few_shot_ids, cfg.upsample_factor);

    const fs::path sft_path = sft_output_path(cfg, flavor);
    write_sft_file(sft_path, records);
    util::atomic_write_file(cfg.output_dir /
                                ("export_report_" + sft_flavor_name(flavor) + ".json"),
                            report.to_json().dump(2));
    write_resolved_config(cfg);
    write_run_metadata(cfg, "export");

    int lines = 0;
    for (const SftRecord& r : records) lines += r.upsample_weight;
    out << "exported " << report.built << " record(s), " << lines
        << " line(s) after upsampling (factor " << cfg.upsample_factor << ", "
        << few_shot_ids.size() << " few-shot id(s)) -> " << sft_path.string()
        << "\n";
    if (report.dropped_no_success > 0) {
        out << "dropped " << report.dropped_no_success
            << " instance(s) without a successful optimal transcript\n";
    }
    if (report.explanation_placeholders > 0) {
        out << report.explanation_placeholders
            << " record(s) carry a placeholder explanation\n";
    }
    return report.built > 0 ? kExitOk : kExitPartial;
}

int cmd_eval(const RunConfig& cfg, const std::string& mode, std::ostream& out,
             const std::string& run_name) {
    if (cfg.eval_corpus.empty()) {
        throw ConfigError("eval: no eval corpus configured");
    }
    const auto split = load_corpus(cfg.eval_corpus);
    Components c = assemble(cfg);
    const EvalModeSpec mode_spec = parse_eval_mode(mode, cfg, c.catalog);
    const ExecutionPolicy policy = cfg.make_policy();

    EvalHarness harness(c.executor, c.gateway, c.catalog, c.templates);
    EvalOptions options;
    options.base_seed = cfg.search.base_seed;
    options.instance_parallel = static_cast<std::size_t>(cfg.instance_parallel);
    options.config_digest = cfg.digest();
    for (const auto& [traj, file] : cfg.few_shot_blocks) {
        options.few_shot_blocks[traj] = util::read_file(file);
    }

    const EvalRun run = harness.evaluate(mode_spec, split, policy, options);

    const fs::path run_dir =
        cfg.output_dir / ("eval_" + sanitize(run_name.empty() ? mode : run_name));
    fs::create_directories(run_dir);
    write_eval_run(run, run_dir);
    write_resolved_config(cfg);
    write_run_metadata(cfg, "eval " + mode);

    int aborted = 0;
    for (const auto& r : run.per_instance) aborted += r.aborted ? 1 : 0;
    out << "mode " << run.mode_name << ": accuracy " << std::fixed
        << std::setprecision(3) << run.accuracy() << " over "
        << run.per_instance.size() << " instance(s), mean output tokens "
        << std::setprecision(1) << run.mean_output_tokens() << "\n";
    if (mode_spec.kind == EvalModeSpec::Kind::PlannerDriven) {
        out << "planner parse failures: " << run.planner_parse_failures << "\n";
    }
    out << "artifacts: " << run_dir.string() << "\n";
    return aborted == 0 ? kExitOk : kExitPartial;
}

int cmd_report(const std::vector<fs::path>& run_dirs, std::ostream& out,
               const fs::path& csv_out) {
    if (run_dirs.empty()) {
        out << "report: no run directories given\n";
        return kExitConfig;
    }
    TokenReport report;
    for (const fs::path& dir : run_dirs) {
        const fs::path summary_path = dir / "summary.json";
        if (!fs::exists(summary_path)) {
            throw ConfigError("not an eval run directory (no summary.json): " +
                              dir.string());
        }
        const json summary = json::parse(util::read_file(summary_path));
        report.rows.push_back({summary.value("mode", dir.filename().string()),
                               summary.value("mean_output_tokens", 0.0),
                               summary.value("accuracy", 0.0),
                               summary.value("instances", 0)});
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const auto& a, const auto& b) { return a.mode < b.mode; });
    out << report.to_text();
    if (!csv_out.empty()) {
        util::atomic_write_file(csv_out, report.to_csv());
        out << "wrote " << csv_out.string() << "\n";
    }
    return kExitOk;
}

}  // namespace reasonlab::pipeline
