#include "reasonlab/search.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <mutex>
#include <set>
#include <sstream>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

void SearchConfig::validate(std::size_t initial_candidates) const {
    if (iterations < 1) throw ConfigError("search: iterations must be >= 1");
    if (trials_per_candidate < 1) {
        throw ConfigError("search: trials_per_candidate must be >= 1");
    }
    if (retain.size() != static_cast<std::size_t>(iterations)) {
        throw ConfigError("search: retain list must have one entry per iteration");
    }
    for (std::size_t i = 0; i < retain.size(); ++i) {
        if (retain[i] < 1) throw ConfigError("search: retain counts must be >= 1");
        if (i > 0 && retain[i] > retain[i - 1]) {
            throw ConfigError("search: retain must be non-increasing");
        }
    }
    if (static_cast<std::size_t>(retain[0]) > initial_candidates) {
        throw ConfigError("search: retain[0] exceeds the candidate count");
    }
    if (temperature < 0) throw ConfigError("search: temperature must be >= 0");
}

json SearchConfig::to_json() const {
    return json{{"iterations", iterations},
                {"trials_per_candidate", trials_per_candidate},
                {"retain", retain},
                {"temperature", temperature},
                {"base_seed", base_seed}};
}

SearchConfig SearchConfig::from_json(const json& j) {
    SearchConfig cfg;
    cfg.iterations = j.value("iterations", 2);
    cfg.trials_per_candidate = j.value("trials_per_candidate", 4);
    if (j.contains("retain")) cfg.retain = j["retain"].get<std::vector<int>>();
    cfg.temperature = j.value("temperature", 0.4);
    cfg.base_seed = j.value("base_seed", std::uint64_t{0});
    return cfg;
}

bool candidate_rank_less(const CandidateStats& a, const CandidateStats& b) {
    // successes/trials compared exactly: a/b > c/d  <=>  a*d > c*b.
    const std::int64_t lhs = std::int64_t{a.successes} * std::max(b.trials, 1);
    const std::int64_t rhs = std::int64_t{b.successes} * std::max(a.trials, 1);
    if (lhs != rhs) return lhs > rhs;
    const int la = trajectory_length(a.trajectory);
    const int lb = trajectory_length(b.trajectory);
    if (la != lb) return la < lb;
    return trajectory_canonical_less(a.trajectory, b.trajectory);
}

std::string filter_decision_name(FilterDecision decision) {
    switch (decision) {
        case FilterDecision::Kept: return "kept";
        case FilterDecision::DroppedAllFail: return "dropped_all_fail";
        case FilterDecision::DroppedAllSucceed: return "dropped_all_succeed";
    }
    return "?";
}

FilterDecision filter_instance(const std::vector<CandidateStats>& iteration1_stats) {
    bool all_fail = true;
    bool all_succeed = true;
    for (const CandidateStats& c : iteration1_stats) {
        if (c.successes != 0) all_fail = false;
        if (c.trials == 0 || c.successes != c.trials) all_succeed = false;
    }
    if (all_fail) return FilterDecision::DroppedAllFail;
    if (all_succeed) return FilterDecision::DroppedAllSucceed;
    return FilterDecision::Kept;
}

namespace {

json stats_to_json(const CandidateStats& c) {
    return json{{"trajectory", {{"analysis", c.trajectory.analysis.id},
                                {"solution", c.trajectory.solution.id},
                                {"verification", c.trajectory.verification.id}}},
                {"trials", c.trials},
                {"successes", c.successes},
                {"length", trajectory_length(c.trajectory)}};
}

Trajectory trajectory_from_json(const json& j, const Catalog& catalog) {
    return catalog.make_trajectory(j.at("analysis").get<std::string>(),
                                   j.at("solution").get<std::string>(),
                                   j.at("verification").get<std::string>());
}

}  // namespace

json SearchOutcome::to_json() const {
    json iterations = json::array();
    for (const auto& round : ranking) {
        json rows = json::array();
        for (const CandidateStats& c : round) rows.push_back(stats_to_json(c));
        iterations.push_back(std::move(rows));
    }
    json j = {{"optimal", {{"analysis", optimal.analysis.id},
                           {"solution", optimal.solution.id},
                           {"verification", optimal.verification.id}}},
              {"filtered", filter_decision_name(filtered)},
              {"executions_used", executions_used},
              {"iterations", iterations}};
    j["canonical_transcript"] =
        canonical_transcript ? canonical_transcript->to_json() : json(nullptr);
    return j;
}

SearchOutcome SearchOutcome::from_json(const json& j, const Catalog& catalog) {
    SearchOutcome outcome;
    outcome.optimal = trajectory_from_json(j.at("optimal"), catalog);
    const std::string filtered = j.value("filtered", "kept");
    if (filtered == "dropped_all_fail") {
        outcome.filtered = FilterDecision::DroppedAllFail;
    } else if (filtered == "dropped_all_succeed") {
        outcome.filtered = FilterDecision::DroppedAllSucceed;
    } else {
        outcome.filtered = FilterDecision::Kept;
    }
    outcome.executions_used = j.value("executions_used", 0);
    for (const json& round : j.value("iterations", json::array())) {
        std::vector<CandidateStats> stats;
        for (const json& row : round) {
            CandidateStats c;
            c.trajectory = trajectory_from_json(row.at("trajectory"), catalog);
            c.trials = row.value("trials", 0);
            c.successes = row.value("successes", 0);
            stats.push_back(std::move(c));
        }
        outcome.ranking.push_back(std::move(stats));
    }
    if (j.contains("canonical_transcript") && !j["canonical_transcript"].is_null()) {
        // Only the fields export needs are rebuilt; step records stay on disk.
        auto transcript = std::make_shared<ExecutionTranscript>();
        const json& t = j["canonical_transcript"];
        transcript->trajectory = outcome.optimal;
        transcript->reasoning_text = t.value("reasoning_text", std::string{});
        transcript->total_output_tokens = t.value("total_output_tokens", 0);
        transcript->verification_rounds_used = t.value("verification_rounds_used", 0);
        if (t.contains("extracted_answer")) {
            transcript->extracted_answer = t["extracted_answer"].get<std::string>();
        }
        outcome.canonical_transcript = std::move(transcript);
    }
    return outcome;
}

TrajectorySearch::TrajectorySearch(std::shared_ptr<TrajectoryExecutor> executor,
                                   JudgeFn judge)
    : executor_(std::move(executor)), judge_(std::move(judge)) {}

SearchOutcome TrajectorySearch::search(const QueryInstance& q,
                                       const std::vector<Trajectory>& initial_candidates,
                                       const SearchConfig& cfg,
                                       const ExecutionPolicy& policy) {
    if (initial_candidates.empty()) {
        throw ConfigError("search: empty initial candidate set");
    }
    cfg.validate(initial_candidates.size());

    ExecutionPolicy search_policy = policy;
    search_policy.solver.temperature = cfg.temperature;

    std::vector<CandidateStats> candidates;
    candidates.reserve(initial_candidates.size());
    for (const Trajectory& t : initial_candidates) {
        candidates.push_back({t, 0, 0, {}, {}});
    }

    SearchOutcome outcome;
    json payload = q.payload;
    payload["question"] = q.question;

    for (int iteration = 1; iteration <= cfg.iterations; ++iteration) {
        const std::size_t n_candidates = candidates.size();
        const std::size_t n_trials =
            n_candidates * static_cast<std::size_t>(cfg.trials_per_candidate);

        struct TrialResult {
            std::shared_ptr<const ExecutionTranscript> transcript;
            bool success = false;
        };
        std::vector<TrialResult> results(n_trials);

        // All trials of one iteration run concurrently; the ranking barrier
        // below needs every one of them graded.
        util::parallel_for(
            n_trials, static_cast<std::size_t>(search_policy.solver.max_parallel),
            [&](std::size_t flat) {
                const std::size_t c = flat / cfg.trials_per_candidate;
                const int trial = static_cast<int>(flat % cfg.trials_per_candidate);
                const Trajectory& t = candidates[c].trajectory;
                const std::uint64_t seed = util::derive_seed(
                    cfg.base_seed, {q.id, t.id()},
                    {static_cast<std::uint64_t>(iteration),
                     static_cast<std::uint64_t>(trial)});
                auto transcript = std::make_shared<ExecutionTranscript>(
                    executor_->execute(q, t, search_policy, seed));
                const bool success =
                    grade(transcript->extracted_answer, q.gold_answer, q.grade,
                          payload, judge_ ? &judge_ : nullptr);
                results[flat] = {std::move(transcript), success};
            });

        bool any_alive = false;
        for (std::size_t flat = 0; flat < n_trials; ++flat) {
            CandidateStats& c = candidates[flat / cfg.trials_per_candidate];
            const TrialResult& r = results[flat];
            c.trials += 1;
            c.successes += r.success ? 1 : 0;
            c.transcripts.push_back(r.transcript);
            c.transcript_success.push_back(r.success);
            ++outcome.executions_used;
            const auto& reason = r.transcript->aborted_reason;
            if (!reason || *reason == AbortReason::ExtractionFailed) any_alive = true;
        }
        if (iteration == 1 && !any_alive) {
            throw SearchError("instance '" + q.id +
                              "': every trial aborted on transport errors");
        }

        std::sort(candidates.begin(), candidates.end(), candidate_rank_less);
        outcome.ranking.push_back(candidates);

        if (iteration == 1) {
            outcome.filtered = filter_instance(candidates);
        }

        const std::size_t keep = std::min<std::size_t>(
            static_cast<std::size_t>(cfg.retain[iteration - 1]), candidates.size());
        candidates.resize(keep);
    }

    const CandidateStats& best = outcome.ranking.back().front();
    outcome.optimal = best.trajectory;
    for (std::size_t i = 0; i < best.transcripts.size(); ++i) {
        if (best.transcript_success[i]) {
            outcome.canonical_transcript = best.transcripts[i];
            break;
        }
    }
    return outcome;
}

std::filesystem::path outcome_path(const std::filesystem::path& output_dir,
                                   const std::string& instance_id) {
    std::string safe;
    for (char c : instance_id) {
        safe.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    }
    const std::string digest = util::sha256_hex(instance_id).substr(0, 8);
    return output_dir / "outcomes" / (safe + "-" + digest + ".json");
}

CorpusRunSummary run_search_corpus(const std::vector<QueryInstance>& dataset,
                                   const std::vector<Trajectory>& initial_candidates,
                                   const SearchConfig& cfg,
                                   const ExecutionPolicy& policy,
                                   TrajectorySearch& search,
                                   const CorpusRunOptions& options) {
    namespace fs = std::filesystem;
    if (dataset.empty()) throw ConfigError("run_search_corpus: empty dataset");
    fs::create_directories(options.output_dir / "outcomes");

    // Instances finished by a previous (possibly interrupted) run.
    std::set<std::string> journaled;
    const fs::path journal_path = options.output_dir / "journal.jsonl";
    if (fs::exists(journal_path)) {
        std::ifstream in(journal_path);
        std::string line;
        while (std::getline(in, line)) {
            if (util::trim(line).empty()) continue;
            try {
                const json row = json::parse(line);
                // Error rows have no digest; those instances rerun.
                if (row.contains("digest")) {
                    journaled.insert(row.at("id").get<std::string>());
                }
            } catch (const json::exception&) {
                // Torn tail line from an interrupt; the instance reruns.
            }
        }
    }

    CorpusRunSummary summary;
    std::ofstream journal(journal_path, std::ios::app);
    std::ofstream rankings(options.output_dir / "rankings.jsonl", std::ios::app);

    struct InstanceResult {
        bool skipped = false;
        bool failed = false;
        std::string error;
        json journal_row;
        json ranking_row;
    };

    auto process = [&](const QueryInstance& q) -> InstanceResult {
        InstanceResult r;
        if (journaled.count(q.id)) {
            r.skipped = true;
            return r;
        }
        try {
            const SearchOutcome outcome =
                search.search(q, initial_candidates, cfg, policy);
            const json outcome_json = outcome.to_json();
            util::atomic_write_file(outcome_path(options.output_dir, q.id),
                                    outcome_json.dump(2));
            r.journal_row = {{"id", q.id},
                             {"digest", util::sha256_hex(outcome_json.dump())},
                             {"filtered", filter_decision_name(outcome.filtered)},
                             {"optimal", outcome.optimal.id()},
                             {"executions_used", outcome.executions_used}};
            r.ranking_row = {{"id", q.id}, {"iterations", outcome_json["iterations"]}};
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
        }
        return r;
    };

    auto commit = [&](const QueryInstance& q, const InstanceResult& r) {
        if (r.skipped) {
            ++summary.journal_skipped;
            return;
        }
        if (r.failed) {
            ++summary.failed;
            journal << json{{"id", q.id}, {"error", r.error}}.dump() << "\n";
            journal.flush();
            return;
        }
        ++summary.completed;
        const std::string filtered = r.journal_row["filtered"].get<std::string>();
        if (filtered == "kept") ++summary.kept;
        if (filtered == "dropped_all_fail") ++summary.dropped_all_fail;
        if (filtered == "dropped_all_succeed") ++summary.dropped_all_succeed;
        journal << r.journal_row.dump() << "\n";
        journal.flush();
        rankings << r.ranking_row.dump() << "\n";
    };

    // Failed instances are journaled with an error marker but not counted as
    // done, so a rerun retries them.
    if (options.instance_parallel <= 1) {
        for (const QueryInstance& q : dataset) commit(q, process(q));
    } else {
        // Sliding window keeps up to instance_parallel searches in flight
        // while journal entries still land in dataset order.
        std::vector<std::future<InstanceResult>> window;
        std::size_t committed = 0;
        for (const QueryInstance& q : dataset) {
            window.push_back(std::async(std::launch::async, process, q));
            if (window.size() - committed >= options.instance_parallel) {
                commit(dataset[committed], window[committed].get());
                ++committed;
            }
        }
        for (; committed < window.size(); ++committed) {
            commit(dataset[committed], window[committed].get());
        }
    }
    return summary;
}

json CorpusRunSummary::to_json() const {
    return json{{"completed", completed},
                {"kept", kept},
                {"dropped_all_fail", dropped_all_fail},
                {"dropped_all_succeed", dropped_all_succeed},
                {"failed", failed},
                {"journal_skipped", journal_skipped}};
}

}  // namespace reasonlab
