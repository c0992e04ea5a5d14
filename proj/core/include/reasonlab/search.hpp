#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reasonlab/actions.hpp"
#include "reasonlab/dataset.hpp"
#include "reasonlab/executor.hpp"
#include "reasonlab/grader.hpp"

namespace reasonlab {

// Search schedule: `iterations` rounds (K), `trials_per_candidate` fresh
// trials per surviving candidate per round (N_eval), `retain[k]` survivors
// after round k+1.
struct SearchConfig {
    int iterations = 2;
    int trials_per_candidate = 4;
    std::vector<int> retain{8, 3};
    double temperature = 0.4;
    std::uint64_t base_seed = 0;

    void validate(std::size_t initial_candidates) const;
    nlohmann::json to_json() const;
    static SearchConfig from_json(const nlohmann::json& j);
};

// Accumulated trial record for one candidate. Success counts accumulate over
// every iteration the candidate survives; they are never reset.
struct CandidateStats {
    Trajectory trajectory;
    int trials = 0;
    int successes = 0;
    std::vector<std::shared_ptr<const ExecutionTranscript>> transcripts;
    std::vector<bool> transcript_success;  // parallel to transcripts

    double success_rate() const {
        return trials == 0 ? 0.0 : static_cast<double>(successes) / trials;
    }
};

// True when `a` ranks strictly better than `b`: higher accumulated success
// rate (compared exactly by cross-multiplication), then shorter trajectory,
// then canonical trajectory order. A total order, so ranking never depends
// on sort stability.
bool candidate_rank_less(const CandidateStats& a, const CandidateStats& b);

enum class FilterDecision { Kept, DroppedAllFail, DroppedAllSucceed };
std::string filter_decision_name(FilterDecision decision);

// Degenerate instances carry no planning signal: drop when every candidate
// failed every iteration-1 trial, or every candidate succeeded on all of
// them.
FilterDecision filter_instance(const std::vector<CandidateStats>& iteration1_stats);

struct SearchOutcome {
    Trajectory optimal;
    // Full sorted candidate list after each iteration, best first.
    std::vector<std::vector<CandidateStats>> ranking;
    FilterDecision filtered = FilterDecision::Kept;
    int executions_used = 0;
    // First successful transcript of the optimal trajectory (iteration then
    // trial order); the canonical reasoning record for training export.
    std::shared_ptr<const ExecutionTranscript> canonical_transcript;

    const std::vector<CandidateStats>& final_ranking() const { return ranking.back(); }
    nlohmann::json to_json() const;
    static SearchOutcome from_json(const nlohmann::json& j, const Catalog& catalog);
};

// Raised when an instance's search cannot proceed (e.g. every iteration-1
// trial aborted on transport errors). Corpus runs record it and continue.
class SearchError : public std::runtime_error {
public:
    explicit SearchError(const std::string& what) : std::runtime_error(what) {}
};

class TrajectorySearch {
public:
    TrajectorySearch(std::shared_ptr<TrajectoryExecutor> executor,
                     JudgeFn judge = nullptr);

    // One instance: evaluate all of P0, then prune by the retain schedule,
    // accumulating success over iterations. Trial seeds derive from
    // (base_seed, instance id, trajectory id, iteration, trial index).
    SearchOutcome search(const QueryInstance& q,
                         const std::vector<Trajectory>& initial_candidates,
                         const SearchConfig& cfg, const ExecutionPolicy& policy);

private:
    std::shared_ptr<TrajectoryExecutor> executor_;
    JudgeFn judge_;
};

struct CorpusRunOptions {
    std::filesystem::path output_dir;
    std::size_t instance_parallel = 1;
};

struct CorpusRunSummary {
    int completed = 0;
    int kept = 0;
    int dropped_all_fail = 0;
    int dropped_all_succeed = 0;
    int failed = 0;
    int journal_skipped = 0;

    nlohmann::json to_json() const;
};

// Searches every instance, journaling completions so an interrupted run
// resumes where it left off. Writes, under output_dir:
//   journal.jsonl    append-only instance id + outcome digest, dataset order
//   outcomes/*.json  full per-instance outcome (ranking + transcripts)
//   rankings.jsonl   per-instance ranking table for audit
// Per-instance failures are recorded and the run continues.
CorpusRunSummary run_search_corpus(const std::vector<QueryInstance>& dataset,
                                   const std::vector<Trajectory>& initial_candidates,
                                   const SearchConfig& cfg,
                                   const ExecutionPolicy& policy,
                                   TrajectorySearch& search,
                                   const CorpusRunOptions& options);

// Path of the serialized outcome for an instance id (sanitized + hashed so
// arbitrary ids map to unique filenames).
std::filesystem::path outcome_path(const std::filesystem::path& output_dir,
                                   const std::string& instance_id);

}  // namespace reasonlab
