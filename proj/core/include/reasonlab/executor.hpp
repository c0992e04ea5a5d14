#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reasonlab/actions.hpp"
#include "reasonlab/dataset.hpp"
#include "reasonlab/gateway.hpp"
#include "reasonlab/program_runner.hpp"

namespace reasonlab {

enum class SolutionKind { CoT, PoT };
enum class AbortReason { Timeout, Transport, ExtractionFailed };

std::string abort_reason_name(AbortReason reason);

// One recorded call: either a generation or a program run.
struct ExecutionStep {
    enum class Kind { Generation, Program };
    std::string action_id;
    Kind kind = Kind::Generation;
    GenerationRecord generation;
    ProgramRunResult program;
};

// Full record of one trajectory execution on one question. Immutable once
// execute() returns. Serialization omits volatile fields (latency, cache
// hits) so replayed runs produce identical bytes.
struct ExecutionTranscript {
    Trajectory trajectory;
    std::vector<ExecutionStep> steps;
    int verification_rounds_used = 0;
    std::optional<std::string> extracted_answer;
    std::string reasoning_text;  // final solution attempt's output
    int total_output_tokens = 0;
    std::optional<AbortReason> aborted_reason;
    std::string abort_detail;
    int malformed_verdicts = 0;  // verifier outputs with no verdict line (fail open)

    int generation_calls() const;
    nlohmann::json to_json() const;
};

struct ExecutionPolicy {
    int max_verification_rounds = 2;
    SolverProfile solver;
    std::optional<std::string> few_shot_block;  // prepended to solution prompts
    ProgramRunOptions program_options;
};

// CoT: trailing text after the last "Final answer:" marker (case-insensitive),
// falling back to the last non-empty line. PoT: last non-empty stdout line.
// Absence is the signal, never an error.
std::optional<std::string> extract_answer(const std::string& output_text,
                                          SolutionKind kind,
                                          const ProgramRunResult* program_result);

// Pulls the program source out of a generation: the last fenced code block
// when present, the whole text otherwise.
std::string extract_program_source(const std::string& output_text);

// Parses the last "VERDICT: CORRECT|INCORRECT" line; nullopt when malformed.
std::optional<bool> parse_verdict(const std::string& verifier_output);

// Executes trajectories end-to-end against a shared gateway. Reentrant; any
// number of executions may run concurrently.
class TrajectoryExecutor {
public:
    TrajectoryExecutor(std::shared_ptr<SolverGateway> gateway,
                       std::shared_ptr<const TemplateStore> templates);

    // Runs analysis, solution, and the verification/retry loop, recording
    // every call. Gateway failures abort the transcript instead of throwing;
    // configuration problems (missing templates) do throw.
    ExecutionTranscript execute(const QueryInstance& q, const Trajectory& t,
                                const ExecutionPolicy& policy,
                                std::uint64_t trial_seed);

private:
    std::shared_ptr<SolverGateway> gateway_;
    std::shared_ptr<const TemplateStore> templates_;
};

}  // namespace reasonlab
