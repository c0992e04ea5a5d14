#include "reasonlab/executor.hpp"

#include <algorithm>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

std::string abort_reason_name(AbortReason reason) {
    switch (reason) {
        case AbortReason::Timeout: return "timeout";
        case AbortReason::Transport: return "transport";
        case AbortReason::ExtractionFailed: return "extraction_failed";
    }
    return "?";
}

int ExecutionTranscript::generation_calls() const {
    return static_cast<int>(
        std::count_if(steps.begin(), steps.end(), [](const ExecutionStep& s) {
            return s.kind == ExecutionStep::Kind::Generation;
        }));
}

json ExecutionTranscript::to_json() const {
    json steps_json = json::array();
    for (const ExecutionStep& s : steps) {
        if (s.kind == ExecutionStep::Kind::Generation) {
            steps_json.push_back({{"action_id", s.action_id},
                                  {"kind", "generation"},
                                  {"prompt_text", s.generation.prompt_text},
                                  {"output_text", s.generation.output_text},
                                  {"prompt_tokens", s.generation.prompt_tokens},
                                  {"output_tokens", s.generation.output_tokens}});
        } else {
            steps_json.push_back({{"action_id", s.action_id},
                                  {"kind", "program"},
                                  {"stdout", s.program.stdout_text},
                                  {"stderr", s.program.stderr_text},
                                  {"exit_status", s.program.exit_status},
                                  {"timed_out", s.program.timed_out}});
        }
    }
    json j = {{"trajectory", trajectory.id()},
              {"steps", steps_json},
              {"verification_rounds_used", verification_rounds_used},
              {"reasoning_text", reasoning_text},
              {"total_output_tokens", total_output_tokens},
              {"malformed_verdicts", malformed_verdicts}};
    if (extracted_answer) j["extracted_answer"] = *extracted_answer;
    if (aborted_reason) {
        j["aborted_reason"] = abort_reason_name(*aborted_reason);
        j["abort_detail"] = abort_detail;
    }
    return j;
}

std::optional<std::string> extract_answer(const std::string& output_text,
                                          SolutionKind kind,
                                          const ProgramRunResult* program_result) {
    if (kind == SolutionKind::PoT) {
        if (program_result == nullptr) return std::nullopt;
        const auto lines = util::split_lines(program_result->stdout_text);
        for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
            const std::string t = util::trim(*it);
            if (!t.empty()) return t;
        }
        return std::nullopt;
    }

    static constexpr std::string_view kMarker = "final answer:";
    const std::string lower = util::to_lower(output_text);
    const std::size_t pos = lower.rfind(kMarker);
    if (pos != std::string::npos) {
        const std::string tail =
            util::trim(output_text.substr(pos + kMarker.size()));
        if (!tail.empty()) return tail;
    }
    const auto lines = util::split_lines(output_text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const std::string t = util::trim(*it);
        if (!t.empty()) return t;
    }
    return std::nullopt;
}

std::string extract_program_source(const std::string& output_text) {
    // Last complete ``` fenced block, tolerating a language tag on the fence.
    std::size_t search_end = output_text.size();
    for (;;) {
        const std::size_t close = output_text.rfind("```", search_end == 0 ? 0 : search_end - 1);
        if (close == std::string::npos || close == 0) break;
        const std::size_t open = output_text.rfind("```", close - 1);
        if (open == std::string::npos) break;
        std::size_t body_start = output_text.find('\n', open);
        if (body_start == std::string::npos || body_start > close) {
            search_end = open;
            continue;
        }
        ++body_start;
        return output_text.substr(body_start, close - body_start);
    }
    return output_text;
}

std::optional<bool> parse_verdict(const std::string& verifier_output) {
    std::optional<bool> verdict;
    for (const std::string& line : util::split_lines(verifier_output)) {
        const std::string lower = util::to_lower(util::trim(line));
        const std::size_t pos = lower.find("verdict:");
        if (pos == std::string::npos) continue;
        const std::string value = util::trim(lower.substr(pos + 8));
        if (value.rfind("incorrect", 0) == 0) {
            verdict = false;
        } else if (value.rfind("correct", 0) == 0) {
            verdict = true;
        }
    }
    return verdict;
}

TrajectoryExecutor::TrajectoryExecutor(
    std::shared_ptr<SolverGateway> gateway,
    std::shared_ptr<const TemplateStore> templates)
    : gateway_(std::move(gateway)), templates_(std::move(templates)) {}

ExecutionTranscript TrajectoryExecutor::execute(const QueryInstance& q,
                                                const Trajectory& t,
                                                const ExecutionPolicy& policy,
                                                std::uint64_t trial_seed) {
    // Configuration checks up front; these throw rather than abort.
    for (const Action* a : {&t.analysis, &t.solution, &t.verification}) {
        if (!a->is_empty && !templates_->contains(a->prompt_template_ref)) {
            throw TemplateError("action '" + a->id + "' references missing template '" +
                                a->prompt_template_ref + "'");
        }
    }
    const bool has_verification = !t.verification.is_empty;
    if (has_verification && policy.max_verification_rounds < 1) {
        throw ConfigError("max_verification_rounds must be >= 1 with verification");
    }
    const std::string retry_ref = t.solution.prompt_template_ref + "_retry";
    if (has_verification && !templates_->contains(retry_ref)) {
        throw TemplateError("solution action '" + t.solution.id +
                            "' needs retry template '" + retry_ref +
                            "' when verification is enabled");
    }

    ExecutionTranscript transcript;
    transcript.trajectory = t;

    // Each call inside the execution gets its own derived seed, so repeated
    // identical prompts within one trial stay independent samples.
    int step_ordinal = 0;
    auto call = [&](const std::string& action_id,
                    const std::string& prompt) -> GenerationRecord {
        const std::uint64_t seed =
            util::derive_seed(trial_seed, {"step"},
                              {static_cast<std::uint64_t>(step_ordinal++)});
        GenerationRecord rec = gateway_->generate(policy.solver, prompt, seed);
        ExecutionStep step;
        step.action_id = action_id;
        step.kind = ExecutionStep::Kind::Generation;
        step.generation = rec;
        transcript.steps.push_back(std::move(step));
        transcript.total_output_tokens += rec.output_tokens;
        return rec;
    };

    try {
        // Analysis layer.
        std::string question_block = q.question;
        std::string analysis_block;
        if (!t.analysis.is_empty) {
            const std::string prompt =
                templates_->get(t.analysis.prompt_template_ref)
                    .render({{"question", q.question}});
            const GenerationRecord rec = call(t.analysis.id, prompt);
            if (t.analysis.threading == AnalysisThreading::Replace) {
                question_block = util::trim(rec.output_text);
                if (question_block.empty()) question_block = q.question;
            } else {
                analysis_block = util::trim(rec.output_text);
            }
        }
        std::string composed_question = question_block;
        if (!analysis_block.empty()) {
            composed_question += "\n\nSub-questions:\n" + analysis_block;
        }

        const SolutionKind solution_kind =
            t.solution.runs_program ? SolutionKind::PoT : SolutionKind::CoT;

        std::string prior_answer;
        std::string verifier_feedback;
        std::optional<std::string> answer;
        bool extraction_failed = false;

        for (int attempt = 1;; ++attempt) {
            // Solution step (fresh or retry).
            std::string prompt;
            if (attempt == 1) {
                prompt = templates_->get(t.solution.prompt_template_ref)
                             .render({{"question", composed_question}});
            } else {
                prompt = templates_->get(retry_ref).render(
                    {{"question", composed_question},
                     {"prior_answer", prior_answer},
                     {"verifier_feedback", verifier_feedback}});
            }
            if (policy.few_shot_block && !policy.few_shot_block->empty()) {
                prompt = *policy.few_shot_block + "\n\n" + prompt;
            }
            const GenerationRecord solution_rec = call(t.solution.id, prompt);
            transcript.reasoning_text = solution_rec.output_text;

            std::string failure_feedback;
            if (solution_kind == SolutionKind::PoT) {
                const std::string source =
                    extract_program_source(solution_rec.output_text);
                ProgramRunResult run =
                    run_program(source, "", policy.program_options);
                ExecutionStep step;
                step.action_id = t.solution.id;
                step.kind = ExecutionStep::Kind::Program;
                step.program = run;
                transcript.steps.push_back(step);

                if (run.exit_status != 0 || run.timed_out) {
                    answer = std::nullopt;
                    failure_feedback = run.timed_out
                                           ? "program timed out"
                                           : "program failed:\n" + run.stderr_text;
                } else {
                    answer = extract_answer(solution_rec.output_text,
                                            SolutionKind::PoT, &run);
                    if (!answer) failure_feedback = "program produced no output";
                }
            } else {
                answer = extract_answer(solution_rec.output_text,
                                        SolutionKind::CoT, nullptr);
                if (!answer) failure_feedback = "no final answer found in the response";
            }

            if (!has_verification) {
                extraction_failed = !answer.has_value();
                break;
            }

            // Verification round. A failed attempt (crash, nothing to
            // extract) counts as an INCORRECT verdict with the failure as
            // feedback; the verifier model is only consulted for real
            // candidate answers.
            ++transcript.verification_rounds_used;
            bool verdict_correct;
            if (!answer) {
                verdict_correct = false;
                verifier_feedback = failure_feedback;
            } else {
                const std::string verify_prompt =
                    templates_->get(t.verification.prompt_template_ref)
                        .render({{"question", composed_question},
                                 {"candidate_answer", *answer},
                                 {"reasoning", transcript.reasoning_text}});
                const GenerationRecord verify_rec = call(t.verification.id, verify_prompt);
                const auto verdict = parse_verdict(verify_rec.output_text);
                if (!verdict.has_value()) {
                    ++transcript.malformed_verdicts;  // fail open
                    verdict_correct = true;
                } else {
                    verdict_correct = *verdict;
                }
                verifier_feedback = verify_rec.output_text;
            }

            if (verdict_correct) break;
            if (transcript.verification_rounds_used >= policy.max_verification_rounds) {
                extraction_failed = !answer.has_value();
                break;  // budget exhausted; keep the last attempt's answer
            }
            prior_answer = answer.value_or("(no answer)");
        }

        transcript.extracted_answer = answer;
        if (extraction_failed && !transcript.aborted_reason) {
            transcript.aborted_reason = AbortReason::ExtractionFailed;
            transcript.abort_detail = "no answer could be extracted";
        }
    } catch (const GatewayError& e) {
        if (e.kind() == GatewayError::Kind::ScriptedMiss) throw;  // test bug
        transcript.extracted_answer = std::nullopt;
        transcript.aborted_reason = e.kind() == GatewayError::Kind::Timeout
                                        ? AbortReason::Timeout
                                        : AbortReason::Transport;
        transcript.abort_detail = e.what();
    }

    return transcript;
}

}  // namespace reasonlab
