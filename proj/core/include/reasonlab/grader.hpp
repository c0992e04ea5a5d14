#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace reasonlab {

enum class GradeKind { ExactString, NumericTol, GameOf24, JudgeEndpoint };

std::string grade_kind_name(GradeKind kind);
GradeKind grade_kind_from_name(const std::string& name);

// Per-instance grading recipe. Normalization applies to both sides of an
// exact-string comparison.
struct GradeSpec {
    GradeKind kind = GradeKind::ExactString;
    double numeric_tolerance = 1e-6;  // relative, NumericTol only
    bool case_fold = true;
    bool strip_whitespace = true;
    bool strip_latex_wrappers = false;

    static GradeSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Hook for endpoint-backed grading; absent by default. Receives
// (answer, gold, question) and returns the verdict.
using JudgeFn = std::function<bool(const std::string&, const std::string&,
                                   const std::string&)>;

std::string normalize_answer(const std::string& text, const GradeSpec& spec);

// Decides one trial. Pure except for the explicitly configured judge.
// A missing answer grades false; JudgeEndpoint without a judge throws.
bool grade(const std::optional<std::string>& answer, const std::string& gold,
           const GradeSpec& spec, const nlohmann::json& instance_payload,
           const JudgeFn* judge = nullptr);

// True iff `expression` uses exactly the four given numbers (as a multiset)
// and evaluates to 24 under exact rational arithmetic. Parse failures and
// division by zero grade false.
bool check_24(const std::string& expression, const std::vector<int>& numbers);

// Exact rational expression evaluation, exposed for the Game-of-24 oracle
// tests. Returns nullopt on parse failure or division by zero; appends the
// leaf operands encountered to `leaves` when non-null.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;
};
std::optional<Rational> evaluate_arithmetic(const std::string& expression,
                                            std::vector<std::int64_t>* leaves);

}  // namespace reasonlab
