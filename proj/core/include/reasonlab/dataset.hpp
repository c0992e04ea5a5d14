#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reasonlab/grader.hpp"

namespace reasonlab {

enum class Split { Train, FewShot, Eval };

std::string split_name(Split split);
Split split_from_name(const std::string& name);

// One question in the uniform instance format. `payload` carries task
// extras, e.g. the four Game-of-24 numbers under "numbers".
struct QueryInstance {
    std::string id;
    std::string question;
    std::string gold_answer;
    std::string task_tag;  // "math", "bbh:<subtask>", "game24", ...
    GradeSpec grade;
    std::optional<int> difficulty_level;  // 1-5 when annotated
    Split split = Split::Train;
    nlohmann::json payload = nlohmann::json::object();

    // Tag prefix before ':'; the whole tag when there is none.
    std::string category() const;

    nlohmann::json to_json() const;
    static QueryInstance from_json(const nlohmann::json& j, int line = -1);
};

// Reads a JSON-lines corpus, one instance per line. Malformed lines and
// duplicate ids raise ValidationError naming the line; a missing file raises
// ConfigError.
std::vector<QueryInstance> load_corpus(const std::filesystem::path& path);

void write_corpus(const std::filesystem::path& path,
                  const std::vector<QueryInstance>& corpus);

// How to partition a corpus. Explicit uses each instance's declared split;
// SampleFewShot deterministically draws `per_tag` instances per task_tag
// into FewShot and leaves the rest on their declared splits.
struct SplitSpec {
    enum class Mode { Explicit, SampleFewShot };
    Mode mode = Mode::Explicit;
    int per_tag = 4;
    std::uint64_t seed = 0;

    static SplitSpec explicit_splits() { return {}; }
    static SplitSpec sample_fewshot(int per_tag, std::uint64_t seed) {
        return {Mode::SampleFewShot, per_tag, seed};
    }
};

// Disjoint cover of the corpus by split.
std::map<Split, std::vector<QueryInstance>> partition(
    const std::vector<QueryInstance>& corpus, const SplitSpec& spec);

}  // namespace reasonlab
