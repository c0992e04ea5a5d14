#include "reasonlab/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

std::string split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::FewShot: return "fewshot";
        case Split::Eval: return "eval";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "fewshot") return Split::FewShot;
    if (name == "eval") return Split::Eval;
    throw ValidationError("unknown split label: " + name);
}

std::string QueryInstance::category() const {
    const std::size_t colon = task_tag.find(':');
    return colon == std::string::npos ? task_tag : task_tag.substr(0, colon);
}

json QueryInstance::to_json() const {
    json j = {{"id", id},
              {"question", question},
              {"gold_answer", gold_answer},
              {"task_tag", task_tag},
              {"grade", grade.to_json()},
              {"split", split_name(split)}};
    if (difficulty_level) j["difficulty_level"] = *difficulty_level;
    if (!payload.empty()) j["payload"] = payload;
    return j;
}

QueryInstance QueryInstance::from_json(const json& j, int line) {
    for (const char* field : {"id", "question", "gold_answer", "task_tag"}) {
        if (!j.contains(field) || !j[field].is_string()) {
            throw ValidationError("missing or non-string field '" +
                                      std::string(field) + "'",
                                  line);
        }
    }
    QueryInstance q;
    q.id = j["id"].get<std::string>();
    q.question = j["question"].get<std::string>();
    q.gold_answer = j["gold_answer"].get<std::string>();
    q.task_tag = j["task_tag"].get<std::string>();
    if (q.id.empty()) throw ValidationError("empty instance id", line);

    try {
        q.grade = j.contains("grade") ? GradeSpec::from_json(j["grade"]) : GradeSpec{};
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("field 'grade': ") + e.what(), line);
    }

    if (j.contains("difficulty_level") && !j["difficulty_level"].is_null()) {
        if (!j["difficulty_level"].is_number_integer()) {
            throw ValidationError("field 'difficulty_level' must be an integer", line);
        }
        const int level = j["difficulty_level"].get<int>();
        if (level < 1 || level > 5) {
            throw ValidationError("field 'difficulty_level' out of range 1-5", line);
        }
        q.difficulty_level = level;
    }

    if (j.contains("split")) {
        try {
            q.split = split_from_name(j["split"].get<std::string>());
        } catch (const ValidationError& e) {
            throw ValidationError(e.what(), line);
        }
    }

    if (j.contains("payload")) {
        if (!j["payload"].is_object()) {
            throw ValidationError("field 'payload' must be an object", line);
        }
        q.payload = j["payload"];
    }

    // Game-of-24 instances must carry their four positive source numbers.
    if (q.task_tag == "game24" || q.grade.kind == GradeKind::GameOf24) {
        if (!q.payload.contains("numbers") || !q.payload["numbers"].is_array() ||
            q.payload["numbers"].size() != 4) {
            throw ValidationError(
                "game24 instance '" + q.id + "' needs payload.numbers with 4 entries",
                line);
        }
        for (const json& n : q.payload["numbers"]) {
            if (!n.is_number_integer() || n.get<int>() <= 0) {
                throw ValidationError("game24 instance '" + q.id +
                                          "': payload.numbers must be positive integers",
                                      line);
            }
        }
    }
    return q;
}

std::vector<QueryInstance> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus file: " + path.string());

    std::vector<QueryInstance> corpus;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    std::ostringstream problems;
    int problem_count = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            QueryInstance q = QueryInstance::from_json(j, line_no);
            if (!seen_ids.insert(q.id).second) {
                throw ValidationError("duplicate instance id '" + q.id + "'", line_no);
            }
            corpus.push_back(std::move(q));
        } catch (const json::parse_error& e) {
            problems << "line " << line_no << ": invalid JSON (" << e.what() << ")\n";
            ++problem_count;
        } catch (const ValidationError& e) {
            problems << "line " << line_no << ": " << e.what() << "\n";
            ++problem_count;
        }
    }

    if (problem_count > 0) {
        throw ValidationError(path.string() + ": " + std::to_string(problem_count) +
                              " invalid line(s)\n" + problems.str());
    }
    return corpus;
}

void write_corpus(const std::filesystem::path& path,
                  const std::vector<QueryInstance>& corpus) {
    std::ostringstream out;
    for (const QueryInstance& q : corpus) {
        out << q.to_json().dump() << "\n";
    }
    util::atomic_write_file(path, out.str());
}

std::map<Split, std::vector<QueryInstance>> partition(
    const std::vector<QueryInstance>& corpus, const SplitSpec& spec) {
    std::map<Split, std::vector<QueryInstance>> result;
    result[Split::Train];
    result[Split::FewShot];
    result[Split::Eval];

    if (spec.mode == SplitSpec::Mode::Explicit) {
        for (const QueryInstance& q : corpus) result[q.split].push_back(q);
        return result;
    }

    // SampleFewShot: deterministic per-tag draw, stable under corpus order.
    std::map<std::string, std::vector<std::size_t>> by_tag;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        by_tag[corpus[i].task_tag].push_back(i);
    }
    std::set<std::size_t> fewshot_indices;
    for (const auto& [tag, indices] : by_tag) {
        const auto perm = util::seeded_permutation(
            indices.size(), util::derive_seed(spec.seed, {"fewshot", tag}));
        const std::size_t take =
            std::min<std::size_t>(static_cast<std::size_t>(spec.per_tag), indices.size());
        for (std::size_t k = 0; k < take; ++k) {
            fewshot_indices.insert(indices[perm[k]]);
        }
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (fewshot_indices.count(i)) {
            QueryInstance q = corpus[i];
            q.split = Split::FewShot;
            result[Split::FewShot].push_back(std::move(q));
        } else {
            result[corpus[i].split].push_back(corpus[i]);
        }
    }
    return result;
}

}  // namespace reasonlab
