#include "reasonlab/actions.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

std::string layer_name(Layer layer) {
    switch (layer) {
        case Layer::Analysis: return "analysis";
        case Layer::Solution: return "solution";
        case Layer::Verification: return "verification";
    }
    return "?";
}

Layer layer_from_name(const std::string& name) {
    if (name == "analysis") return Layer::Analysis;
    if (name == "solution") return Layer::Solution;
    if (name == "verification") return Layer::Verification;
    throw ConfigError("unknown layer: " + name);
}

std::string Trajectory::id() const {
    return analysis.id + "/" + solution.id + "/" + verification.id;
}

int trajectory_length(const Trajectory& t) {
    int len = 0;
    for (const Action* a : {&t.analysis, &t.solution, &t.verification}) {
        if (!a->is_empty) ++len;
    }
    return len;
}

bool trajectory_canonical_less(const Trajectory& a, const Trajectory& b) {
    return std::make_tuple(trajectory_length(a), std::cref(a.analysis.id),
                           std::cref(a.solution.id), std::cref(a.verification.id)) <
           std::make_tuple(trajectory_length(b), std::cref(b.analysis.id),
                           std::cref(b.solution.id), std::cref(b.verification.id));
}

namespace {

// Placeholder markers look like {question}; lowercase identifiers only, so
// LaTeX braces in prompt bodies do not collide.
std::vector<std::string> scan_placeholders(const std::string& body) {
    std::set<std::string> found;
    for (std::size_t i = 0; i + 1 < body.size(); ++i) {
        if (body[i] != '{') continue;
        std::size_t j = i + 1;
        while (j < body.size() &&
               (std::islower(static_cast<unsigned char>(body[j])) || body[j] == '_')) {
            ++j;
        }
        if (j > i + 1 && j < body.size() && body[j] == '}') {
            found.insert(body.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return {found.begin(), found.end()};
}

}  // namespace

std::string PromptTemplate::render(
    const std::map<std::string, std::string>& bindings) const {
    for (const std::string& name : required_placeholders) {
        if (bindings.find(name) == bindings.end()) {
            throw TemplateError("template '" + key + "' missing binding for {" +
                                name + "}");
        }
    }
    std::string out = body;
    for (const auto& [name, value] : bindings) {
        const std::string marker = "{" + name + "}";
        std::size_t pos = 0;
        while ((pos = out.find(marker, pos)) != std::string::npos) {
            out.replace(pos, marker.size(), value);
            pos += value.size();
        }
    }
    return out;
}

void TemplateStore::add(PromptTemplate tmpl) {
    tmpl.required_placeholders = scan_placeholders(tmpl.body);
    templates_[tmpl.key] = std::move(tmpl);
}

TemplateStore TemplateStore::load_directory(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw ConfigError("template directory not found: " + dir.string());
    }
    TemplateStore store;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        store.add({entry.path().stem().string(), util::read_file(entry.path()), {}});
    }
    return store;
}

const PromptTemplate& TemplateStore::get(const std::string& key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) {
        throw TemplateError("no template with key '" + key + "'");
    }
    return it->second;
}

bool TemplateStore::contains(const std::string& key) const {
    return templates_.find(key) != templates_.end();
}

Catalog::Catalog(std::vector<Action> actions) : actions_(std::move(actions)) {
    std::set<std::string> ids;
    for (const Action& a : actions_) {
        if (!ids.insert(a.id).second) {
            throw ConfigError("duplicate action id: " + a.id);
        }
        if (a.is_empty && a.layer == Layer::Solution) {
            throw ConfigError("solution layer has no empty action (" + a.id + ")");
        }
    }
}

Catalog Catalog::default_catalog() {
    std::vector<Action> actions;
    actions.push_back({"rewrite", Layer::Analysis, "Query rewriting", "rewrite",
                       false, false, AnalysisThreading::Replace});
    actions.push_back({"decompose", Layer::Analysis, "Query decomposition",
                       "decompose", false, false, AnalysisThreading::Append});
    actions.push_back({"empty_a", Layer::Analysis, "Skip analysis", "", true,
                       false, AnalysisThreading::Append});
    actions.push_back({"cot", Layer::Solution, "Chain-of-thought", "cot", false,
                       false, AnalysisThreading::Append});
    actions.push_back({"pot", Layer::Solution, "Program-of-thought", "pot", false,
                       true, AnalysisThreading::Append});
    actions.push_back({"verify", Layer::Verification, "Self-verification",
                       "verify", false, false, AnalysisThreading::Append});
    actions.push_back({"empty_v", Layer::Verification, "Skip verification", "",
                       true, false, AnalysisThreading::Append});
    return Catalog(std::move(actions));
}

Catalog Catalog::load_file(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(util::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("catalog parse error in " + path.string() + ": " + e.what());
    }
    if (!doc.contains("actions") || !doc["actions"].is_array()) {
        throw ConfigError("catalog file needs an 'actions' array: " + path.string());
    }
    std::vector<Action> actions;
    for (const json& entry : doc["actions"]) {
        Action a;
        a.id = entry.at("id").get<std::string>();
        a.layer = layer_from_name(entry.at("layer").get<std::string>());
        a.display_name = entry.value("display_name", a.id);
        a.is_empty = entry.value("empty", false);
        a.prompt_template_ref = entry.value("template", std::string{});
        a.runs_program = entry.value("program", false);
        const std::string threading = entry.value("threading", "append");
        if (threading == "replace") {
            a.threading = AnalysisThreading::Replace;
        } else if (threading == "append") {
            a.threading = AnalysisThreading::Append;
        } else {
            throw ConfigError("action '" + a.id + "': unknown threading '" +
                              threading + "'");
        }
        if (!a.is_empty && a.prompt_template_ref.empty()) {
            throw ConfigError("action '" + a.id + "' needs a template");
        }
        actions.push_back(std::move(a));
    }
    return Catalog(std::move(actions));
}

std::vector<Action> Catalog::layer_actions(Layer layer) const {
    std::vector<Action> out;
    for (const Action& a : actions_) {
        if (a.layer == layer) out.push_back(a);
    }
    return out;
}

const Action& Catalog::by_id(const std::string& id) const {
    for (const Action& a : actions_) {
        if (a.id == id) return a;
    }
    throw ConfigError("no action with id '" + id + "'");
}

std::optional<Action> Catalog::find(const std::string& id) const {
    for (const Action& a : actions_) {
        if (a.id == id) return a;
    }
    return std::nullopt;
}

Trajectory Catalog::make_trajectory(const std::string& analysis_id,
                                    const std::string& solution_id,
                                    const std::string& verification_id) const {
    Trajectory t{by_id(analysis_id), by_id(solution_id), by_id(verification_id)};
    if (t.analysis.layer != Layer::Analysis ||
        t.solution.layer != Layer::Solution ||
        t.verification.layer != Layer::Verification) {
        throw ConfigError("trajectory slots must match layers: " + t.id());
    }
    return t;
}

std::vector<Trajectory> enumerate_trajectories(const Catalog& catalog) {
    const auto analysis = catalog.layer_actions(Layer::Analysis);
    const auto solution = catalog.layer_actions(Layer::Solution);
    const auto verification = catalog.layer_actions(Layer::Verification);
    if (analysis.empty() || solution.empty() || verification.empty()) {
        throw ConfigError("catalog needs at least one action per layer");
    }
    std::vector<Trajectory> all;
    all.reserve(analysis.size() * solution.size() * verification.size());
    for (const Action& a : analysis) {
        for (const Action& s : solution) {
            for (const Action& v : verification) {
                all.push_back({a, s, v});
            }
        }
    }
    std::sort(all.begin(), all.end(), trajectory_canonical_less);
    return all;
}

}  // namespace reasonlab
