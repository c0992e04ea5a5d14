#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reasonlab {

enum class Layer { Analysis, Solution, Verification };

std::string layer_name(Layer layer);
Layer layer_from_name(const std::string& name);

// How an analysis action's output is threaded into the solution prompt:
// Replace swaps the question text for the analysis output (query rewriting),
// Append keeps the question and adds the output under a sub-questions header
// (decomposition).
enum class AnalysisThreading { Replace, Append };

// One atomic reasoning action. `is_empty` marks the skip action, which is
// only legal in the analysis and verification layers.
struct Action {
    std::string id;
    Layer layer = Layer::Analysis;
    std::string display_name;
    std::string prompt_template_ref;
    bool is_empty = false;
    bool runs_program = false;  // solution layer: answer comes from executing code
    AnalysisThreading threading = AnalysisThreading::Append;

    bool operator==(const Action& other) const { return id == other.id; }
};

// One action per layer; the searchable unit.
struct Trajectory {
    Action analysis;
    Action solution;
    Action verification;

    bool operator==(const Trajectory& other) const {
        return analysis == other.analysis && solution == other.solution &&
               verification == other.verification;
    }

    // "a/s/v" of action ids; used in seeds, journals, and reports.
    std::string id() const;
};

// Empty actions count 0, everything else 1.
int trajectory_length(const Trajectory& t);

// Total order over trajectories: (length, analysis id, solution id,
// verification id). Used for enumeration order and as the final ranking
// tie-break.
bool trajectory_canonical_less(const Trajectory& a, const Trajectory& b);

// Text with named {placeholder} markers. `required_placeholders` is scanned
// from the body at load time; render() demands a binding for each.
struct PromptTemplate {
    std::string key;
    std::string body;
    std::vector<std::string> required_placeholders;

    std::string render(const std::map<std::string, std::string>& bindings) const;
};

// Immutable after load; safe for shared concurrent reads.
class TemplateStore {
public:
    void add(PromptTemplate tmpl);
    // Loads every *.txt file in `dir`; the key is the file stem.
    static TemplateStore load_directory(const std::filesystem::path& dir);

    const PromptTemplate& get(const std::string& key) const;
    bool contains(const std::string& key) const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

// The action catalog. Data-driven: the default matches the built-in seven
// actions, and config files may add actions as long as templates exist.
class Catalog {
public:
    explicit Catalog(std::vector<Action> actions);

    static Catalog default_catalog();
    static Catalog load_file(const std::filesystem::path& path);

    const std::vector<Action>& actions() const { return actions_; }
    std::vector<Action> layer_actions(Layer layer) const;
    const Action& by_id(const std::string& id) const;
    std::optional<Action> find(const std::string& id) const;

    Trajectory make_trajectory(const std::string& analysis_id,
                               const std::string& solution_id,
                               const std::string& verification_id) const;

private:
    std::vector<Action> actions_;
};

// Full cartesian product Analysis x Solution x Verification in canonical
// order; this is the initial candidate set for the search.
std::vector<Trajectory> enumerate_trajectories(const Catalog& catalog);

}  // namespace reasonlab
