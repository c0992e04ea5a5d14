#include "reasonlab/exporter.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

std::string render_trajectory_text(const Trajectory& t) {
    return "ANALYSIS: " + t.analysis.id + " | SOLUTION: " + t.solution.id +
           " | VERIFY: " + t.verification.id;
}

namespace {

// One trajectory line: "ANALYSIS: a | SOLUTION: s | VERIFY: v" with flexible
// spacing. Returns the three ids.
std::optional<std::array<std::string, 3>> match_trajectory_line(
    const std::string& line) {
    static const char* kFields[3] = {"ANALYSIS:", "SOLUTION:", "VERIFY:"};
    std::array<std::string, 3> ids;
    std::size_t pos = 0;
    for (int f = 0; f < 3; ++f) {
        const std::size_t field = line.find(kFields[f], pos);
        if (field == std::string::npos) return std::nullopt;
        std::size_t start = field + std::strlen(kFields[f]);
        while (start < line.size() && line[start] == ' ') ++start;
        std::size_t end = start;
        while (end < line.size() && line[end] != ' ' && line[end] != '|') ++end;
        if (end == start) return std::nullopt;
        ids[f] = line.substr(start, end - start);
        if (f < 2) {
            const std::size_t bar = line.find('|', end);
            if (bar == std::string::npos) return std::nullopt;
            pos = bar + 1;
        }
    }
    return ids;
}

}  // namespace

std::optional<Trajectory> parse_trajectory_text(const std::string& text,
                                                const Catalog& catalog) {
    std::optional<Trajectory> found;
    for (const std::string& line : util::split_lines(text)) {
        const auto ids = match_trajectory_line(line);
        if (!ids) continue;
        const auto a = catalog.find((*ids)[0]);
        const auto s = catalog.find((*ids)[1]);
        const auto v = catalog.find((*ids)[2]);
        if (!a || !s || !v) continue;
        if (a->layer != Layer::Analysis || s->layer != Layer::Solution ||
            v->layer != Layer::Verification) {
            continue;
        }
        found = Trajectory{*a, *s, *v};
    }
    return found;
}

std::string sft_flavor_name(SftFlavor flavor) {
    return flavor == SftFlavor::ExternalPlanner ? "external_planner" : "internalized";
}

json SftRecord::to_json() const {
    return json{{"input", input_text},
                {"target", target_text},
                {"meta",
                 {{"flavor", sft_flavor_name(flavor)},
                  {"source_instance_id", source_instance_id},
                  {"trajectory", render_trajectory_text(trajectory)},
                  {"upsample_weight", upsample_weight},
                  {"explanation_placeholder", explanation_placeholder}}}};
}

json ExportReport::to_json() const {
    json histogram = json::object();
    for (const auto& [tag, counts] : trajectory_histogram) {
        histogram[tag] = counts;
    }
    return json{{"built", built},
                {"dropped_no_success", dropped_no_success},
                {"skipped_filtered", skipped_filtered},
                {"explanation_placeholders", explanation_placeholders},
                {"dropped_ids", dropped_ids},
                {"trajectory_histogram", histogram}};
}

TrainingExporter::TrainingExporter(std::shared_ptr<SolverGateway> gateway,
                                   std::shared_ptr<const TemplateStore> templates,
                                   Catalog catalog)
    : gateway_(std::move(gateway)),
      templates_(std::move(templates)),
      catalog_(std::move(catalog)) {}

std::string TrainingExporter::generate_explanation(
    const QueryInstance& q, const Trajectory& optimal,
    const std::vector<CandidateStats>& final_ranking,
    const SolverProfile* generator, bool strict, bool* placeholder) {
    if (placeholder) *placeholder = false;
    if (generator == nullptr) {
        if (strict) {
            throw ConfigError("no explanation generator configured (instance '" +
                              q.id + "')");
        }
        if (placeholder) *placeholder = true;
        return "";
    }

    std::ostringstream ranking_summary;
    const std::size_t top = std::min<std::size_t>(3, final_ranking.size());
    for (std::size_t i = 0; i < top; ++i) {
        const CandidateStats& c = final_ranking[i];
        ranking_summary << (i + 1) << ". " << render_trajectory_text(c.trajectory)
                        << " (" << c.successes << "/" << c.trials << " trials)\n";
    }

    const std::string prompt =
        templates_->get("explain").render({{"question", q.question},
                                           {"trajectory", render_trajectory_text(optimal)},
                                           {"ranking_summary", ranking_summary.str()}});
    try {
        const GenerationRecord rec = gateway_->generate(
            *generator, prompt, util::derive_seed(0, {"explanation", q.id}));
        return util::trim(rec.output_text);
    } catch (const GatewayError& e) {
        if (strict) {
            throw ConfigError("explanation generation failed for instance '" +
                              q.id + "': " + e.what());
        }
        if (placeholder) *placeholder = true;
        return "";
    }
}

std::vector<SftRecord> TrainingExporter::build_records(
    const std::vector<std::pair<QueryInstance, SearchOutcome>>& outcomes,
    SftFlavor flavor, const SolverProfile* generator, bool strict,
    ExportReport* report) {
    ExportReport local;
    ExportReport& rep = report ? *report : local;

    std::vector<SftRecord> records;
    for (const auto& [q, outcome] : outcomes) {
        if (outcome.filtered != FilterDecision::Kept) {
            ++rep.skipped_filtered;
            continue;
        }
        if (!outcome.canonical_transcript) {
            ++rep.dropped_no_success;
            rep.dropped_ids.push_back(q.id);
            continue;
        }

        SftRecord record;
        record.flavor = flavor;
        record.source_instance_id = q.id;
        record.trajectory = outcome.optimal;
        record.input_text =
            templates_->get("planner_input").render({{"question", q.question}});

        bool placeholder = false;
        record.explanation = generate_explanation(
            q, outcome.optimal, outcome.final_ranking(), generator, strict,
            &placeholder);
        record.explanation_placeholder = placeholder;
        if (placeholder) ++rep.explanation_placeholders;

        const std::string trajectory_text = render_trajectory_text(outcome.optimal);
        std::string target = record.explanation;
        if (!target.empty()) target += "\n";
        target += trajectory_text;
        if (flavor == SftFlavor::Internalized) {
            target += "\n" + outcome.canonical_transcript->reasoning_text;
            target += "\nFinal answer: " + q.gold_answer;
        }
        record.target_text = std::move(target);

        ++rep.built;
        rep.trajectory_histogram[q.task_tag][outcome.optimal.id()] += 1;
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<SftRecord> upsample(std::vector<SftRecord> records,
                                const std::set<std::string>& few_shot_ids,
                                int factor) {
    if (factor < 1) throw ConfigError("upsample factor must be >= 1");
    for (SftRecord& r : records) {
        r.upsample_weight = few_shot_ids.count(r.source_instance_id) ? factor : 1;
    }
    return records;
}

void write_sft_file(const std::filesystem::path& path,
                    const std::vector<SftRecord>& records) {
    std::ostringstream out;
    for (const SftRecord& r : records) {
        const std::string line = r.to_json().dump();
        for (int i = 0; i < r.upsample_weight; ++i) out << line << "\n";
    }
    util::atomic_write_file(path, out.str());
}

std::vector<json> read_sft_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open SFT file: " + path.string());
    std::vector<json> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        rows.push_back(json::parse(line));
    }
    return rows;
}

}  // namespace reasonlab
