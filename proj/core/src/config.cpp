#include "reasonlab/config.hpp"

#include <cstdlib>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;

json profile_to_json(const SolverProfile& profile) {
    json j = {{"kind", profile.endpoint_kind == EndpointKind::Mock ? "mock" : "remote"},
              {"name", profile.name},
              {"model", profile.model_id},
              {"temperature", profile.temperature},
              {"max_output_tokens", profile.max_output_tokens},
              {"request_timeout_ms", profile.request_timeout.count()},
              {"max_parallel", profile.max_parallel}};
    if (profile.endpoint_kind == EndpointKind::RemoteChat) {
        j["base_url"] = profile.base_url;
        j["api_key_env"] = profile.api_key_env;
    } else {
        json rules = json::array();
        for (const MockRule& r : profile.mock.rules) {
            json rule = {{"match_all", r.match_all}};
            if (r.p_success) {
                rule["p_success"] = *r.p_success;
                rule["success_response"] = r.success_response;
                rule["failure_response"] = r.failure_response;
                rule["seed"] = r.rule_seed;
            } else {
                rule["response"] = r.response;
            }
            rules.push_back(std::move(rule));
        }
        j["rules"] = std::move(rules);
    }
    return j;
}

SolverProfile profile_from_json(const json& j, const std::string& name) {
    SolverProfile profile;
    profile.name = j.value("name", name);
    const std::string kind = j.value("kind", "mock");
    if (kind == "mock") {
        profile.endpoint_kind = EndpointKind::Mock;
        profile.model_id = j.value("model", "mock:" + profile.name);
        for (const json& rule_json : j.value("rules", json::array())) {
            MockRule rule;
            if (rule_json.contains("match_all")) {
                rule.match_all = rule_json["match_all"].get<std::vector<std::string>>();
            }
            if (rule_json.contains("p_success")) {
                rule.p_success = rule_json["p_success"].get<double>();
                rule.success_response = rule_json.value("success_response", std::string{});
                rule.failure_response = rule_json.value("failure_response", std::string{});
                rule.rule_seed = rule_json.value("seed", std::uint64_t{0});
            } else {
                rule.response = rule_json.value("response", std::string{});
            }
            profile.mock.rules.push_back(std::move(rule));
        }
    } else if (kind == "remote") {
        profile.endpoint_kind = EndpointKind::RemoteChat;
        if (!j.contains("model")) {
            throw ConfigError("profile '" + profile.name + "': remote needs a model");
        }
        profile.model_id = j["model"].get<std::string>();
        profile.base_url = j.value("base_url", std::string{});
        profile.api_key_env = j.value("api_key_env", std::string{"REASONLAB_API_KEY"});
    } else {
        throw ConfigError("profile '" + profile.name + "': unknown kind '" + kind + "'");
    }
    profile.temperature = j.value("temperature", 0.4);
    profile.max_output_tokens = j.value("max_output_tokens", 1024);
    profile.request_timeout =
        std::chrono::milliseconds(j.value("request_timeout_ms", 60'000));
    profile.max_parallel = j.value("max_parallel", 4);
    return profile;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& value) {
    const std::filesystem::path p(value);
    return p.is_absolute() ? p : base / p;
}

}  // namespace

RunConfig RunConfig::load_file(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(util::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    const std::filesystem::path base = path.has_parent_path()
                                           ? path.parent_path()
                                           : std::filesystem::path(".");

    RunConfig cfg;
    if (doc.contains("catalog")) {
        cfg.catalog_path = resolve(base, doc["catalog"].get<std::string>());
    }
    if (doc.contains("templates_dir")) {
        cfg.templates_dir = resolve(base, doc["templates_dir"].get<std::string>());
    }
    if (doc.contains("profiles")) {
        const json& profiles = doc["profiles"];
        if (profiles.contains("solver")) {
            cfg.solver = profile_from_json(profiles["solver"], "solver");
        }
        if (profiles.contains("planner")) {
            cfg.planner = profile_from_json(profiles["planner"], "planner");
        }
        if (profiles.contains("generator")) {
            cfg.generator = profile_from_json(profiles["generator"], "generator");
        }
    }
    if (doc.contains("search")) cfg.search = SearchConfig::from_json(doc["search"]);
    if (doc.contains("policy")) {
        const json& policy = doc["policy"];
        cfg.max_verification_rounds = policy.value("max_verification_rounds", 2);
        if (policy.contains("program_interpreter")) {
            cfg.program_interpreter =
                policy["program_interpreter"].get<std::vector<std::string>>();
        }
        cfg.program_time_limit_ms = policy.value("program_time_limit_ms", 10'000);
        if (policy.contains("few_shot_file")) {
            cfg.few_shot_file = resolve(base, policy["few_shot_file"].get<std::string>());
        }
        if (policy.contains("few_shot_blocks")) {
            for (const auto& [traj, file] : policy["few_shot_blocks"].items()) {
                cfg.few_shot_blocks[traj] = resolve(base, file.get<std::string>());
            }
        }
    }
    if (doc.contains("datasets")) {
        const json& datasets = doc["datasets"];
        if (datasets.contains("train")) {
            cfg.train_corpus = resolve(base, datasets["train"].get<std::string>());
        }
        if (datasets.contains("eval")) {
            cfg.eval_corpus = resolve(base, datasets["eval"].get<std::string>());
        }
    }
    if (doc.contains("output_dir")) {
        cfg.output_dir = resolve(base, doc["output_dir"].get<std::string>());
    }
    if (doc.contains("cache_dir")) {
        cfg.cache_dir = resolve(base, doc["cache_dir"].get<std::string>());
    }
    cfg.strict = doc.value("strict", false);
    cfg.instance_parallel = doc.value("instance_parallel", 1);
    cfg.upsample_factor = doc.value("upsample_factor", 8);
    return cfg;
}

void RunConfig::apply_environment() {
    const char* base_url = std::getenv("REASONLAB_BASE_URL");
    if (base_url == nullptr) return;
    for (auto* profile : {&solver, &planner, &generator}) {
        if (profile->has_value() &&
            (*profile)->endpoint_kind == EndpointKind::RemoteChat &&
            (*profile)->base_url.empty()) {
            (*profile)->base_url = base_url;
        }
    }
}

json RunConfig::to_json() const {
    json j = {{"catalog", catalog_path.string()},
              {"templates_dir", templates_dir.string()},
              {"search", search.to_json()},
              {"policy",
               {{"max_verification_rounds", max_verification_rounds},
                {"program_interpreter", program_interpreter},
                {"program_time_limit_ms", program_time_limit_ms},
                {"few_shot_file", few_shot_file.string()}}},
              {"datasets",
               {{"train", train_corpus.string()}, {"eval", eval_corpus.string()}}},
              {"strict", strict},
              {"instance_parallel", instance_parallel},
              {"upsample_factor", upsample_factor}};
    json profiles = json::object();
    if (solver) profiles["solver"] = profile_to_json(*solver);
    if (planner) profiles["planner"] = profile_to_json(*planner);
    if (generator) profiles["generator"] = profile_to_json(*generator);
    j["profiles"] = std::move(profiles);
    json blocks = json::object();
    for (const auto& [traj, file] : few_shot_blocks) blocks[traj] = file.string();
    j["policy"]["few_shot_blocks"] = std::move(blocks);
    return j;
}

std::string RunConfig::digest() const { return util::sha256_hex(to_json().dump()); }

Catalog RunConfig::load_catalog() const {
    return catalog_path.empty() ? Catalog::default_catalog()
                                : Catalog::load_file(catalog_path);
}

std::shared_ptr<const TemplateStore> RunConfig::load_templates() const {
    if (templates_dir.empty()) {
        throw ConfigError("no templates_dir configured");
    }
    return std::make_shared<const TemplateStore>(
        TemplateStore::load_directory(templates_dir));
}

ExecutionPolicy RunConfig::make_policy() const {
    if (!solver) throw ConfigError("no solver profile configured");
    ExecutionPolicy policy;
    policy.solver = *solver;
    policy.max_verification_rounds = max_verification_rounds;
    policy.program_options.interpreter = program_interpreter;
    policy.program_options.time_limit =
        std::chrono::milliseconds(program_time_limit_ms);
    if (!few_shot_file.empty()) {
        policy.few_shot_block = util::read_file(few_shot_file);
    }
    return policy;
}

}  // namespace reasonlab
