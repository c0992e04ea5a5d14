#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reasonlab/actions.hpp"
#include "reasonlab/executor.hpp"
#include "reasonlab/gateway.hpp"
#include "reasonlab/search.hpp"

namespace reasonlab {

nlohmann::json profile_to_json(const SolverProfile& profile);
SolverProfile profile_from_json(const nlohmann::json& j, const std::string& name);

// Everything one run needs, resolved from (in increasing precedence)
// built-in defaults, the config file, environment variables, and CLI flags.
// The resolved form is serialized into every run's output directory.
struct RunConfig {
    std::filesystem::path catalog_path;  // empty: built-in default catalog
    std::filesystem::path templates_dir;

    std::optional<SolverProfile> solver;
    std::optional<SolverProfile> planner;
    std::optional<SolverProfile> generator;

    SearchConfig search;
    int max_verification_rounds = 2;
    std::vector<std::string> program_interpreter{"python3", "-s"};
    int program_time_limit_ms = 10'000;

    std::filesystem::path few_shot_file;  // one block for every solution prompt
    std::map<std::string, std::filesystem::path> few_shot_blocks;  // per trajectory id

    std::filesystem::path train_corpus;
    std::filesystem::path eval_corpus;
    std::filesystem::path output_dir{"runs/out"};
    std::filesystem::path cache_dir{"runs/cache"};

    bool strict = false;
    int instance_parallel = 1;
    int upsample_factor = 8;

    // Relative paths in the file resolve against its directory.
    static RunConfig load_file(const std::filesystem::path& path);

    // REASONLAB_BASE_URL fills in remote profiles without a base_url.
    void apply_environment();

    // Behavioral fields only: where outputs land does not change what they
    // contain, so output_dir/cache_dir live in the run metadata instead.
    nlohmann::json to_json() const;
    std::string digest() const;

    Catalog load_catalog() const;
    std::shared_ptr<const TemplateStore> load_templates() const;
    ExecutionPolicy make_policy() const;  // requires solver
};

}  // namespace reasonlab
