#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "distil/backends.hpp"
#include "distil/distillation.hpp"
#include "distil/efficiency.hpp"
#include "distil/inference.hpp"
#include "distil/prompting.hpp"

namespace distil {

inline constexpr const char* kRoles[] = {"teacher", "base", "student"};

struct SubsampleSpec {
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

struct RoleConfig {
    std::string name;
    std::string prompt = "fewshot";  // fewshot | instruction
    MockBackendOptions mock;
    std::optional<HttpBackendOptions> http;
    std::string api_key_env;
    std::optional<double> reported_tokens_per_second;
    double gpu_memory_gb = 0.0;
    std::string hardware_profile;
};

// Parsed pipeline configuration. Relative paths are resolved against the
// directory of the config file.
struct PipelineConfig {
    Json raw;
    std::filesystem::path corpus;
    std::filesystem::path shots;
    std::optional<std::filesystem::path> definition_file;
    std::filesystem::path out;
    SubsampleSpec distil_sample{200, 101};
    SubsampleSpec eval_sample{100, 202};
    GenerationConfig generation;
    TrainConfig train;
    Json trainer = Json{{"kind", "toy"}};
    std::vector<RoleConfig> roles;
    std::string failure_policy = "as_non_hate";
    std::vector<std::string> annotation_roles{"teacher", "base", "student"};
    std::size_t annotation_per_model = 100;
    std::uint64_t annotation_seed = 303;
    bool annotation_aligned = false;
    std::size_t annotators_per_task = 3;
    std::optional<std::filesystem::path> annotation_access;
    std::optional<std::filesystem::path> hardware_profiles;
    std::string efficiency_a = "student";
    std::string efficiency_b = "teacher";
    std::size_t efficiency_prompts = 10;

    const RoleConfig& role(const std::string& name) const;
    HateSpeechDefinition definition() const;
};

PipelineConfig parse_pipeline_config(const Json& j, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Runs `distil <args...>`. Returns the process exit status: 0 success,
// 2 missing prerequisite, 3 configuration error, 1 anything else.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace distil
