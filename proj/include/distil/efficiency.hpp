#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "distil/inference.hpp"

namespace distil {

struct EfficiencyStats {
    std::string model_id;
    double tokens_per_second = 0.0;
    double gpu_memory_gb = 0.0;  // reported, not measured
    double co2_kg_per_hour = 0.0;
    double usd_per_month = 0.0;
    double hours_per_month = 30.0;

    void validate() const;
};
Json to_json(const EfficiencyStats& s);
EfficiencyStats efficiency_stats_from_json(const Json& j);

struct HardwareProfile {
    std::string name;
    double co2_kg_per_hour = 0.0;
    double usd_per_hour = 0.0;
};
// File holds either one profile object or an array of them.
std::map<std::string, HardwareProfile> load_hardware_profiles(const std::filesystem::path& path);

// Fills the emission and cost fields from a hardware profile.
EfficiencyStats with_profile(EfficiencyStats s, const HardwareProfile& p);

class MeasurementError : public Error {
public:
    using Error::Error;
};

struct Throughput {
    std::size_t generated_tokens = 0;
    double seconds = 0.0;
    double tokens_per_second = 0.0;
};

// Sequential generation over all prompts. Only the backend call is timed; a
// backend-reported elapsed time takes precedence over the clock.
Throughput measure_throughput(ChatBackend& backend, std::span<const PromptBundle> prompts,
                              const GenerationConfig& config, const std::function<double()>& clock = {});

struct EfficiencyReport {
    EfficiencyStats a;
    EfficiencyStats b;
    double slowdown_pct = 0.0;   // 100 * (1 - b.tps / a.tps)
    double speed_ratio = 0.0;    // b.tps / a.tps
    double memory_ratio = 0.0;   // b / a, 0 when a is 0
    double emissions_ratio = 0.0;
    double cost_ratio = 0.0;
};

EfficiencyReport efficiency_report(const EfficiencyStats& a, const EfficiencyStats& b);

extern const char* const kMeasurementBoundary;

Json to_json(const EfficiencyReport& r);
std::string render_efficiency_table(const EfficiencyReport& r);

}  // namespace distil
