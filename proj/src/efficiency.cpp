#include "distil/efficiency.hpp"

#include <chrono>

#include <fmt/format.h>

namespace distil {

const char* const kMeasurementBoundary =
    "throughput = generated tokens / wall-clock seconds of the generation call only, "
    "single stream, sequential; prompt building and response parsing excluded";

void EfficiencyStats::validate() const {
    if (tokens_per_second < 0 || gpu_memory_gb < 0 || co2_kg_per_hour < 0 || usd_per_month < 0 ||
        hours_per_month < 0)
        throw ArgumentError("efficiency stats for " + model_id + " contain a negative value");
}

Json to_json(const EfficiencyStats& s) {
    return Json{{"model_id", s.model_id},
                {"tokens_per_second", s.tokens_per_second},
                {"gpu_memory_gb", s.gpu_memory_gb},
                {"co2_kg_per_hour", s.co2_kg_per_hour},
                {"usd_per_month", s.usd_per_month},
                {"hours_per_month", s.hours_per_month}};
}

EfficiencyStats efficiency_stats_from_json(const Json& j) {
    EfficiencyStats s;
    s.model_id = j.value("model_id", "");
    s.tokens_per_second = j.at("tokens_per_second").get<double>();
    s.gpu_memory_gb = j.value("gpu_memory_gb", 0.0);
    s.co2_kg_per_hour = j.value("co2_kg_per_hour", 0.0);
    s.usd_per_month = j.value("usd_per_month", 0.0);
    s.hours_per_month = j.value("hours_per_month", 30.0);
    s.validate();
    return s;
}

std::map<std::string, HardwareProfile> load_hardware_profiles(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (j.is_object()) j = Json::array({j});
    std::map<std::string, HardwareProfile> out;
    for (const auto& p : j) {
        HardwareProfile h{p.at("name").get<std::string>(), p.at("co2_kg_per_hour").get<double>(),
                          p.at("usd_per_hour").get<double>()};
        if (h.co2_kg_per_hour < 0 || h.usd_per_hour < 0) throw ConfigError("negative figure in profile " + h.name);
        out[h.name] = h;
    }
    return out;
}

EfficiencyStats with_profile(EfficiencyStats s, const HardwareProfile& p) {
    s.co2_kg_per_hour = p.co2_kg_per_hour;
    s.usd_per_month = p.usd_per_hour * s.hours_per_month;
    return s;
}

Throughput measure_throughput(ChatBackend& backend, std::span<const PromptBundle> prompts,
                              const GenerationConfig& config, const std::function<double()>& clock) {
    if (prompts.empty()) throw ArgumentError("measure_throughput needs at least one prompt");
    config.validate();
    const auto now = clock ? clock : [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
    Throughput t;
    for (const auto& p : prompts) {
        const double start = now();
        const Completion c = complete_bundle(backend, p, config);
        const double stop = now();
        t.seconds += c.elapsed_s ? *c.elapsed_s : stop - start;
        t.generated_tokens += c.generated_tokens;
    }
    if (t.generated_tokens == 0) throw MeasurementError("backend generated zero tokens");
    if (t.seconds <= 0) throw MeasurementError("measured generation time is zero");
    t.tokens_per_second = static_cast<double>(t.generated_tokens) / t.seconds;
    return t;
}

EfficiencyReport efficiency_report(const EfficiencyStats& a, const EfficiencyStats& b) {
    a.validate();
    b.validate();
    if (a.tokens_per_second <= 0) throw ArgumentError("reference throughput must be positive");
    auto ratio = [](double num, double den) { return den == 0 ? 0.0 : num / den; };
    EfficiencyReport r{a, b};
    r.speed_ratio = b.tokens_per_second / a.tokens_per_second;
    r.slowdown_pct = 100.0 * (1.0 - r.speed_ratio);
    r.memory_ratio = ratio(b.gpu_memory_gb, a.gpu_memory_gb);
    r.emissions_ratio = ratio(b.co2_kg_per_hour, a.co2_kg_per_hour);
    r.cost_ratio = ratio(b.usd_per_month, a.usd_per_month);
    return r;
}

Json to_json(const EfficiencyReport& r) {
    return Json{{"measurement_boundary", kMeasurementBoundary},
                {"a", to_json(r.a)},
                {"b", to_json(r.b)},
                {"slowdown_pct", r.slowdown_pct},
                {"speed_ratio", r.speed_ratio},
                {"memory_ratio", r.memory_ratio},
                {"emissions_ratio", r.emissions_ratio},
                {"cost_ratio", r.cost_ratio}};
}

std::string render_efficiency_table(const EfficiencyReport& r) {
    std::string out = fmt::format("# {}\n", kMeasurementBoundary);
    out += fmt::format("{:<18} {:>14} {:>14} {:>10}\n", "", r.a.model_id, r.b.model_id, "b/a");
    out += fmt::format("{:<18} {:>14.4f} {:>14.4f} {:>10.4f}\n", "tokens/s", r.a.tokens_per_second,
                       r.b.tokens_per_second, r.speed_ratio);
    out += fmt::format("{:<18} {:>14.2f} {:>14.2f} {:>10.4f}\n", "gpu memory (GB)", r.a.gpu_memory_gb,
                       r.b.gpu_memory_gb, r.memory_ratio);
    out += fmt::format("{:<18} {:>14.3f} {:>14.3f} {:>10.4f}\n", "kg CO2eq/hour", r.a.co2_kg_per_hour,
                       r.b.co2_kg_per_hour, r.emissions_ratio);
    out += fmt::format("{:<18} {:>14.2f} {:>14.2f} {:>10.4f}\n", "USD/month", r.a.usd_per_month, r.b.usd_per_month,
                       r.cost_ratio);
    out += fmt::format("b is {:.2f}% slower than a\n", r.slowdown_pct);
    return out;
}

}  // namespace distil
