#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace distil {

// Insertion-ordered JSON keeps serialized artifacts byte-stable.
using Json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const Json> rows);

// Portable seeded generator. std::shuffle and the std distributions are
// implementation-defined, so sampling goes through these helpers instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    double uniform01();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace distil
