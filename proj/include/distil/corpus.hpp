#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distil/errors.hpp"
#include "distil/label.hpp"

namespace distil {

struct Post {
    std::string id;
    std::string text;
    Label gold_label = Label::non_hate;
    std::string source_id;

    friend bool operator==(const Post&, const Post&) = default;
};

using SourceHistogram = std::map<std::string, std::size_t>;

// Immutable pool of labelled posts. Ids are unique and texts non-blank.
class Corpus {
public:
    explicit Corpus(std::vector<Post> posts);

    const std::vector<Post>& posts() const { return posts_; }
    std::size_t size() const { return posts_.size(); }
    const SourceHistogram& source_histogram() const { return histogram_; }
    const Post* find(std::string_view id) const;

    // SHA-256 over the canonical serialization of every post, in order.
    const std::string& fingerprint() const { return fingerprint_; }

private:
    std::vector<Post> posts_;
    SourceHistogram histogram_;
    std::unordered_map<std::string, std::size_t> index_;
    std::string fingerprint_;
};

enum class CorpusFormat { delimited, jsonl };

// Guesses from the extension: .jsonl/.ndjson -> jsonl, everything else delimited.
CorpusFormat corpus_format_for(const std::filesystem::path& path);

struct LoadReport {
    std::size_t accepted = 0;
    std::size_t skipped_blank = 0;
    std::size_t rejected_label = 0;
};

// Columns/keys: text, label, source and an optional id (defaults to the
// 1-based record number). Throws IoError when the file is unreadable or no
// record survives validation.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   LoadReport* report = nullptr);

struct Subsample {
    std::string name;
    std::vector<Post> posts;
    std::uint64_t seed = 0;
    std::string parent_fingerprint;

    std::size_t count(Label label) const;
    SourceHistogram source_histogram() const;
    std::unordered_map<std::string, const Post*> index() const;
};

// Raised when the eligible pool cannot supply n/2 posts of some label.
class InfeasibleSample : public Error {
public:
    InfeasibleSample(std::string report, std::size_t hate_deficit, std::size_t non_hate_deficit)
        : Error(std::move(report)), hate_deficit(hate_deficit), non_hate_deficit(non_hate_deficit) {}
    std::size_t hate_deficit;
    std::size_t non_hate_deficit;
};

// Draws n posts with |hate - non_hate| <= 1 and per-source counts following
// the corpus source distribution (largest remainder). Label balance wins
// over source proportions when a (source, label) cell runs short.
Subsample stratified_balanced_sample(const Corpus& corpus, std::size_t n, std::uint64_t seed,
                                     const std::set<std::string>& exclude = {},
                                     std::string name = "subsample");

// Integer apportionment of `total` units over items with real-valued ideal
// shares and per-item bounds. Units go one at a time to the item with the
// largest remaining deficit (ideal - assigned); ties go to the lower index.
// Without binding bounds and with sum(ideal) == total this is the
// largest-remainder method, so every item lands within 1 of its ideal.
// Throws ArgumentError if the bounds cannot sum to total.
std::vector<std::size_t> apportion_bounded(std::size_t total, std::span<const double> ideal,
                                           std::span<const std::size_t> lower,
                                           std::span<const std::size_t> upper);

void save_subsample(const Subsample& sample, const std::filesystem::path& path);
Subsample load_subsample(const std::filesystem::path& path);

}  // namespace distil
