#pragma once

#include <unistd.h>

#include <filesystem>
#include <set>
#include <random>
#include <string>
#include <vector>

#include "distil/corpus.hpp"
#include "distil/humaneval.hpp"
#include "oracles.hpp"

namespace fixtures {

inline std::filesystem::path source_dir() { return DISTIL_SOURCE_DIR; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("distil-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Random labelled corpus: 1-5 sources, skewed sizes and hate rates.
inline distil::Corpus random_corpus(std::uint64_t seed, std::size_t min_size = 40, std::size_t max_size = 400) {
    std::mt19937_64 g(seed);
    const std::size_t n = min_size + g() % (max_size - min_size + 1);
    const std::size_t sources = 1 + g() % 5;
    std::vector<double> weight(sources), hate_rate(sources);
    for (std::size_t s = 0; s < sources; ++s) {
        weight[s] = 0.2 + double(g() % 1000) / 1000.0;
        hate_rate[s] = 0.15 + double(g() % 700) / 1000.0;
    }
    std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
    std::vector<distil::Post> posts;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = pick(g);
        const bool hate = double(g() % 1000) / 1000.0 < hate_rate[s];
        posts.push_back({"r" + std::to_string(i), "post " + std::to_string(i),
                         hate ? distil::Label::hate : distil::Label::non_hate, "src" + std::to_string(s)});
    }
    return distil::Corpus(std::move(posts));
}

inline std::vector<distil::AnnotationRecord> to_records(const std::vector<oracle::Judgement>& js) {
    std::vector<distil::AnnotationRecord> out;
    for (const auto& j : js) out.push_back({j.task, j.annotator, j.complete, j.correct});
    return out;
}

// 20 posts x 3 annotators, 50 fragments (10 posts with 3, 10 with 2).
// Completeness disagreements planted on 3 posts, correctness disagreements
// on 7 fragments.
inline std::vector<oracle::Judgement> planted_agreement_fixture() {
    std::vector<oracle::Judgement> js;
    int fragment_no = 0;
    const std::set<int> complete_split{2, 9, 15};
    const std::set<int> fragment_split{0, 4, 11, 23, 30, 41, 49};
    for (int post = 0; post < 20; ++post) {
        const int nf = post < 10 ? 3 : 2;
        std::vector<std::vector<bool>> correct(3, std::vector<bool>(nf, true));
        for (int f = 0; f < nf; ++f, ++fragment_no) {
            if (fragment_split.count(fragment_no)) correct[fragment_no % 3][f] = false;
        }
        for (int a = 0; a < 3; ++a) {
            bool complete = post % 4 != 3;  // some posts unanimously incomplete
            if (complete_split.count(post) && a == post % 3) complete = !complete;
            char task[8];
            std::snprintf(task, sizeof task, "t%03d", post);
            js.push_back({task, "ann" + std::to_string(a + 1), complete, correct[a]});
        }
    }
    return js;
}

// 10 posts x 3 annotators with 2 fragments each; only fragment 1 of post 4
// has a false majority.
inline std::vector<oracle::Judgement> majority_fixture() {
    std::vector<oracle::Judgement> js;
    for (int post = 0; post < 10; ++post) {
        for (int a = 0; a < 3; ++a) {
            std::vector<bool> correct{true, true};
            if (post == 4 && a < 2) correct[1] = false;
            if (post == 7 && a == 0) correct[0] = false;  // minority dissent only
            js.push_back({"m" + std::to_string(post), "ann" + std::to_string(a + 1), true, correct});
        }
    }
    return js;
}

}  // namespace fixtures
