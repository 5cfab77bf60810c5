#include "distil/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "distil/csv.hpp"
#include "distil/util.hpp"

namespace distil {

Corpus::Corpus(std::vector<Post> posts) : posts_(std::move(posts)) {
    std::string canonical;
    for (std::size_t i = 0; i < posts_.size(); ++i) {
        const Post& p = posts_[i];
        if (trim(p.text).empty()) throw ArgumentError("post " + p.id + " has blank text");
        if (!index_.emplace(p.id, i).second) throw ConsistencyError("duplicate post id " + p.id);
        ++histogram_[p.source_id];
        canonical += p.id;
        canonical += '\x1f';
        canonical += p.text;
        canonical += '\x1f';
        canonical += to_string(p.gold_label);
        canonical += '\x1f';
        canonical += p.source_id;
        canonical += '\x1e';
    }
    fingerprint_ = sha256_hex(canonical);
}

const Post* Corpus::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &posts_[it->second];
}

CorpusFormat corpus_format_for(const std::filesystem::path& path) {
    const std::string ext = to_lower(path.extension().string());
    return (ext == ".jsonl" || ext == ".ndjson") ? CorpusFormat::jsonl : CorpusFormat::delimited;
}

namespace {

struct RawRecord {
    std::string id;
    std::string text;
    std::string label;
    std::string source;
};

std::vector<RawRecord> read_delimited(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    auto rows = parse_delimited(data, sniff_delimiter(data));
    if (rows.empty()) return {};

    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[to_lower(trim(rows[0][i]))] = i;
    for (const char* required : {"text", "label", "source"})
        if (!col.count(required))
            throw IoError(path.string() + ": header lacks column '" + required + "'");

    auto cell = [](const std::vector<std::string>& row, std::size_t i) {
        return i < row.size() ? row[i] : std::string{};
    };
    std::vector<RawRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        RawRecord rec;
        rec.id = col.count("id") ? cell(rows[r], col["id"]) : std::to_string(r);
        rec.text = cell(rows[r], col["text"]);
        rec.label = cell(rows[r], col["label"]);
        rec.source = cell(rows[r], col["source"]);
        out.push_back(std::move(rec));
    }
    return out;
}

std::string scalar_to_string(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
}

std::vector<RawRecord> read_records(const std::filesystem::path& path) {
    std::vector<RawRecord> out;
    std::size_t n = 0;
    for (const Json& row : read_jsonl(path)) {
        ++n;
        RawRecord rec;
        rec.id = row.contains("id") ? scalar_to_string(row["id"]) : std::to_string(n);
        rec.text = row.contains("text") ? scalar_to_string(row["text"]) : "";
        rec.label = row.contains("label") ? scalar_to_string(row["label"]) : "";
        rec.source = row.contains("source") ? scalar_to_string(row["source"]) : "";
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, LoadReport* report) {
    if (!std::filesystem::exists(path)) throw IoError("corpus file not found: " + path.string());
    auto raw = format == CorpusFormat::delimited ? read_delimited(path) : read_records(path);

    LoadReport local;
    std::vector<Post> posts;
    posts.reserve(raw.size());
    for (auto& rec : raw) {
        if (trim(rec.text).empty()) {
            ++local.skipped_blank;
            continue;
        }
        auto label = parse_label(rec.label);
        if (!label) {
            ++local.rejected_label;
            continue;
        }
        posts.push_back(Post{std::move(rec.id), std::move(rec.text), *label, std::move(rec.source)});
    }
    local.accepted = posts.size();
    if (report) *report = local;
    if (posts.empty()) {
        std::ostringstream msg;
        msg << path.string() << ": zero valid records (" << local.skipped_blank << " blank, "
            << local.rejected_label << " with unknown label)";
        throw IoError(msg.str());
    }
    return Corpus(std::move(posts));
}

std::size_t Subsample::count(Label label) const {
    return static_cast<std::size_t>(
        std::count_if(posts.begin(), posts.end(), [&](const Post& p) { return p.gold_label == label; }));
}

SourceHistogram Subsample::source_histogram() const {
    SourceHistogram h;
    for (const auto& p : posts) ++h[p.source_id];
    return h;
}

std::unordered_map<std::string, const Post*> Subsample::index() const {
    std::unordered_map<std::string, const Post*> idx;
    for (const auto& p : posts) idx.emplace(p.id, &p);
    return idx;
}

std::vector<std::size_t> apportion_bounded(std::size_t total, std::span<const double> ideal,
                                           std::span<const std::size_t> lower,
                                           std::span<const std::size_t> upper) {
    const std::size_t k = ideal.size();
    if (lower.size() != k || upper.size() != k)
        throw ArgumentError("apportion_bounded: size mismatch");
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < k; ++i) {
        if (lower[i] > upper[i]) throw ArgumentError("apportion_bounded: lower > upper");
        lo += lower[i];
        hi += upper[i];
    }
    if (total < lo || total > hi)
        throw ArgumentError("apportion_bounded: total outside the bounds' range");

    std::vector<std::size_t> out(lower.begin(), lower.end());
    for (std::size_t assigned = lo; assigned < total; ++assigned) {
        std::size_t best = k;
        double best_deficit = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            if (out[i] >= upper[i]) continue;
            const double deficit = ideal[i] - static_cast<double>(out[i]);
            if (best == k || deficit > best_deficit) {
                best = i;
                best_deficit = deficit;
            }
        }
        ++out[best];
    }
    return out;
}

Subsample stratified_balanced_sample(const Corpus& corpus, std::size_t n, std::uint64_t seed,
                                     const std::set<std::string>& exclude, std::string name) {
    if (n < 2) throw ArgumentError("sample size must be at least 2");

    // Cells keyed by (source, label); std::map keeps sources lexicographic.
    struct Cell {
        std::vector<const Post*> hate;
        std::vector<const Post*> non_hate;
    };
    std::map<std::string, Cell> cells;
    for (const auto& [source, _] : corpus.source_histogram()) cells[source];
    std::size_t supply_hate = 0, supply_non = 0;
    for (const Post& p : corpus.posts()) {
        if (exclude.count(p.id)) continue;
        auto& cell = cells[p.source_id];
        if (is_hate(p.gold_label)) {
            cell.hate.push_back(&p);
            ++supply_hate;
        } else {
            cell.non_hate.push_back(&p);
            ++supply_non;
        }
    }

    std::size_t n_hate = n / 2, n_non = n / 2;
    if (n % 2 == 1) (supply_hate >= supply_non ? n_hate : n_non) += 1;

    if (supply_hate < n_hate || supply_non < n_non) {
        const std::size_t dh = supply_hate < n_hate ? n_hate - supply_hate : 0;
        const std::size_t dn = supply_non < n_non ? n_non - supply_non : 0;
        std::ostringstream msg;
        msg << "cannot draw " << n << " balanced posts: need " << n_hate << " hate / " << n_non
            << " non_hate, eligible supply " << supply_hate << " / " << supply_non << " (deficit "
            << dh << " hate, " << dn << " non_hate)";
        throw InfeasibleSample(msg.str(), dh, dn);
    }

    const std::size_t k = cells.size();
    std::vector<const Cell*> cell_list;
    std::vector<double> fraction;
    for (const auto& [source, cell] : cells) {
        cell_list.push_back(&cell);
        fraction.push_back(static_cast<double>(corpus.source_histogram().at(source)) /
                           static_cast<double>(corpus.size()));
    }
    std::vector<std::size_t> sup_h(k), sup_n(k), zeros(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        sup_h[i] = cell_list[i]->hate.size();
        sup_n[i] = cell_list[i]->non_hate.size();
    }

    // Stage 1: per-source totals. Stage 2: split each total by label.
    std::vector<std::size_t> take_h, take_n;
    std::vector<double> ideal(k);
    std::vector<std::size_t> cap(k);
    for (std::size_t i = 0; i < k; ++i) {
        ideal[i] = static_cast<double>(n) * fraction[i];
        cap[i] = sup_h[i] + sup_n[i];
    }
    const auto totals = apportion_bounded(n, ideal, zeros, cap);

    std::vector<std::size_t> lo(k), hi(k);
    std::size_t lo_sum = 0, hi_sum = 0;
    for (std::size_t i = 0; i < k; ++i) {
        lo[i] = totals[i] > sup_n[i] ? totals[i] - sup_n[i] : 0;
        hi[i] = std::min(totals[i], sup_h[i]);
        ideal[i] = static_cast<double>(totals[i]) * static_cast<double>(n_hate) / static_cast<double>(n);
        lo_sum += lo[i];
        hi_sum += hi[i];
    }
    if (lo_sum <= n_hate && n_hate <= hi_sum) {
        take_h = apportion_bounded(n_hate, ideal, lo, hi);
        take_n.resize(k);
        for (std::size_t i = 0; i < k; ++i) take_n[i] = totals[i] - take_h[i];
    } else {
        // Source totals cannot be split; keep label balance and apportion
        // each label over sources independently.
        for (std::size_t i = 0; i < k; ++i) ideal[i] = static_cast<double>(n_hate) * fraction[i];
        take_h = apportion_bounded(n_hate, ideal, zeros, sup_h);
        for (std::size_t i = 0; i < k; ++i) ideal[i] = static_cast<double>(n_non) * fraction[i];
        take_n = apportion_bounded(n_non, ideal, zeros, sup_n);
    }

    Rng rng(seed);
    auto by_id = [](const Post* a, const Post* b) { return a->id < b->id; };
    std::vector<Post> chosen;
    chosen.reserve(n);
    auto draw = [&](std::vector<const Post*> pool, std::size_t count) {
        std::sort(pool.begin(), pool.end(), by_id);
        rng.shuffle(std::span<const Post*>(pool));
        for (std::size_t j = 0; j < count; ++j) chosen.push_back(*pool[j]);
    };
    for (std::size_t i = 0; i < k; ++i) {
        draw(cell_list[i]->hate, take_h[i]);
        draw(cell_list[i]->non_hate, take_n[i]);
    }
    rng.shuffle(std::span<Post>(chosen));

    return Subsample{std::move(name), std::move(chosen), seed, corpus.fingerprint()};
}

void save_subsample(const Subsample& sample, const std::filesystem::path& path) {
    std::vector<Json> rows;
    rows.reserve(sample.posts.size() + 1);
    rows.push_back(Json{{"name", sample.name},
                        {"seed", sample.seed},
                        {"parent_fingerprint", sample.parent_fingerprint}});
    for (const Post& p : sample.posts)
        rows.push_back(Json{{"id", p.id},
                            {"text", p.text},
                            {"gold_label", std::string(to_string(p.gold_label))},
                            {"source", p.source_id}});
    write_jsonl(path, rows);
}

Subsample load_subsample(const std::filesystem::path& path) {
    auto rows = read_jsonl(path);
    if (rows.empty() || !rows[0].contains("parent_fingerprint"))
        throw IoError(path.string() + ": missing subsample header record");
    Subsample s;
    s.name = rows[0].value("name", "");
    s.seed = rows[0].value("seed", std::uint64_t{0});
    s.parent_fingerprint = rows[0]["parent_fingerprint"].get<std::string>();
    std::set<std::string> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const Json& r = rows[i];
        auto label = parse_label(r.at("gold_label").get<std::string>());
        if (!label) throw IoError(path.string() + ": bad gold_label on record " + std::to_string(i));
        Post p{r.at("id").get<std::string>(), r.at("text").get<std::string>(), *label,
               r.at("source").get<std::string>()};
        if (!seen.insert(p.id).second) throw ConsistencyError("duplicate post id " + p.id);
        s.posts.push_back(std::move(p));
    }
    return s;
}

}  // namespace distil
