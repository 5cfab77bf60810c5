#include "distil/humaneval.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

namespace distil {

std::vector<AnnotationTask> build_annotation_batch(
    const std::map<std::string, std::vector<PredictionRecord>>& predictions_by_model, const Subsample& posts,
    std::size_t n_per_model, std::uint64_t seed, bool aligned) {
    if (predictions_by_model.empty()) throw ArgumentError("no models to annotate");
    if (n_per_model == 0) throw ArgumentError("n_per_model must be positive");
    const auto index = posts.index();
    Rng rng(seed);

    // Usable predictions per model, sorted by post id for determinism.
    std::map<std::string, std::map<std::string, const PredictionRecord*>> usable;
    for (const auto& [model, preds] : predictions_by_model) {
        auto& m = usable[model];
        for (const auto& p : preds) {
            if (!p.parse_ok || !p.rationale || p.rationale->empty()) continue;
            if (!index.count(p.post_id)) throw ConsistencyError("prediction for unknown post id " + p.post_id);
            m.emplace(p.post_id, &p);
        }
        if (m.size() < n_per_model)
            throw ArgumentError(fmt::format("model {} has {} parsed predictions, {} short of {}", model, m.size(),
                                            n_per_model - m.size(), n_per_model));
    }

    std::map<std::string, std::vector<std::string>> chosen;
    if (aligned) {
        std::vector<std::string> common;
        for (const auto& [post_id, _] : usable.begin()->second) {
            bool everywhere = std::all_of(usable.begin(), usable.end(),
                                          [&](const auto& kv) { return kv.second.count(post_id) > 0; });
            if (everywhere) common.push_back(post_id);
        }
        if (common.size() < n_per_model)
            throw ArgumentError(fmt::format("only {} posts are parsed for every model, {} short", common.size(),
                                            n_per_model - common.size()));
        rng.shuffle(std::span<std::string>(common));
        common.resize(n_per_model);
        for (const auto& [model, _] : usable) chosen[model] = common;
    } else {
        for (const auto& [model, m] : usable) {
            std::vector<std::string> ids;
            for (const auto& [post_id, _] : m) ids.push_back(post_id);
            rng.shuffle(std::span<std::string>(ids));
            ids.resize(n_per_model);
            chosen[model] = std::move(ids);
        }
    }

    std::vector<AnnotationTask> tasks;
    for (const auto& [model, ids] : chosen) {
        for (const auto& post_id : ids) {
            const PredictionRecord& p = *usable[model][post_id];
            AnnotationTask t;
            t.post_id = post_id;
            t.post_text = index.at(post_id)->text;
            t.predicted_label = p.predicted_label;
            t.explanations = *p.rationale;
            t.hidden_model_id = model;
            tasks.push_back(std::move(t));
        }
    }
    rng.shuffle(std::span<AnnotationTask>(tasks));
    const int width = static_cast<int>(std::max<std::size_t>(4, std::to_string(tasks.size()).size()));
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        tasks[i].display_order = i;
        tasks[i].task_id = fmt::format("t{:0{}}", i, width);
    }
    return tasks;
}

namespace {

struct TaskGroup {
    std::vector<const AnnotationRecord*> records;
};

// Groups by task and enforces exactly k distinct annotators with consistent
// fragment counts.
std::map<std::string, TaskGroup> group_records(std::span<const AnnotationRecord> records, std::size_t k) {
    if (k == 0) throw ConfigError("annotator count must be positive");
    std::map<std::string, TaskGroup> groups;
    for (const auto& r : records) groups[r.task_id].records.push_back(&r);
    for (const auto& [task, g] : groups) {
        if (g.records.size() != k)
            throw ConsistencyError(fmt::format("task {} has {} annotation records, expected {}", task,
                                               g.records.size(), k));
        std::set<std::string> annotators;
        for (const auto* r : g.records) {
            if (!annotators.insert(r->annotator_id).second)
                throw ConsistencyError("task " + task + " annotated twice by " + r->annotator_id);
            if (r->correct.size() != g.records.front()->correct.size())
                throw ConsistencyError("task " + task + ": annotators disagree on the fragment count");
        }
    }
    return groups;
}

double pct(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

AgreementPair compute_unanimous_agreement(std::span<const AnnotationRecord> records, std::size_t k) {
    const auto groups = group_records(records, k);
    std::size_t posts_agree = 0, fragments = 0, fragments_agree = 0;
    for (const auto& [_, g] : groups) {
        const auto& first = *g.records.front();
        posts_agree += std::all_of(g.records.begin(), g.records.end(),
                                   [&](const auto* r) { return r->complete == first.complete; });
        for (std::size_t f = 0; f < first.correct.size(); ++f) {
            ++fragments;
            fragments_agree += std::all_of(g.records.begin(), g.records.end(),
                                           [&](const auto* r) { return r->correct[f] == first.correct[f]; });
        }
    }
    return {pct(posts_agree, groups.size()), pct(fragments_agree, fragments)};
}

AgreementPair compute_majority_metrics(std::span<const AnnotationRecord> records, std::size_t k) {
    if (k % 2 == 0) throw ConfigError("majority decision needs an odd annotator count");
    const auto groups = group_records(records, k);
    std::size_t complete_posts = 0, correct_posts = 0;
    for (const auto& [_, g] : groups) {
        const std::size_t yes = static_cast<std::size_t>(
            std::count_if(g.records.begin(), g.records.end(), [](const auto* r) { return r->complete; }));
        complete_posts += 2 * yes > k;
        bool all_correct = true;
        for (std::size_t f = 0; f < g.records.front()->correct.size(); ++f) {
            const std::size_t ok = static_cast<std::size_t>(
                std::count_if(g.records.begin(), g.records.end(), [&](const auto* r) { return r->correct[f]; }));
            all_correct = all_correct && 2 * ok > k;
        }
        correct_posts += all_correct;
    }
    return {pct(complete_posts, groups.size()), pct(correct_posts, groups.size())};
}

AgreementReport agreement_report(std::span<const AnnotationRecord> records, std::size_t k) {
    std::map<std::string, std::size_t> per_task;
    for (const auto& r : records) ++per_task[r.task_id];
    std::vector<AnnotationRecord> kept;
    AgreementReport rep;
    for (const auto& [task, n] : per_task) rep.n_skipped_tasks += n != k;
    for (const auto& r : records)
        if (per_task[r.task_id] == k) kept.push_back(r);

    const auto iaa = compute_unanimous_agreement(kept, k);
    rep.iaa_complete_pct = iaa.complete_pct;
    rep.iaa_correct_pct = iaa.correct_pct;
    if (k % 2 == 1) {
        const auto maj = compute_majority_metrics(kept, k);
        rep.majority_complete_pct = maj.complete_pct;
        rep.majority_correct_pct = maj.correct_pct;
    }
    rep.n_posts = per_task.size() - rep.n_skipped_tasks;
    std::set<std::string> counted;
    for (const auto& r : kept)
        if (counted.insert(r.task_id).second) rep.n_fragments += r.correct.size();
    return rep;
}

std::map<std::string, AgreementReport> agreement_by_model(std::span<const AnnotationRecord> records,
                                                          const std::map<std::string, std::string>& key,
                                                          std::size_t k) {
    std::map<std::string, std::vector<AnnotationRecord>> split;
    for (const auto& r : records) {
        auto it = key.find(r.task_id);
        if (it == key.end()) throw ConsistencyError("annotation for task " + r.task_id + " missing from key");
        split[it->second].push_back(r);
    }
    std::map<std::string, AgreementReport> out;
    for (const auto& [model, recs] : split) out[model] = agreement_report(recs, k);
    return out;
}

Json to_json(const AgreementReport& r) {
    return Json{{"iaa_complete_pct", r.iaa_complete_pct},
                {"iaa_correct_pct", r.iaa_correct_pct},
                {"majority_complete_pct", r.majority_complete_pct},
                {"majority_correct_pct", r.majority_correct_pct},
                {"n_posts", r.n_posts},
                {"n_fragments", r.n_fragments},
                {"n_skipped_tasks", r.n_skipped_tasks}};
}

Json annotator_view(const AnnotationTask& t) {
    Json frags = Json::array();
    for (const auto& e : t.explanations) frags.push_back(Json{{"fragment", e.fragment}, {"explanation", e.explanation}});
    return Json{{"task_id", t.task_id},
                {"display_order", t.display_order},
                {"post_text", t.post_text},
                {"predicted_label", std::string(to_string(t.predicted_label))},
                {"fragments", frags}};
}

void save_annotation_batch(std::span<const AnnotationTask> tasks, const std::filesystem::path& batch_path,
                           const std::filesystem::path& key_path) {
    std::vector<Json> batch, key;
    for (const auto& t : tasks) {
        batch.push_back(annotator_view(t));
        key.push_back(Json{{"task_id", t.task_id}, {"model_id", t.hidden_model_id}, {"post_id", t.post_id}});
    }
    write_jsonl(batch_path, batch);
    write_jsonl(key_path, key);
}

std::map<std::string, std::string> load_annotation_key(const std::filesystem::path& key_path) {
    std::map<std::string, std::string> key;
    for (const auto& j : read_jsonl(key_path)) key[j.at("task_id").get<std::string>()] = j.at("model_id").get<std::string>();
    return key;
}

std::vector<AnnotationTask> load_annotation_batch(const std::filesystem::path& batch_path,
                                                  const std::filesystem::path& key_path) {
    std::map<std::string, std::pair<std::string, std::string>> key;
    for (const auto& j : read_jsonl(key_path))
        key[j.at("task_id").get<std::string>()] = {j.at("model_id").get<std::string>(), j.value("post_id", "")};
    std::vector<AnnotationTask> tasks;
    for (const auto& j : read_jsonl(batch_path)) {
        AnnotationTask t;
        t.task_id = j.at("task_id").get<std::string>();
        t.display_order = j.at("display_order").get<std::size_t>();
        t.post_text = j.at("post_text").get<std::string>();
        if (auto l = parse_label(j.value("predicted_label", "non_hate"))) t.predicted_label = *l;
        for (const auto& f : j.at("fragments"))
            t.explanations.push_back({f.at("fragment").get<std::string>(), f.at("explanation").get<std::string>()});
        auto it = key.find(t.task_id);
        if (it == key.end()) throw ConsistencyError("task " + t.task_id + " missing from key file");
        t.hidden_model_id = it->second.first;
        t.post_id = it->second.second;
        tasks.push_back(std::move(t));
    }
    return tasks;
}

Json to_json(const AnnotationRecord& r) {
    return Json{{"task_id", r.task_id}, {"annotator_id", r.annotator_id}, {"complete", r.complete}, {"correct", r.correct}};
}

AnnotationRecord annotation_record_from_json(const Json& j) {
    AnnotationRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.complete = j.at("complete").get<bool>();
    for (const auto& v : j.at("correct")) r.correct.push_back(v.get<bool>());
    return r;
}

void save_annotation_records(std::span<const AnnotationRecord> records, const std::filesystem::path& path) {
    std::vector<Json> rows;
    for (const auto& r : records) rows.push_back(to_json(r));
    write_jsonl(path, rows);
}

std::vector<AnnotationRecord> load_annotation_records(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<AnnotationRecord> out;
    if (!trim(text).empty() && trim(text).front() == '[') {
        for (const auto& j : Json::parse(text)) out.push_back(annotation_record_from_json(j));
        return out;
    }
    for (const auto& j : read_jsonl(path)) out.push_back(annotation_record_from_json(j));
    return out;
}

}  // namespace distil
