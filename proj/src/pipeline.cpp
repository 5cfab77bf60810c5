#include "distil/pipeline.hpp"

#include <signal.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "distil/annotation_service.hpp"
#include "distil/corpus.hpp"
#include "distil/humaneval.hpp"
#include "distil/metrics.hpp"

namespace fs = std::filesystem;

namespace distil {

// ---------------------------------------------------------------- config

const RoleConfig& PipelineConfig::role(const std::string& name) const {
    for (const auto& r : roles)
        if (r.name == name) return r;
    throw ConfigError("unknown model role '" + name + "'");
}

HateSpeechDefinition PipelineConfig::definition() const {
    if (!definition_file) return HateSpeechDefinition::standard();
    if (!fs::exists(*definition_file)) throw ConfigError("definition file not found: " + definition_file->string());
    return HateSpeechDefinition{std::string(trim(read_file(*definition_file)))};
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

SubsampleSpec parse_spec(const Json& j, SubsampleSpec d) {
    return {j.value("n", d.n), j.value("seed", d.seed)};
}

GenerationConfig parse_generation(const Json& j) {
    GenerationConfig g;
    g.max_sequence_tokens = j.value("max_sequence_tokens", g.max_sequence_tokens);
    g.max_new_tokens = j.value("max_new_tokens", g.max_new_tokens);
    g.temperature = j.value("temperature", g.temperature);
    g.retries = j.value("retries", g.retries);
    g.parallelism = j.value("parallelism", g.parallelism);
    g.backoff_initial_s = j.value("backoff_initial_s", g.backoff_initial_s);
    return g;
}

RoleConfig parse_role(const std::string& name, const Json& j) {
    RoleConfig r;
    r.name = name;
    r.prompt = j.value("prompt", name == "student" ? "instruction" : "fewshot");
    if (r.prompt != "fewshot" && r.prompt != "instruction")
        throw ConfigError("role " + name + ": prompt must be fewshot or instruction");
    r.mock.model_id = name;
    if (j.contains("mock")) {
        const Json& m = j["mock"];
        r.mock.model_id = m.value("model_id", name);
        r.mock.error_permille = m.value("error_permille", r.mock.error_permille);
        r.mock.prose_permille = m.value("prose_permille", r.mock.prose_permille);
        r.mock.garble_permille = m.value("garble_permille", r.mock.garble_permille);
        r.mock.tokens_per_second = m.value("tokens_per_second", r.mock.tokens_per_second);
        if (m.contains("lexicon")) r.mock.lexicon = m["lexicon"].get<std::vector<std::string>>();
    }
    if (j.contains("http")) {
        const Json& h = j["http"];
        HttpBackendOptions o;
        o.base_url = h.at("base_url").get<std::string>();
        o.path = h.value("path", o.path);
        o.model = h.at("model").get<std::string>();
        o.timeout_s = h.value("timeout_s", o.timeout_s);
        o.supports_roles = h.value("supports_roles", o.supports_roles);
        r.api_key_env = h.value("api_key_env", "");
        r.http = o;
    }
    if (j.contains("tokens_per_second")) r.reported_tokens_per_second = j["tokens_per_second"].get<double>();
    r.gpu_memory_gb = j.value("gpu_memory_gb", 0.0);
    r.hardware_profile = j.value("hardware_profile", "");
    return r;
}

}  // namespace

PipelineConfig parse_pipeline_config(const Json& j, const fs::path& base_dir) {
    try {
        if (!j.is_object()) throw ConfigError("config must be an object");
        PipelineConfig c;
        c.raw = j;
        if (!j.contains("corpus")) throw ConfigError("config lacks 'corpus'");
        c.corpus = resolve(base_dir, j["corpus"].get<std::string>());
        c.shots = resolve(base_dir, j.value("shots", "shots.jsonl"));
        if (j.contains("definition")) c.definition_file = resolve(base_dir, j["definition"].get<std::string>());
        c.out = resolve(base_dir, j.value("out", "runs/default"));
        if (j.contains("subsamples")) {
            const Json& s = j["subsamples"];
            if (s.contains("distil")) c.distil_sample = parse_spec(s["distil"], c.distil_sample);
            if (s.contains("eval")) c.eval_sample = parse_spec(s["eval"], c.eval_sample);
        }
        if (c.distil_sample.n == 0 || c.eval_sample.n == 0) throw ConfigError("subsample sizes must be positive");
        c.generation = parse_generation(j.value("generation", Json::object()));
        c.generation.validate();
        c.train = TrainConfig::from_json(j.value("train", Json::object()));
        c.train.validate();
        c.trainer = j.value("trainer", c.trainer);
        const Json roles = j.value("roles", Json::object());
        for (const char* name : kRoles) c.roles.push_back(parse_role(name, roles.value(name, Json::object())));
        for (const auto& [name, _] : roles.items()) {
            bool known = false;
            for (const char* r : kRoles) known = known || name == r;
            if (!known) throw ConfigError("unknown role '" + name + "' (expected teacher, base or student)");
        }
        c.failure_policy = j.value("evaluation", Json::object()).value("failure_policy", c.failure_policy);
        if (c.failure_policy != "as_non_hate" && c.failure_policy != "exclude")
            throw ConfigError("failure_policy must be as_non_hate or exclude");
        if (j.contains("annotation")) {
            const Json& a = j["annotation"];
            c.annotation_roles = a.value("roles", c.annotation_roles);
            c.annotation_per_model = a.value("n_per_model", c.annotation_per_model);
            c.annotation_seed = a.value("seed", c.annotation_seed);
            c.annotation_aligned = a.value("aligned", c.annotation_aligned);
            c.annotators_per_task = a.value("k", c.annotators_per_task);
            if (a.contains("access")) c.annotation_access = resolve(base_dir, a["access"].get<std::string>());
        }
        if (j.contains("efficiency")) {
            const Json& e = j["efficiency"];
            if (e.contains("profiles")) c.hardware_profiles = resolve(base_dir, e["profiles"].get<std::string>());
            c.efficiency_a = e.value("a", c.efficiency_a);
            c.efficiency_b = e.value("b", c.efficiency_b);
            c.efficiency_prompts = e.value("prompts", c.efficiency_prompts);
        }
        return c;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_pipeline_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// ---------------------------------------------------------------- stages

namespace {

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string role;
    std::string out;
    bool mock = false;
    // stage specific
    std::string predictions;
    std::string gold;
    std::string records;
    std::string db;
    std::string host = "127.0.0.1";
    int port = 8080;
};

struct Ctx {
    PipelineConfig cfg;
    Flags flags;
    fs::path run;
    std::ostream& out;
};

std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path require(const fs::path& p) {
    if (!fs::exists(p)) throw MissingPrerequisite(p.string());
    return p;
}

// Paths inside the run directory are recorded relative to it so manifests of
// two runs compare equal.
std::string display_path(const Ctx& c, const fs::path& p) {
    const auto rel = p.lexically_relative(c.run);
    if (!rel.empty() && *rel.begin() != "..") return rel.string();
    return p.string();
}

Json file_entries(const Ctx& c, const std::vector<fs::path>& paths) {
    Json arr = Json::array();
    for (const auto& p : paths) {
        Json e{{"path", display_path(c, p)}};
        if (fs::is_regular_file(p)) e["sha256"] = sha256_file(p);
        arr.push_back(e);
    }
    return arr;
}

void write_manifest(const Ctx& c, const std::string& stage, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs, const Json& summary) {
    Json m;
    m["stage"] = stage;
    if (!c.flags.role.empty()) m["model_role"] = c.flags.role;
    m["timestamp"] = utc_timestamp();
    m["mock"] = c.flags.mock;
    m["inputs"] = file_entries(c, inputs);
    m["outputs"] = file_entries(c, outputs);
    m["config"] = c.cfg.raw;
    m["summary"] = summary;
    const std::string name = c.flags.role.empty() ? stage : stage + "-" + c.flags.role;
    write_file(c.run / "manifests" / (name + ".json"), m.dump(2) + "\n");
}

fs::path distil_path(const Ctx& c) { return c.run / "subsamples" / "distil.jsonl"; }
fs::path eval_path(const Ctx& c) { return c.run / "subsamples" / "eval.jsonl"; }
fs::path extraction_path(const Ctx& c) { return c.run / "extractions" / "teacher.jsonl"; }
fs::path samples_path(const Ctx& c) { return c.run / "distil" / "samples.jsonl"; }
fs::path train_path(const Ctx& c) { return c.run / "distil" / "train.jsonl"; }
fs::path student_dir(const Ctx& c) { return c.run / "student"; }
fs::path student_model(const Ctx& c) { return student_dir(c) / "model.json"; }
fs::path predictions_path(const Ctx& c, const std::string& role) {
    return c.run / "predictions" / (role + ".jsonl");
}
fs::path batch_path(const Ctx& c) { return c.run / "annotation" / "batch.jsonl"; }
fs::path key_path(const Ctx& c) { return c.run / "annotation" / "key.jsonl"; }

std::unique_ptr<ChatBackend> make_backend(const Ctx& c, const std::string& role_name) {
    const RoleConfig& role = c.cfg.role(role_name);
    std::string suffix;
    if (role_name == "student") {
        const Json model = Json::parse(read_file(require(student_model(c))));
        suffix = "@" + model.at("artifact_ref").get<std::string>();
    }
    if (c.flags.mock || !role.http) {
        if (!c.flags.mock) throw ConfigError("role " + role_name + " has no http backend configured; use --mock");
        MockBackendOptions o = role.mock;
        o.model_id += suffix;
        return std::make_unique<MockBackend>(o);
    }
    HttpBackendOptions o = *role.http;
    if (!role.api_key_env.empty()) {
        const char* key = std::getenv(role.api_key_env.c_str());
        if (!key) throw ConfigError("environment variable " + role.api_key_env + " is not set");
        o.api_key = key;
    }
    return std::make_unique<OpenAiChatBackend>(o);
}

std::vector<PromptRequest> build_requests(const Ctx& c, const Subsample& s, const std::string& prompt_kind) {
    const auto def = c.cfg.definition();
    std::vector<FewShotExample> shots;
    if (prompt_kind == "fewshot") shots = load_shots(require(c.cfg.shots));
    std::vector<PromptRequest> reqs;
    for (const auto& p : s.posts)
        reqs.push_back({p.id, prompt_kind == "fewshot" ? build_fewshot_cot_prompt(def, shots, p.text)
                                                       : build_instruction_prompt(def, p.text)});
    return reqs;
}

Json histogram_json(const SourceHistogram& h) {
    Json j = Json::object();
    for (const auto& [k, v] : h) j[k] = v;
    return j;
}

Json subsample_summary(const Subsample& s) {
    return Json{{"n", s.posts.size()},
                {"hate", s.count(Label::hate)},
                {"non_hate", s.count(Label::non_hate)},
                {"seed", s.seed},
                {"sources", histogram_json(s.source_histogram())}};
}

int cmd_sample(Ctx& c) {
    const Corpus corpus = load_corpus(require(c.cfg.corpus), corpus_format_for(c.cfg.corpus));
    SubsampleSpec d = c.cfg.distil_sample, e = c.cfg.eval_sample;
    if (c.flags.seed) {
        d.seed = *c.flags.seed;
        e.seed = *c.flags.seed + 1;
    }
    const Subsample distil = stratified_balanced_sample(corpus, d.n, d.seed, {}, "distil");
    std::set<std::string> used;
    for (const auto& p : distil.posts) used.insert(p.id);
    const Subsample eval = stratified_balanced_sample(corpus, e.n, e.seed, used, "eval");
    save_subsample(distil, distil_path(c));
    save_subsample(eval, eval_path(c));
    const Json summary{{"corpus_size", corpus.size()},
                       {"corpus_fingerprint", corpus.fingerprint()},
                       {"distil", subsample_summary(distil)},
                       {"eval", subsample_summary(eval)}};
    write_manifest(c, "sample", {c.cfg.corpus}, {distil_path(c), eval_path(c)}, summary);
    c.out << fmt::format("sampled distil={} (hate {}), eval={} (hate {})\n", distil.posts.size(),
                         distil.count(Label::hate), eval.posts.size(), eval.count(Label::hate));
    return 0;
}

Json batch_summary(const BatchResult& b) {
    std::map<std::string, std::size_t> by_status;
    for (const auto& r : b.records) ++by_status[std::string(to_string(r.status))];
    Json s = Json::object();
    for (const auto& [k, v] : by_status) s[k] = v;
    return Json{{"records", b.records.size()},
                {"parse_failures", b.parse_failures},
                {"parse_failure_rate", b.parse_failure_rate},
                {"status", s}};
}

int cmd_extract(Ctx& c) {
    if (c.flags.role.empty()) c.flags.role = "teacher";
    const Subsample s = load_subsample(require(distil_path(c)));
    auto backend = make_backend(c, c.flags.role);
    const auto reqs = build_requests(c, s, "fewshot");
    const BatchResult b = extract_rationales_batch(*backend, reqs, c.cfg.generation);
    const fs::path out = c.run / "extractions" / (c.flags.role + ".jsonl");
    save_inference_records(b.records, out);
    write_manifest(c, "extract", {distil_path(c), c.cfg.shots}, {out}, batch_summary(b));
    c.out << fmt::format("extracted {} records, {} parse failures ({:.2f}%)\n", b.records.size(), b.parse_failures,
                         100.0 * b.parse_failure_rate);
    return 0;
}

int cmd_filter(Ctx& c) {
    const Subsample s = load_subsample(require(distil_path(c)));
    const auto records = load_inference_records(require(extraction_path(c)));
    const FilterResult f = filter_label_match(records, s);
    save_distil_samples(f.samples, samples_path(c));
    const Json summary{{"sampled", s.posts.size()},
                       {"kept", f.report.kept},
                       {"dropped_mismatch", f.report.dropped_mismatch},
                       {"dropped_parse_failure", f.report.dropped_parse_failure},
                       {"total", f.report.total()}};
    write_manifest(c, "filter", {distil_path(c), extraction_path(c)}, {samples_path(c)}, summary);
    c.out << fmt::format("kept {} of {} (mismatch {}, parse failure {})\n", f.report.kept, s.posts.size(),
                         f.report.dropped_mismatch, f.report.dropped_parse_failure);
    return 0;
}

int cmd_export_train(Ctx& c) {
    const auto samples = load_distil_samples(require(samples_path(c)));
    const TrainingManifest m = export_training_file(samples, train_path(c), c.cfg.definition());
    write_manifest(c, "export-train", {samples_path(c)}, {train_path(c)}, Json{{"count", m.count}, {"sha256", m.sha256}});
    c.out << fmt::format("exported {} training examples\n", m.count);
    return 0;
}

std::unique_ptr<Trainer> make_trainer(const Ctx& c) {
    const Json& t = c.cfg.trainer;
    const std::string kind = t.value("kind", "toy");
    if (kind == "toy") {
        ToyTrainerOptions o;
        o.learning_rate = t.value("learning_rate", 0.0);
        o.max_steps = t.value("max_steps", o.max_steps);
        return std::make_unique<ToyTrainer>(o);
    }
    if (kind == "command") {
        CommandTrainerOptions o;
        o.command = t.at("command").get<std::string>();
        o.device_hints = t.value("device_hints", Json::object());
        o.base_model = t.value("base_model", "");
        return std::make_unique<CommandTrainer>(o);
    }
    throw ConfigError("unknown trainer kind '" + kind + "'");
}

int cmd_finetune(Ctx& c) {
    require(train_path(c));
    auto trainer = make_trainer(c);
    const TrainResult r = run_finetune(*trainer, train_path(c), c.cfg.train, student_dir(c), c.cfg.definition());
    Json log = Json::array();
    for (const auto& e : r.log) log.push_back(Json{{"step", e.step}, {"loss", e.loss}});
    const Json model{{"artifact_ref", r.artifact_ref}, {"trainer", trainer->name()}, {"train_config", c.cfg.train.to_json()}};
    write_file(student_model(c), model.dump(2) + "\n");
    Json summary{{"artifact_ref", r.artifact_ref}, {"steps_logged", r.log.size()}};
    if (!r.log.empty()) {
        summary["first_loss"] = r.log.front().loss;
        summary["last_loss"] = r.log.back().loss;
    }
    std::vector<fs::path> outputs;
    for (const auto& e : fs::directory_iterator(student_dir(c)))
        if (e.is_regular_file() && e.path().filename().string().front() != '.') outputs.push_back(e.path());
    std::sort(outputs.begin(), outputs.end());
    write_manifest(c, "finetune", {train_path(c)}, outputs, summary);
    c.out << fmt::format("trained {} ({} log entries)\n", r.artifact_ref, r.log.size());
    return 0;
}

int cmd_predict(Ctx& c) {
    if (c.flags.role.empty()) throw ConfigError("predict needs --model-role");
    const Subsample s = load_subsample(require(eval_path(c)));
    auto backend = make_backend(c, c.flags.role);
    const auto reqs = build_requests(c, s, c.cfg.role(c.flags.role).prompt);
    const BatchResult b = extract_rationales_batch(*backend, reqs, c.cfg.generation);
    const fs::path out = predictions_path(c, c.flags.role);
    save_inference_records(b.records, out);
    std::vector<fs::path> inputs{eval_path(c)};
    if (c.flags.role == "student") inputs.push_back(student_model(c));
    write_manifest(c, "predict", inputs, {out}, batch_summary(b));
    c.out << fmt::format("{}: {} predictions, {} parse failures\n", c.flags.role, b.records.size(), b.parse_failures);
    return 0;
}

// Prediction files are either inference records (with "status") or plain
// prediction records.
std::vector<PredictionRecord> load_any_predictions(const fs::path& path) {
    const auto rows = read_jsonl(path);
    std::vector<PredictionRecord> out;
    for (const auto& j : rows) {
        if (j.contains("status")) out.push_back(prediction_from_inference(inference_record_from_json(j)));
        else out.push_back(prediction_from_json(j));
    }
    return out;
}

int cmd_evaluate(Ctx& c) {
    const FailurePolicy policy =
        c.cfg.failure_policy == "exclude" ? FailurePolicy::exclude : FailurePolicy::as_non_hate;
    const fs::path gold_file = c.flags.gold.empty() ? eval_path(c) : fs::path(c.flags.gold);
    const Subsample gold = load_subsample(require(gold_file));
    std::vector<std::pair<std::string, fs::path>> inputs;
    if (!c.flags.predictions.empty()) {
        inputs.emplace_back(c.flags.role.empty() ? "fixture" : c.flags.role, c.flags.predictions);
    } else if (!c.flags.role.empty()) {
        inputs.emplace_back(c.flags.role, predictions_path(c, c.flags.role));
    } else {
        for (const char* r : kRoles)
            if (fs::exists(predictions_path(c, r))) inputs.emplace_back(r, predictions_path(c, r));
        if (inputs.empty()) throw MissingPrerequisite(predictions_path(c, "teacher").string());
    }
    std::vector<MetricsReport> reports;
    std::vector<fs::path> in_files{gold_file}, out_files;
    Json summary = Json::object();
    for (const auto& [name, path] : inputs) {
        const auto preds = load_any_predictions(require(path));
        MetricsReport m = evaluate_classification(preds, gold, policy);
        const fs::path out = c.run / "metrics" / (name + ".json");
        write_file(out, to_json(m).dump(2) + "\n");
        in_files.push_back(path);
        out_files.push_back(out);
        summary[name] = Json{{"f1_weighted", m.f1_weighted}, {"f1_macro", m.f1_macro}, {"accuracy", m.accuracy}};
        reports.push_back(std::move(m));
    }
    const std::string table = render_metrics_table(reports);
    const fs::path table_path = c.run / "metrics" / "table.txt";
    write_file(table_path, table);
    out_files.push_back(table_path);
    write_manifest(c, "evaluate", in_files, out_files, summary);
    c.out << table;
    return 0;
}

int cmd_annotate_build(Ctx& c) {
    const Subsample eval = load_subsample(require(eval_path(c)));
    std::map<std::string, std::vector<PredictionRecord>> by_model;
    std::vector<fs::path> inputs{eval_path(c)};
    for (const auto& role : c.cfg.annotation_roles) {
        const fs::path p = require(predictions_path(c, role));
        inputs.push_back(p);
        auto preds = load_any_predictions(p);
        for (auto& pr : preds) pr.model_id = role;
        by_model[role] = std::move(preds);
    }
    const std::uint64_t seed = c.flags.seed ? *c.flags.seed : c.cfg.annotation_seed;
    const auto tasks =
        build_annotation_batch(by_model, eval, c.cfg.annotation_per_model, seed, c.cfg.annotation_aligned);
    save_annotation_batch(tasks, batch_path(c), key_path(c));
    write_manifest(c, "annotate-build", inputs, {batch_path(c), key_path(c)},
                   Json{{"tasks", tasks.size()}, {"n_per_model", c.cfg.annotation_per_model}, {"seed", seed}});
    c.out << fmt::format("built {} annotation tasks\n", tasks.size());
    return 0;
}

int cmd_annotate_serve(Ctx& c) {
    if (!c.cfg.annotation_access) throw ConfigError("config lacks annotation.access");
    const BatchAccess access = load_batch_access(require(*c.cfg.annotation_access));
    const auto tasks = load_annotation_batch(require(batch_path(c)), require(key_path(c)));
    const fs::path db = c.flags.db.empty() ? c.run / "annotation" / "annotations.db" : fs::path(c.flags.db);
    AnnotationStore store(db);
    store.create_batch(access, tasks);

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    AnnotationServer server(store, ServerOptions{c.flags.host, c.flags.port});
    const int port = server.start();
    c.out << fmt::format("serving batch {} ({} tasks) on http://{}:{}\n", access.batch_id, tasks.size(),
                         c.flags.host, port)
          << std::flush;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    c.out << "stopped\n";
    return 0;
}

int cmd_agreement(Ctx& c) {
    const fs::path records_path =
        c.flags.records.empty() ? c.run / "annotation" / "export.jsonl" : fs::path(c.flags.records);
    const auto records = load_annotation_records(require(records_path));
    const auto key = load_annotation_key(require(key_path(c)));
    const std::size_t k = c.cfg.annotators_per_task;
    const AgreementReport all = agreement_report(records, k);
    const auto per_model = agreement_by_model(records, key, k);
    Json j{{"k", k}, {"overall", to_json(all)}, {"models", Json::object()}};
    std::string table = fmt::format("{:<12} {:>8} {:>8} {:>10} {:>10} {:>6}\n", "model", "IAA-C", "IAA-Cor",
                                    "Maj-C", "Maj-Cor", "posts");
    for (const auto& [model, r] : per_model) {
        j["models"][model] = to_json(r);
        table += fmt::format("{:<12} {:>8.2f} {:>8.2f} {:>10.2f} {:>10.2f} {:>6}\n", model, r.iaa_complete_pct,
                             r.iaa_correct_pct, r.majority_complete_pct, r.majority_correct_pct, r.n_posts);
    }
    const fs::path out = c.run / "annotation" / "agreement.json";
    write_file(out, j.dump(2) + "\n");
    write_manifest(c, "agreement", {records_path, key_path(c)}, {out}, j["overall"]);
    c.out << table;
    return 0;
}

EfficiencyStats role_stats(const Ctx& c, const std::string& role_name,
                           const std::map<std::string, HardwareProfile>& profiles) {
    const RoleConfig& role = c.cfg.role(role_name);
    EfficiencyStats s;
    s.model_id = role_name;
    s.gpu_memory_gb = role.gpu_memory_gb;
    if (role.reported_tokens_per_second && !c.flags.mock) {
        s.tokens_per_second = *role.reported_tokens_per_second;
    } else {
        const Subsample eval = load_subsample(require(eval_path(c)));
        Subsample head = eval;
        if (head.posts.size() > c.cfg.efficiency_prompts) head.posts.resize(c.cfg.efficiency_prompts);
        std::vector<PromptBundle> prompts;
        for (auto& r : build_requests(c, head, role.prompt)) prompts.push_back(std::move(r.bundle));
        auto backend = make_backend(c, role_name);
        s.tokens_per_second = measure_throughput(*backend, prompts, c.cfg.generation).tokens_per_second;
    }
    if (!role.hardware_profile.empty()) {
        auto it = profiles.find(role.hardware_profile);
        if (it == profiles.end()) throw ConfigError("unknown hardware profile " + role.hardware_profile);
        s = with_profile(s, it->second);
    }
    return s;
}

int cmd_efficiency(Ctx& c) {
    std::map<std::string, HardwareProfile> profiles;
    std::vector<fs::path> inputs;
    if (c.cfg.hardware_profiles) {
        profiles = load_hardware_profiles(require(*c.cfg.hardware_profiles));
        inputs.push_back(*c.cfg.hardware_profiles);
    }
    const EfficiencyStats a = role_stats(c, c.cfg.efficiency_a, profiles);
    const EfficiencyStats b = role_stats(c, c.cfg.efficiency_b, profiles);
    const EfficiencyReport r = efficiency_report(a, b);
    const fs::path json_out = c.run / "efficiency" / "report.json";
    const fs::path txt_out = c.run / "efficiency" / "report.txt";
    write_file(json_out, to_json(r).dump(2) + "\n");
    const std::string table = render_efficiency_table(r);
    write_file(txt_out, table);
    write_manifest(c, "efficiency", inputs, {json_out, txt_out},
                   Json{{"slowdown_pct", r.slowdown_pct}, {"cost_ratio", r.cost_ratio}});
    c.out << table;
    return 0;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message,
                 const std::string& artifact = "") {
    Json e{{"error", {{"kind", kind}, {"message", message}}}};
    if (!artifact.empty()) e["error"]["artifact"] = artifact;
    err << e.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge distillation pipeline for explainable hate speech detection", "distil"};
    app.require_subcommand(1);
    Flags flags;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "pipeline config (JSON)")->required();
        sub->add_option("--seed", seed, "override sampling seeds");
        sub->add_option("--model-role", flags.role, "teacher, base or student")
            ->check(CLI::IsMember({"teacher", "base", "student"}));
        sub->add_option("--out", flags.out, "run directory (overrides config 'out')");
        sub->add_flag("--mock", flags.mock, "use the deterministic mock backend for every role");
    };
    std::map<std::string, std::function<int(Ctx&)>> handlers{
        {"sample", cmd_sample},           {"extract", cmd_extract},
        {"filter", cmd_filter},           {"export-train", cmd_export_train},
        {"finetune", cmd_finetune},       {"predict", cmd_predict},
        {"evaluate", cmd_evaluate},       {"annotate-build", cmd_annotate_build},
        {"annotate-serve", cmd_annotate_serve}, {"agreement", cmd_agreement},
        {"efficiency", cmd_efficiency}};
    const std::map<std::string, std::string> help{
        {"sample", "draw the balanced distillation and evaluation subsamples"},
        {"extract", "query the teacher for rationales on the distillation subsample"},
        {"filter", "keep teacher answers whose label matches gold"},
        {"export-train", "write the instruction/target training file"},
        {"finetune", "fine-tune the student on the training file"},
        {"predict", "run a model role over the evaluation subsample"},
        {"evaluate", "compute classification metrics"},
        {"annotate-build", "build the blind human-evaluation batch"},
        {"annotate-serve", "serve the annotation batch over HTTP"},
        {"agreement", "compute agreement statistics from exported annotations"},
        {"efficiency", "compare throughput, memory, emissions and cost"}};
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, desc] : help) {
        CLI::App* sub = app.add_subcommand(name, desc);
        add_common(sub);
        subs[name] = sub;
    }
    subs["evaluate"]->add_option("--predictions", flags.predictions, "prediction file to score");
    subs["evaluate"]->add_option("--gold", flags.gold, "gold subsample file");
    subs["agreement"]->add_option("--records", flags.records, "exported annotation records");
    subs["annotate-serve"]->add_option("--db", flags.db, "SQLite store path");
    subs["annotate-serve"]->add_option("--host", flags.host, "bind address");
    subs["annotate-serve"]->add_option("--port", flags.port, "port (0 picks a free one)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return 3;
    }
    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        if (sub->count("--seed")) flags.seed = seed;
        try {
            Ctx ctx{load_pipeline_config(flags.config_path), flags, {}, out};
            ctx.run = flags.out.empty() ? ctx.cfg.out : fs::path(flags.out);
            return handlers.at(name)(ctx);
        } catch (const MissingPrerequisite& e) {
            print_error(err, "missing_prerequisite", e.what(), e.artifact());
            return 2;
        } catch (const ConfigError& e) {
            print_error(err, "config", e.what());
            return 3;
        } catch (const std::exception& e) {
            print_error(err, "error", e.what());
            return 1;
        }
    }
    return 1;
}

}  // namespace distil
