#include <gtest/gtest.h>

#include <random>

#include "distil/distillation.hpp"
#include "distil/response.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace distil;

namespace {

class RecordingTrainer : public Trainer {
public:
    std::optional<TrainConfig> seen;
    std::string name() const override { return "recording"; }
    TrainResult train(const std::filesystem::path&, const TrainConfig& config, const std::filesystem::path&) override {
        seen = config;
        return {"recorded", {{0, 1.0}, {config.steps, 0.5}}};
    }
};

InferenceRecord ok_record(const std::string& id, bool hate, const std::string& fragment) {
    InferenceRecord r;
    r.post_id = id;
    r.model_id = "teacher";
    r.status = RecordStatus::ok;
    r.response = RationaleResponse{hate, {{fragment, "because"}}, ""};
    r.attempts = 1;
    return r;
}

Subsample load_filter_fixture_subsample() {
    return load_subsample(fixtures::source_dir() / "tests/fixtures/filter50/subsample.jsonl");
}

std::vector<DistilSample> some_samples() {
    std::vector<Post> posts{{"a", "they are vermin", Label::hate, "s"}, {"b", "nice day", Label::non_hate, "s"}};
    Subsample s{"x", posts, 0, "fp"};
    std::vector<InferenceRecord> recs{ok_record("a", true, "vermin"), ok_record("b", false, "nice day")};
    return filter_label_match(recs, s).samples;
}

}  // namespace

TEST(Filter, ShippedFixtureKeepsPlantedMatches) {
    const Subsample s = load_filter_fixture_subsample();
    const auto recs = load_inference_records(fixtures::source_dir() / "tests/fixtures/filter50/teacher.jsonl");
    const FilterResult f = filter_label_match(recs, s);
    EXPECT_EQ(f.report.kept, 31u);
    EXPECT_EQ(f.report.dropped_mismatch, 15u);
    EXPECT_EQ(f.report.dropped_parse_failure, 4u);
    EXPECT_EQ(f.report.total(), 50u);
    for (const auto& d : f.samples) EXPECT_NO_THROW(check_distil_sample(d));
}

TEST(Filter, RandomizedSetEqualityAndIdempotence) {
    std::mt19937_64 g(5);
    for (int round = 0; round < 100; ++round) {
        std::vector<Post> posts;
        std::vector<InferenceRecord> recs;
        std::set<std::string> expected;
        const int n = 1 + int(g() % 40);
        for (int i = 0; i < n; ++i) {
            const std::string id = "p" + std::to_string(i);
            const bool gold = g() % 2;
            posts.push_back({id, "text " + id, label_from_bool(gold), "s"});
            const int kind = int(g() % 5);
            if (kind == 0) {
                InferenceRecord r;
                r.post_id = id;
                r.status = RecordStatus::parse_failure;
                recs.push_back(r);
            } else {
                const bool pred = kind == 1 ? !gold : gold;
                recs.push_back(ok_record(id, pred, "text"));
                if (pred == gold) expected.insert(id);
            }
        }
        const Subsample s{"r", posts, 0, "fp"};
        const FilterResult f = filter_label_match(recs, s);
        std::set<std::string> kept;
        for (const auto& d : f.samples) kept.insert(d.post.id);
        EXPECT_EQ(kept, expected);
        EXPECT_EQ(f.report.total(), recs.size());
        // Re-filtering the kept samples as records changes nothing.
        std::vector<InferenceRecord> again;
        for (const auto& d : f.samples) again.push_back(ok_record(d.post.id, is_hate(d.teacher_label), "text"));
        EXPECT_EQ(filter_label_match(again, s).samples.size(), f.samples.size());
    }
}

TEST(Filter, UnknownPostIdIsConsistencyError) {
    const Subsample s{"x", {{"a", "t", Label::hate, "s"}}, 0, "fp"};
    const std::vector<InferenceRecord> recs{ok_record("zzz", true, "t")};
    EXPECT_THROW(filter_label_match(recs, s), ConsistencyError);
}

TEST(DistilSamples, JsonRoundTripAndChecks) {
    auto samples = some_samples();
    ASSERT_EQ(samples.size(), 2u);
    const auto dir = fixtures::temp_dir("samples");
    save_distil_samples(samples, dir / "s.jsonl");
    const auto back = load_distil_samples(dir / "s.jsonl");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].target_text, samples[0].target_text);
    samples[0].teacher_label = Label::non_hate;
    EXPECT_THROW(check_distil_sample(samples[0]), ConsistencyError);
}

TEST(TrainingFile, ExportVerifiesAndDetectsTampering) {
    const auto samples = some_samples();
    const auto dir = fixtures::temp_dir("train");
    const auto m = export_training_file(samples, dir / "t.jsonl");
    EXPECT_EQ(m.count, 2u);
    EXPECT_EQ(verify_training_file(dir / "t.jsonl").sha256, m.sha256);
    const auto ex = load_training_file(dir / "t.jsonl");
    EXPECT_EQ(ex[0].instruction, build_instruction_prompt(HateSpeechDefinition::standard(), "they are vermin").rendered);
    EXPECT_EQ(ex[0].target, R"({"hate_speech":"True","explanations":[["vermin","because"]]})");

    std::string text = read_file(dir / "t.jsonl");
    write_file(dir / "bad.jsonl", text.replace(text.find("This is the definition"), 4, "That"));
    EXPECT_THROW(verify_training_file(dir / "bad.jsonl"), ConsistencyError);
    write_file(dir / "bad2.jsonl", R"({"instruction": "x", "target": "not json"})" "\n");
    EXPECT_THROW(verify_training_file(dir / "bad2.jsonl"), ConsistencyError);
}

TEST(Loss, MatchesDoubleLoopOracle) {
    std::mt19937_64 g(17);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int round = 0; round < 200; ++round) {
        const std::size_t n = 1 + g() % 16;
        TokenLossBreakdown b;
        b.sample_count = n;
        b.label_loss = u(g);
        std::vector<std::vector<double>> nested(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t t_i = g() % 40;
            b.rationale_lengths.push_back(t_i);
            for (std::size_t t = 0; t < t_i; ++t) {
                nested[i].push_back(u(g));
                b.rationale_token_losses.push_back(nested[i].back());
            }
        }
        const LossWeights w{u(g), u(g)};
        EXPECT_NEAR(multitask_loss(b, w), oracle::multitask_loss(w.alpha, w.beta, b.label_loss, nested, n), 1e-12);
        EXPECT_NEAR(multitask_loss(b, {0.0, w.beta}), w.beta * multitask_loss(b, {0.0, 1.0}), 1e-9);
        EXPECT_DOUBLE_EQ(multitask_loss(b, {w.alpha, 0.0}), w.alpha * b.label_loss);
    }
}

TEST(Loss, RejectsInvalidBreakdowns) {
    TokenLossBreakdown b;
    EXPECT_THROW(multitask_loss(b, {}), ArgumentError);
    b.sample_count = 1;
    b.label_loss = -1;
    EXPECT_THROW(multitask_loss(b, {}), ArgumentError);
    b.label_loss = 1;
    b.rationale_token_losses = {1, 2};
    b.rationale_lengths = {3};
    EXPECT_THROW(multitask_loss(b, {}), ArgumentError);
    b.rationale_lengths = {2};
    EXPECT_DOUBLE_EQ(multitask_loss(b, {1, 1}), 4.0);
    EXPECT_THROW(multitask_loss(b, {-1, 1}), ArgumentError);
}

TEST(TrainConfig, DefaultsAndRoundTrip) {
    const TrainConfig c;
    EXPECT_EQ(c.lora_rank, 16);
    EXPECT_EQ(c.lora_alpha, 32);
    EXPECT_EQ(c.quantization_bits, 4);
    EXPECT_EQ(c.steps, 1000);
    EXPECT_DOUBLE_EQ(c.learning_rate, 2.5e-5);
    EXPECT_EQ(c.max_sequence_tokens, 4096);
    EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
}

TEST(Finetune, PassesConfigThroughUnchanged) {
    const auto dir = fixtures::temp_dir("finetune");
    export_training_file(some_samples(), dir / "t.jsonl");
    RecordingTrainer t;
    const auto r = run_finetune(t, dir / "t.jsonl", TrainConfig{}, dir / "out");
    ASSERT_TRUE(t.seen.has_value());
    EXPECT_EQ(*t.seen, TrainConfig{});
    EXPECT_EQ(r.artifact_ref, "recorded");
    EXPECT_FALSE(std::filesystem::exists(dir / "out" / ".finetune.lock"));
}

TEST(Finetune, CapabilityAndLockFailures) {
    const auto dir = fixtures::temp_dir("finetune-caps");
    export_training_file(some_samples(), dir / "t.jsonl");
    RecordingTrainer t;
    TrainConfig c;
    c.steps = 0;
    EXPECT_THROW(run_finetune(t, dir / "t.jsonl", c, dir / "out"), CapabilityError);
    c = {};
    c.quantization_bits = 3;
    EXPECT_THROW(run_finetune(t, dir / "t.jsonl", c, dir / "out"), CapabilityError);
    EXPECT_FALSE(t.seen.has_value());

    std::filesystem::create_directories(dir / "locked");
    write_file(dir / "locked" / ".finetune.lock", "123\n");
    EXPECT_THROW(run_finetune(t, dir / "t.jsonl", TrainConfig{}, dir / "locked"), Error);
    EXPECT_FALSE(t.seen.has_value());
}

TEST(ToyTrainer, LossDecreases) {
    const auto dir = fixtures::temp_dir("toy");
    export_training_file(some_samples(), dir / "t.jsonl");
    ToyTrainer trainer({0.5, 100000});
    TrainConfig c;
    c.steps = 200;
    const auto r = run_finetune(trainer, dir / "t.jsonl", c, dir / "out");
    ASSERT_EQ(r.log.size(), 201u);
    EXPECT_LT(r.log.back().loss, r.log.front().loss);
    for (std::size_t i = 1; i < r.log.size(); ++i) EXPECT_LE(r.log[i].loss, r.log[i - 1].loss + 1e-9);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "toy_bigram.json"));
    EXPECT_EQ(r.artifact_ref.rfind("toy-bigram@", 0), 0u);
}

TEST(CommandTrainer, RunsScriptAndReadsLog) {
    const auto dir = fixtures::temp_dir("cmd");
    export_training_file(some_samples(), dir / "t.jsonl");
    write_file(dir / "train.sh",
               "#!/bin/sh\n"
               "cfg=\"$2\"\n"
               "out=$(dirname \"$cfg\")\n"
               "grep -q '\"max_steps\": 1000' \"$cfg\" || exit 4\n"
               "printf '{\"step\":0,\"loss\":2.0}\\n{\"step\":1000,\"loss\":1.0}\\n' > \"$out/train_log.jsonl\"\n"
               "echo '{\"artifact_ref\":\"adapter-xyz\"}' > \"$out/artifact.json\"\n");
    std::filesystem::permissions(dir / "train.sh", std::filesystem::perms::owner_all);
    CommandTrainer trainer({(dir / "train.sh").string(), Json::object(), "base"});
    const auto r = run_finetune(trainer, dir / "t.jsonl", TrainConfig{}, dir / "out");
    EXPECT_EQ(r.artifact_ref, "adapter-xyz");
    ASSERT_EQ(r.log.size(), 2u);
    EXPECT_DOUBLE_EQ(r.log[1].loss, 1.0);

    write_file(dir / "fail.sh", "#!/bin/sh\necho 'CUDA out of memory'\nexit 1\n");
    std::filesystem::permissions(dir / "fail.sh", std::filesystem::perms::owner_all);
    CommandTrainer failing({(dir / "fail.sh").string(), Json::object(), "base"});
    try {
        run_finetune(failing, dir / "t.jsonl", TrainConfig{}, dir / "out2");
        FAIL();
    } catch (const TrainerError& e) {
        EXPECT_NE(e.log_tail().find("CUDA out of memory"), std::string::npos);
    }
}
