#include <gtest/gtest.h>

#include <sstream>

#include "distil/pipeline.hpp"
#include "fixtures.hpp"

using namespace distil;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// The shipped mock config, rewritten with absolute data paths.
fs::path write_config(const fs::path& dir, Json overrides = Json::object()) {
    Json j = Json::parse(read_file(fixtures::source_dir() / "configs/mock_pipeline.json"));
    const auto src = fixtures::source_dir();
    j["corpus"] = (src / "data/synthetic_corpus.csv").string();
    j["shots"] = (src / "data/shots.jsonl").string();
    j["efficiency"]["profiles"] = (src / "data/hardware_profiles.json").string();
    j["annotation"]["access"] = (src / "configs/annotation_access.json").string();
    j["out"] = (dir / "run").string();
    j["subsamples"]["distil"]["n"] = 60;
    j["subsamples"]["eval"]["n"] = 40;
    j["train"]["steps"] = 50;
    j.merge_patch(overrides);
    write_file(dir / "config.json", j.dump(2));
    return dir / "config.json";
}

}  // namespace

TEST(Cli, UsageAndConfigErrorsExitThree) {
    EXPECT_EQ(cli({}).code, 3);
    EXPECT_EQ(cli({"sample"}).code, 3);  // --config is required
    EXPECT_EQ(cli({"sample", "--config", "/nonexistent.json"}).code, 3);
    const auto dir = fixtures::temp_dir("cli-bad");
    const auto cfg = write_config(dir, Json{{"roles", {{"oracle", Json::object()}}}});
    const CliRun r = cli({"sample", "--config", cfg.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("\"kind\":\"config\""), std::string::npos);
    EXPECT_EQ(cli({"sample", "--config", write_config(dir, Json{{"train", {{"steps", 0}}}}).string()}).code, 3);
    EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, MissingPrerequisiteExitsTwoAndNamesArtifact) {
    const auto dir = fixtures::temp_dir("cli-missing");
    const auto cfg = write_config(dir);
    const CliRun r = cli({"filter", "--config", cfg.string(), "--mock"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("subsamples/distil.jsonl"), std::string::npos);
    EXPECT_EQ(cli({"finetune", "--config", cfg.string(), "--mock"}).code, 2);
    EXPECT_EQ(cli({"predict", "--config", cfg.string(), "--mock"}).code, 3);  // role required
}

TEST(Cli, RealBackendRequiresConfigurationOrMock) {
    const auto dir = fixtures::temp_dir("cli-nomock");
    const auto cfg = write_config(dir);
    ASSERT_EQ(cli({"sample", "--config", cfg.string()}).code, 0);
    EXPECT_EQ(cli({"extract", "--config", cfg.string()}).code, 3);
}

TEST(Cli, SampleExtractFilterConserveCounts) {
    const auto dir = fixtures::temp_dir("cli-chain");
    const auto cfg = write_config(dir);
    for (const char* stage : {"sample", "extract", "filter"})
        ASSERT_EQ(cli({stage, "--config", cfg.string(), "--mock"}).code, 0) << stage;
    const Json m = Json::parse(read_file(dir / "run/manifests/filter.json"));
    const Json& s = m["summary"];
    EXPECT_EQ(s["kept"].get<int>() + s["dropped_mismatch"].get<int>() + s["dropped_parse_failure"].get<int>(),
              s["sampled"].get<int>());
    EXPECT_EQ(s["sampled"], 60);
    EXPECT_EQ(m["inputs"][1]["path"], "extractions/teacher.jsonl");
    const Json sample = Json::parse(read_file(dir / "run/manifests/sample.json"));
    EXPECT_EQ(sample["outputs"][0]["sha256"], sha256_file(dir / "run/subsamples/distil.jsonl"));
    EXPECT_EQ(m["inputs"][0]["sha256"], sample["outputs"][0]["sha256"]);  // provenance chain
}

TEST(Cli, SeedFlagChangesSubsample) {
    const auto dir = fixtures::temp_dir("cli-seed");
    const auto cfg = write_config(dir);
    ASSERT_EQ(cli({"sample", "--config", cfg.string(), "--out", (dir / "a").string(), "--seed", "5"}).code, 0);
    ASSERT_EQ(cli({"sample", "--config", cfg.string(), "--out", (dir / "b").string(), "--seed", "5"}).code, 0);
    ASSERT_EQ(cli({"sample", "--config", cfg.string(), "--out", (dir / "c").string(), "--seed", "6"}).code, 0);
    EXPECT_EQ(read_file(dir / "a/subsamples/distil.jsonl"), read_file(dir / "b/subsamples/distil.jsonl"));
    EXPECT_NE(read_file(dir / "a/subsamples/distil.jsonl"), read_file(dir / "c/subsamples/distil.jsonl"));
}

TEST(Cli, EvaluateShippedFixture) {
    const auto dir = fixtures::temp_dir("cli-eval");
    const auto cfg = write_config(dir);
    const auto src = fixtures::source_dir();
    const CliRun r = cli({"evaluate", "--config", cfg.string(), "--predictions",
                       (src / "tests/fixtures/eval20/predictions.jsonl").string(), "--gold",
                       (src / "tests/fixtures/eval20/gold.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json m = Json::parse(read_file(dir / "run/metrics/fixture.json"));
    EXPECT_NEAR(m["f1_weighted"].get<double>(), (8 * 12.0 / 17.0 + 12 * 18.0 / 23.0) / 20, 1e-12);
    EXPECT_NEAR(m["f1_macro"].get<double>(), (12.0 / 17.0 + 18.0 / 23.0) / 2, 1e-12);
    EXPECT_NE(r.out.find("F1_weighted"), std::string::npos);
}

TEST(Cli, AnnotationBuildAndAgreement) {
    const auto dir = fixtures::temp_dir("cli-annot");
    const auto cfg = write_config(dir, Json{{"annotation", {{"n_per_model", 5}, {"roles", {"teacher", "base"}}}}});
    for (const char* stage : {"sample"}) ASSERT_EQ(cli({stage, "--config", cfg.string(), "--mock"}).code, 0);
    EXPECT_EQ(cli({"annotate-build", "--config", cfg.string(), "--mock"}).code, 2);
    for (const char* role : {"teacher", "base"})
        ASSERT_EQ(cli({"predict", "--config", cfg.string(), "--mock", "--model-role", role}).code, 0);
    ASSERT_EQ(cli({"annotate-build", "--config", cfg.string(), "--mock"}).code, 0);
    const auto key = load_annotation_key(dir / "run/annotation/key.jsonl");
    ASSERT_EQ(key.size(), 10u);
    std::vector<AnnotationRecord> recs;
    const auto tasks = load_annotation_batch(dir / "run/annotation/batch.jsonl", dir / "run/annotation/key.jsonl");
    for (const auto& t : tasks)
        for (const char* a : {"ann1", "ann2", "ann3"})
            recs.push_back({t.task_id, a, true, std::vector<bool>(t.explanations.size(), true)});
    save_annotation_records(recs, dir / "export.jsonl");
    const CliRun r = cli({"agreement", "--config", cfg.string(), "--records", (dir / "export.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(read_file(dir / "run/annotation/agreement.json"));
    EXPECT_EQ(j["models"]["teacher"]["iaa_complete_pct"], 100.0);
    EXPECT_EQ(j["models"]["base"]["n_posts"], 5);
}

TEST(Cli, EfficiencyOnMockBackends) {
    const auto dir = fixtures::temp_dir("cli-eff");
    const auto cfg = write_config(dir, Json{{"efficiency", {{"a", "base"}, {"b", "teacher"}}}});
    ASSERT_EQ(cli({"sample", "--config", cfg.string(), "--mock"}).code, 0);
    const CliRun r = cli({"efficiency", "--config", cfg.string(), "--mock"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(read_file(dir / "run/efficiency/report.json"));
    EXPECT_NEAR(j["slowdown_pct"].get<double>(), 54.65, 0.01);
    EXPECT_NEAR(j["cost_ratio"].get<double>(), 7.17, 0.01);
}

TEST(Cli, ShippedConfigsParse) {
    const auto src = fixtures::source_dir();
    const PipelineConfig mock = load_pipeline_config(src / "configs/mock_pipeline.json");
    EXPECT_EQ(mock.trainer["kind"], "toy");
    const PipelineConfig llm = load_pipeline_config(src / "configs/llm_pipeline.json");
    EXPECT_EQ(llm.trainer["kind"], "command");
    for (const auto& role : llm.roles) EXPECT_TRUE(role.http.has_value()) << role.name;
    EXPECT_EQ(llm.train, mock.train);
}
