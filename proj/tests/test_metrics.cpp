#include <gtest/gtest.h>

#include <httplib.h>

#include <random>

#include "distil/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace distil;

namespace {

struct Fixture {
    Subsample gold;
    std::vector<PredictionRecord> preds;
    std::vector<int> gold_bits, pred_bits;
};

Fixture random_fixture(std::mt19937_64& g) {
    Fixture f;
    const int n = 1 + int(g() % 60);
    const double hate_rate = double(g() % 101) / 100.0, error_rate = double(g() % 101) / 100.0;
    for (int i = 0; i < n; ++i) {
        const std::string id = "p" + std::to_string(i);
        const bool gold = double(g() % 1000) / 1000.0 < hate_rate;
        const bool pred = double(g() % 1000) / 1000.0 < error_rate ? !gold : gold;
        f.gold.posts.push_back({id, "t", label_from_bool(gold), "s"});
        f.preds.push_back({id, "m", label_from_bool(pred), true, std::nullopt, std::nullopt});
        f.gold_bits.push_back(gold);
        f.pred_bits.push_back(pred);
    }
    return f;
}

}  // namespace

TEST(Metrics, MatchesBruteForceOnRandomFixtures) {
    std::mt19937_64 g(1);
    for (int round = 0; round < 300; ++round) {
        const Fixture f = random_fixture(g);
        const MetricsReport r = evaluate_classification(f.preds, f.gold);
        const oracle::Prf o = oracle::brute_force_prf(f.gold_bits, f.pred_bits);
        EXPECT_NEAR(r.f1_macro, o.macro, 1e-9);
        EXPECT_NEAR(r.f1_weighted, o.weighted, 1e-9);
        EXPECT_NEAR(r.f1_micro, o.micro, 1e-9);
        EXPECT_NEAR(r.hate.precision, o.hate.p, 1e-9);
        EXPECT_NEAR(r.non_hate.recall, o.non_hate.r, 1e-9);
    }
}

TEST(Metrics, ShippedTwentyPostFixture) {
    const auto gold = load_subsample(fixtures::source_dir() / "tests/fixtures/eval20/gold.jsonl");
    const auto preds = load_predictions(fixtures::source_dir() / "tests/fixtures/eval20/predictions.jsonl");
    const MetricsReport r = evaluate_classification(preds, gold);
    EXPECT_EQ(r.confusion.tp, 6u);
    EXPECT_EQ(r.confusion.fn, 2u);
    EXPECT_EQ(r.confusion.fp, 3u);
    EXPECT_EQ(r.confusion.tn, 9u);
    EXPECT_NEAR(r.f1_binary, 12.0 / 17.0, 1e-12);
    EXPECT_NEAR(r.non_hate.f1, 18.0 / 23.0, 1e-12);
    EXPECT_NEAR(r.f1_macro, (12.0 / 17.0 + 18.0 / 23.0) / 2, 1e-12);
    EXPECT_NEAR(r.f1_weighted, (8 * 12.0 / 17.0 + 12 * 18.0 / 23.0) / 20, 1e-12);
    EXPECT_NEAR(r.f1_micro, 0.75, 1e-12);
    EXPECT_NEAR(r.parse_failure_rate, 0.05, 1e-12);

    const MetricsReport ex = evaluate_classification(preds, gold, FailurePolicy::exclude);
    EXPECT_EQ(ex.n_evaluated, 19u);
    EXPECT_EQ(ex.confusion.fn, 1u);
}

TEST(Metrics, TrivialCases) {
    Subsample gold{"g", {{"a", "t", Label::hate, "s"}, {"b", "t", Label::non_hate, "s"}}, 0, ""};
    std::vector<PredictionRecord> perfect{{"a", "m", Label::hate}, {"b", "m", Label::non_hate}};
    const auto r = evaluate_classification(perfect, gold);
    EXPECT_DOUBLE_EQ(r.f1_macro, 1.0);
    EXPECT_DOUBLE_EQ(r.f1_weighted, 1.0);
    // All non-hate predictions: hate precision has a zero denominator.
    std::vector<PredictionRecord> none{{"a", "m", Label::non_hate}, {"b", "m", Label::non_hate}};
    const auto z = evaluate_classification(none, gold);
    EXPECT_DOUBLE_EQ(z.hate.precision, 0.0);
    EXPECT_DOUBLE_EQ(z.hate.f1, 0.0);
    EXPECT_NEAR(z.non_hate.f1, 2.0 / 3.0, 1e-12);
}

TEST(Metrics, IdMismatchesAreErrors) {
    Subsample gold{"g", {{"a", "t", Label::hate, "s"}, {"b", "t", Label::non_hate, "s"}}, 0, ""};
    std::vector<PredictionRecord> missing{{"a", "m", Label::hate}};
    EXPECT_THROW(evaluate_classification(missing, gold), ConsistencyError);
    std::vector<PredictionRecord> dup{{"a", "m", Label::hate}, {"a", "m", Label::hate}};
    EXPECT_THROW(evaluate_classification(dup, gold), ConsistencyError);
    std::vector<PredictionRecord> unknown{{"a", "m", Label::hate}, {"b", "m", Label::hate}, {"c", "m", Label::hate}};
    EXPECT_THROW(evaluate_classification(unknown, gold), ConsistencyError);
}

TEST(Metrics, ThresholdAndTernaryMapping) {
    EXPECT_EQ(threshold_to_label(0.5), Label::hate);
    EXPECT_EQ(threshold_to_label(0.4999), Label::non_hate);
    EXPECT_EQ(threshold_to_label(0.7, 0.8), Label::non_hate);
    EXPECT_THROW(threshold_to_label(1.5), ArgumentError);
    EXPECT_THROW(threshold_to_label(-0.1), ArgumentError);
    EXPECT_EQ(map_ternary_to_binary("hate"), Label::hate);
    EXPECT_EQ(map_ternary_to_binary("offensive"), Label::non_hate);
    EXPECT_EQ(map_ternary_to_binary("normal"), Label::non_hate);
    EXPECT_THROW(parse_ternary("spicy"), Error);
}

TEST(Metrics, PredictionFromFailedInference) {
    InferenceRecord rec;
    rec.post_id = "x";
    rec.model_id = "m";
    rec.status = RecordStatus::parse_failure;
    const auto p = prediction_from_inference(rec);
    EXPECT_FALSE(p.parse_ok);
    EXPECT_EQ(p.predicted_label, Label::non_hate);
    EXPECT_FALSE(p.rationale.has_value());
}

TEST(ToxicityClient, ScoresRetriesAndSpacesRequests) {
    httplib::Server srv;
    int calls = 0;
    srv.Post("/v1alpha1/comments:analyze", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        if (calls == 1) {
            res.status = 429;
            return;
        }
        EXPECT_EQ(req.get_param_value("key"), "k");
        const Json body = Json::parse(req.body);
        const double v = body["comment"]["text"] == "they are vermin" ? 0.91 : 0.05;
        res.set_content(Json{{"attributeScores", {{"TOXICITY", {{"summaryScore", {{"value", v}}}}}}}}.dump(),
                        "application/json");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    ToxicityClientOptions o;
    o.base_url = "http://127.0.0.1:" + std::to_string(port);
    o.api_key = "k";
    o.min_interval_s = 1.0;
    std::vector<double> sleeps;
    double now = 100.0;
    ToxicityClient client(o, [&](double s) { sleeps.push_back(s); now += s; }, [&] { return now; });
    EXPECT_NEAR(client.score("they are vermin"), 0.91, 1e-12);
    EXPECT_EQ(threshold_to_label(client.score("hello")), Label::non_hate);
    EXPECT_EQ(client.requests_sent(), 3u);
    // backoff after the 429, then the rate-limit gap before the next request
    ASSERT_GE(sleeps.size(), 1u);
    EXPECT_DOUBLE_EQ(sleeps[0], 1.0);
    srv.stop();
    t.join();
}
