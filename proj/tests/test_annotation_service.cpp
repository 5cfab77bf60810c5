#include <gtest/gtest.h>

#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <thread>

#include "distil/annotation_service.hpp"
#include "fixtures.hpp"

using namespace distil;

namespace {

std::vector<AnnotationTask> make_tasks(int n) {
    std::vector<AnnotationTask> tasks;
    for (int i = 0; i < n; ++i) {
        AnnotationTask t;
        t.task_id = "t" + std::to_string(1000 + i);
        t.post_id = "p" + std::to_string(i);
        t.post_text = "post " + std::to_string(i);
        t.predicted_label = i % 2 ? Label::hate : Label::non_hate;
        t.explanations = {{"post", "first"}, {std::to_string(i), "second"}};
        t.hidden_model_id = i % 2 ? "secret-teacher-model" : "secret-student-model";
        t.display_order = static_cast<std::size_t>(i);
        tasks.push_back(t);
    }
    return tasks;
}

BatchAccess access() {
    return {"b1", "admin", {{"ann1", "tok1"}, {"ann2", "tok2"}, {"ann3", "tok3"}}};
}

struct LiveServer {
    AnnotationStore store;
    AnnotationServer server;
    int port;
    explicit LiveServer(const std::filesystem::path& db) : store(db), server(store), port(0) {
        store.create_batch(access(), make_tasks(3));
        port = server.start();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

httplib::Headers bearer(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

std::string submit_body(const std::string& task, bool complete, std::vector<bool> correct) {
    return Json{{"task_id", task}, {"complete", complete}, {"correct", correct}}.dump();
}

}  // namespace

TEST(AnnotationStore, CursorSubmitAndExport) {
    const auto dir = fixtures::temp_dir("store");
    AnnotationStore store(dir / "a.db");
    store.create_batch(access(), make_tasks(3));
    EXPECT_NO_THROW(store.create_batch(access(), make_tasks(3)));  // idempotent
    EXPECT_THROW(store.create_batch(access(), make_tasks(4)), ServiceError);

    auto t = store.next_task("b1", "ann1");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->display_order, 0u);
    EXPECT_TRUE(t->hidden_model_id.empty());
    EXPECT_EQ(store.next_task("b1", "ann1")->task_id, t->task_id);  // stable without submission

    store.submit("b1", {t->task_id, "ann1", true, {true, false}});
    EXPECT_EQ(store.next_task("b1", "ann1")->display_order, 1u);
    EXPECT_EQ(store.next_task("b1", "ann2")->display_order, 0u);
    auto s = store.session("b1", "ann1");
    EXPECT_EQ(s.cursor, 1u);
    EXPECT_EQ(s.completed_count, 1u);

    try {
        store.submit("b1", {t->task_id, "ann1", true, {true, true}});
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.code(), ServiceErrorCode::conflict);
    }
    try {
        store.submit("b1", {"t1001", "ann1", true, {true, true, true}});
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.code(), ServiceErrorCode::validation);
    }
    try {
        store.next_task("b1", "mallory");
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.code(), ServiceErrorCode::auth);
    }
    for (const auto& id : {"t1001", "t1002"}) store.submit("b1", {id, "ann1", false, {true, true}});
    EXPECT_FALSE(store.next_task("b1", "ann1").has_value());
    EXPECT_EQ(store.session("b1", "ann1").cursor, 3u);

    const auto exported = store.export_annotations("b1");
    ASSERT_EQ(exported.size(), 3u);
    EXPECT_EQ(exported[0], (AnnotationRecord{"t1000", "ann1", true, {true, false}}));
    EXPECT_THROW(store.export_annotations("nope"), ServiceError);
}

TEST(AnnotationStore, SchemaHoldsNoModelIdentity) {
    const auto dir = fixtures::temp_dir("schema");
    AnnotationStore store(dir / "a.db");
    store.create_batch(access(), make_tasks(3));
    for (const auto& col : store.schema_columns()) EXPECT_EQ(col.find("model"), std::string::npos) << col;
    const std::string raw = read_file(dir / "a.db") + (std::filesystem::exists(dir / "a.db-wal") ? read_file(dir / "a.db-wal") : "");
    EXPECT_EQ(raw.find("secret-"), std::string::npos);
}

TEST(AnnotationServer, HttpFlow) {
    const auto dir = fixtures::temp_dir("http");
    LiveServer live(dir / "a.db");
    auto cli = live.client();

    auto health = cli.Get("/api/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);

    auto noauth = cli.Get("/api/batches/b1/next?annotator=ann1");
    ASSERT_TRUE(noauth);
    EXPECT_EQ(noauth->status, 401);
    EXPECT_EQ(Json::parse(noauth->body)["error"]["code"], "auth");

    auto wrong = cli.Get("/api/batches/b1/next?annotator=ann2", bearer("tok1"));
    EXPECT_EQ(wrong->status, 401);
    auto missing = cli.Get("/api/batches/zzz/next", bearer("tok1"));
    EXPECT_EQ(missing->status, 404);
    EXPECT_EQ(Json::parse(missing->body)["error"]["code"], "not_found");

    // Every annotator completes the batch.
    for (const std::string who : {"1", "2", "3"}) {
        for (int i = 0; i < 3; ++i) {
            auto next = cli.Get("/api/batches/b1/next?annotator=ann" + who, bearer("tok" + who));
            ASSERT_EQ(next->status, 200);
            EXPECT_EQ(next->body.find("secret-"), std::string::npos);
            EXPECT_EQ(next->body.find("model"), std::string::npos);
            const Json j = Json::parse(next->body);
            EXPECT_FALSE(j["done"].get<bool>());
            EXPECT_EQ(j["task"]["display_order"], i);
            EXPECT_EQ(j["progress"]["done"], i);
            const std::string task = j["task"]["task_id"];
            auto bad = cli.Post("/api/batches/b1/annotations", bearer("tok" + who), submit_body(task, true, {true}),
                                "application/json");
            EXPECT_EQ(bad->status, 400);
            EXPECT_EQ(Json::parse(bad->body)["error"]["code"], "validation");
            auto ok = cli.Post("/api/batches/b1/annotations", bearer("tok" + who),
                               submit_body(task, i != 1, {true, who != "2"}), "application/json");
            EXPECT_EQ(ok->status, 201);
            auto dup = cli.Post("/api/batches/b1/annotations", bearer("tok" + who),
                                submit_body(task, true, {true, true}), "application/json");
            EXPECT_EQ(dup->status, 409);
            EXPECT_EQ(Json::parse(dup->body)["error"]["code"], "conflict");
        }
        auto done = cli.Get("/api/batches/b1/next", bearer("tok" + who));
        EXPECT_TRUE(Json::parse(done->body)["done"].get<bool>());
    }
    auto garbage = cli.Post("/api/batches/b1/annotations", bearer("tok1"), "{not json", "application/json");
    EXPECT_EQ(garbage->status, 400);

    EXPECT_EQ(cli.Get("/api/batches/b1/export", bearer("tok1"))->status, 401);
    auto exp = cli.Get("/api/batches/b1/export", bearer("admin"));
    ASSERT_EQ(exp->status, 200);
    write_file(dir / "export.jsonl", exp->body);
    const auto records = load_annotation_records(dir / "export.jsonl");
    ASSERT_EQ(records.size(), 9u);
    EXPECT_EQ(records, live.store.export_annotations("b1"));
    // The export feeds agreement exactly like the in-memory records.
    const auto direct = compute_unanimous_agreement(live.store.export_annotations("b1"));
    const auto via_http = compute_unanimous_agreement(records);
    EXPECT_EQ(direct.complete_pct, via_http.complete_pct);
    EXPECT_EQ(direct.correct_pct, via_http.correct_pct);
    EXPECT_EQ(via_http.complete_pct, 100.0);
    EXPECT_NEAR(via_http.correct_pct, 50.0, 1e-12);
    live.server.stop();
}

TEST(AnnotationServer, ConcurrentDoubleFetchReturnsSameTask) {
    const auto dir = fixtures::temp_dir("concurrent");
    LiveServer live(dir / "a.db");
    std::string a, b;
    std::thread t1([&] { a = live.client().Get("/api/batches/b1/next", bearer("tok1"))->body; });
    std::thread t2([&] { b = live.client().Get("/api/batches/b1/next", bearer("tok1"))->body; });
    t1.join();
    t2.join();
    EXPECT_EQ(Json::parse(a)["task"], Json::parse(b)["task"]);

    // Racing submissions of the same task: exactly one wins.
    std::vector<int> statuses(8);
    std::vector<std::thread> ts;
    for (int i = 0; i < 8; ++i)
        ts.emplace_back([&, i] {
            statuses[i] = live.client()
                              .Post("/api/batches/b1/annotations", bearer("tok2"), submit_body("t1000", true, {true, true}),
                                    "application/json")
                              ->status;
        });
    for (auto& t : ts) t.join();
    EXPECT_EQ(std::count(statuses.begin(), statuses.end(), 201), 1);
    EXPECT_EQ(std::count(statuses.begin(), statuses.end(), 409), 7);
    live.server.stop();
}

TEST(AnnotationServer, AcknowledgedWritesSurviveKill) {
    const auto dir = fixtures::temp_dir("crash");
    const auto db = dir / "a.db";
    {
        AnnotationStore store(db);
        store.create_batch(access(), make_tasks(3));
    }
    int fds[2];
    ASSERT_EQ(pipe(fds), 0);
    const pid_t child = fork();
    ASSERT_GE(child, 0);
    if (child == 0) {
        close(fds[0]);
        AnnotationStore store(db);
        AnnotationServer server(store);
        const int port = server.start();
        [[maybe_unused]] auto n = write(fds[1], &port, sizeof port);
        for (;;) pause();
    }
    close(fds[1]);
    int port = 0;
    ASSERT_EQ(read(fds[0], &port, sizeof port), static_cast<ssize_t>(sizeof port));
    httplib::Client cli("127.0.0.1", port);
    auto res = cli.Post("/api/batches/b1/annotations", bearer("tok1"), submit_body("t1001", true, {false, true}),
                        "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 201);
    kill(child, SIGKILL);
    int status = 0;
    waitpid(child, &status, 0);
    ASSERT_TRUE(WIFSIGNALED(status));

    AnnotationStore reopened(db);
    const auto records = reopened.export_annotations("b1");
    ASSERT_EQ(records.size(), 1u);
    EXPECT_EQ(records[0], (AnnotationRecord{"t1001", "ann1", true, {false, true}}));
    AnnotationServer again(reopened);
    const int port2 = again.start();
    httplib::Client cli2("127.0.0.1", port2);
    EXPECT_EQ(cli2.Post("/api/batches/b1/annotations", bearer("tok1"), submit_body("t1001", true, {false, true}),
                        "application/json")
                  ->status,
              409);
    again.stop();
}
