#include "distil/annotation_service.hpp"

#include <sqlite3.h>

#include <fmt/format.h>

namespace distil {

std::string_view to_string(ServiceErrorCode c) {
    switch (c) {
        case ServiceErrorCode::validation: return "validation";
        case ServiceErrorCode::conflict: return "conflict";
        case ServiceErrorCode::auth: return "auth";
        case ServiceErrorCode::not_found: return "not_found";
    }
    return "validation";
}

BatchAccess batch_access_from_json(const Json& j) {
    BatchAccess a;
    a.batch_id = j.at("batch_id").get<std::string>();
    a.admin_token = j.at("admin_token").get<std::string>();
    for (const auto& x : j.at("annotators"))
        a.annotators.push_back({x.at("id").get<std::string>(), x.at("token").get<std::string>()});
    if (a.batch_id.empty() || a.admin_token.empty()) throw ConfigError("batch access needs batch_id and admin_token");
    if (a.annotators.empty()) throw ConfigError("batch access lists no annotators");
    for (const auto& c : a.annotators)
        if (c.annotator_id.empty() || c.token.empty()) throw ConfigError("annotator entries need id and token");
    return a;
}

BatchAccess load_batch_access(const std::filesystem::path& path) {
    try {
        return batch_access_from_json(Json::parse(read_file(path)));
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

namespace {

class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &s_, nullptr) != SQLITE_OK)
            throw IoError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
    ~Stmt() { sqlite3_finalize(s_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, const std::string& v) {
        sqlite3_bind_text(s_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind(int i, std::int64_t v) {
        sqlite3_bind_int64(s_, i, v);
        return *this;
    }
    // true while a row is available
    bool step() {
        int rc = sqlite3_step(s_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw IoError(std::string("sqlite step: ") + sqlite3_errmsg(db_));
    }
    // Like step() for writes; reports constraint violations instead of throwing.
    int exec_write() {
        int rc = sqlite3_step(s_);
        if (rc == SQLITE_DONE || rc == SQLITE_CONSTRAINT) return rc;
        throw IoError(std::string("sqlite write: ") + sqlite3_errmsg(db_));
    }
    std::string text(int col) const {
        auto p = reinterpret_cast<const char*>(sqlite3_column_text(s_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(s_, col))) : std::string();
    }
    std::int64_t integer(int col) const { return sqlite3_column_int64(s_, col); }

private:
    sqlite3* db_;
    sqlite3_stmt* s_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        throw IoError("sqlite: " + msg);
    }
}

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS batches (
  batch_id TEXT PRIMARY KEY,
  admin_token TEXT NOT NULL,
  fingerprint TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS annotators (
  batch_id TEXT NOT NULL,
  annotator_id TEXT NOT NULL,
  token TEXT NOT NULL,
  PRIMARY KEY (batch_id, annotator_id)
);
CREATE TABLE IF NOT EXISTS tasks (
  batch_id TEXT NOT NULL,
  task_id TEXT NOT NULL,
  display_order INTEGER NOT NULL,
  post_text TEXT NOT NULL,
  predicted_label TEXT NOT NULL,
  fragments TEXT NOT NULL,
  n_fragments INTEGER NOT NULL,
  PRIMARY KEY (batch_id, task_id),
  UNIQUE (batch_id, display_order)
);
CREATE TABLE IF NOT EXISTS annotations (
  batch_id TEXT NOT NULL,
  task_id TEXT NOT NULL,
  annotator_id TEXT NOT NULL,
  complete INTEGER NOT NULL,
  correct TEXT NOT NULL,
  PRIMARY KEY (batch_id, task_id, annotator_id)
);
)sql";

std::string batch_fingerprint(const BatchAccess& access, std::span<const AnnotationTask> tasks) {
    Json j = Json::array();
    for (const auto& t : tasks) j.push_back(annotator_view(t));
    Json a = Json::array();
    for (const auto& c : access.annotators) a.push_back(Json::array({c.annotator_id, c.token}));
    return sha256_hex(Json{{"tasks", j}, {"annotators", a}, {"admin", access.admin_token}}.dump());
}

}  // namespace

struct AnnotationStore::ReadConn {
    sqlite3* db = nullptr;
    ReadConn() = default;
    ReadConn(ReadConn&& o) noexcept : db(o.db) { o.db = nullptr; }
    ~ReadConn() { sqlite3_close(db); }
};

AnnotationStore::AnnotationStore(std::filesystem::path db_path) : path_(std::move(db_path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    if (sqlite3_open_v2(path_.c_str(), &writer_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        std::string msg = writer_ ? sqlite3_errmsg(writer_) : "out of memory";
        sqlite3_close(writer_);
        throw IoError("cannot open annotation store " + path_.string() + ": " + msg);
    }
    sqlite3_busy_timeout(writer_, 5000);
    exec(writer_, "PRAGMA journal_mode=WAL;");
    exec(writer_, "PRAGMA synchronous=FULL;");
    exec(writer_, kSchema);
}

AnnotationStore::~AnnotationStore() { sqlite3_close(writer_); }

AnnotationStore::ReadConn AnnotationStore::open_reader() const {
    ReadConn c;
    if (sqlite3_open_v2(path_.c_str(), &c.db, SQLITE_OPEN_READONLY | SQLITE_OPEN_NOMUTEX, nullptr) != SQLITE_OK)
        throw IoError("cannot open annotation store for reading: " + path_.string());
    sqlite3_busy_timeout(c.db, 5000);
    return c;
}

void AnnotationStore::create_batch(const BatchAccess& access, std::span<const AnnotationTask> tasks) {
    const std::string fp = batch_fingerprint(access, tasks);
    std::lock_guard lock(write_mu_);
    {
        Stmt q(writer_, "SELECT fingerprint FROM batches WHERE batch_id = ?");
        q.bind(1, access.batch_id);
        if (q.step()) {
            if (q.text(0) == fp) return;
            throw ServiceError(ServiceErrorCode::conflict,
                               "batch " + access.batch_id + " already exists with different content");
        }
    }
    exec(writer_, "BEGIN IMMEDIATE");
    try {
        Stmt b(writer_, "INSERT INTO batches VALUES (?, ?, ?)");
        b.bind(1, access.batch_id).bind(2, access.admin_token).bind(3, fp).exec_write();
        for (const auto& c : access.annotators) {
            Stmt a(writer_, "INSERT INTO annotators VALUES (?, ?, ?)");
            if (a.bind(1, access.batch_id).bind(2, c.annotator_id).bind(3, c.token).exec_write() != SQLITE_DONE)
                throw ConfigError("duplicate annotator id " + c.annotator_id);
        }
        for (const auto& t : tasks) {
            Json frags = Json::array();
            for (const auto& e : t.explanations) frags.push_back(Json::array({e.fragment, e.explanation}));
            Stmt s(writer_, "INSERT INTO tasks VALUES (?, ?, ?, ?, ?, ?, ?)");
            s.bind(1, access.batch_id)
                .bind(2, t.task_id)
                .bind(3, static_cast<std::int64_t>(t.display_order))
                .bind(4, t.post_text)
                .bind(5, std::string(to_string(t.predicted_label)))
                .bind(6, frags.dump(-1, ' ', false, Json::error_handler_t::replace))
                .bind(7, static_cast<std::int64_t>(t.explanations.size()));
            if (s.exec_write() != SQLITE_DONE)
                throw ConfigError("duplicate task id or display order: " + t.task_id);
        }
        exec(writer_, "COMMIT");
    } catch (...) {
        sqlite3_exec(writer_, "ROLLBACK", nullptr, nullptr, nullptr);
        throw;
    }
}

bool AnnotationStore::has_batch(const std::string& batch_id) const {
    auto c = open_reader();
    Stmt q(c.db, "SELECT 1 FROM batches WHERE batch_id = ?");
    q.bind(1, batch_id);
    return q.step();
}

std::string AnnotationStore::authenticate(const std::string& batch_id, const std::string& token) const {
    if (!has_batch(batch_id)) throw ServiceError(ServiceErrorCode::not_found, "unknown batch " + batch_id);
    auto c = open_reader();
    Stmt q(c.db, "SELECT annotator_id FROM annotators WHERE batch_id = ? AND token = ?");
    q.bind(1, batch_id).bind(2, token);
    if (token.empty() || !q.step()) throw ServiceError(ServiceErrorCode::auth, "invalid annotator token");
    return q.text(0);
}

void AnnotationStore::authenticate_admin(const std::string& batch_id, const std::string& token) const {
    auto c = open_reader();
    Stmt q(c.db, "SELECT admin_token FROM batches WHERE batch_id = ?");
    q.bind(1, batch_id);
    if (!q.step()) throw ServiceError(ServiceErrorCode::not_found, "unknown batch " + batch_id);
    if (token.empty() || q.text(0) != token) throw ServiceError(ServiceErrorCode::auth, "invalid admin token");
}

AnnotatorSession AnnotationStore::session(const std::string& batch_id, const std::string& annotator_id) const {
    auto c = open_reader();
    {
        Stmt q(c.db, "SELECT 1 FROM annotators WHERE batch_id = ? AND annotator_id = ?");
        q.bind(1, batch_id).bind(2, annotator_id);
        if (!q.step()) throw ServiceError(ServiceErrorCode::auth, "unknown annotator " + annotator_id);
    }
    AnnotatorSession s{annotator_id, batch_id};
    // One snapshot for all three counts.
    exec(c.db, "BEGIN");
    Stmt total(c.db, "SELECT COUNT(*) FROM tasks WHERE batch_id = ?");
    total.bind(1, batch_id);
    total.step();
    s.batch_size = static_cast<std::size_t>(total.integer(0));
    Stmt done(c.db, "SELECT COUNT(*) FROM annotations WHERE batch_id = ? AND annotator_id = ?");
    done.bind(1, batch_id).bind(2, annotator_id);
    done.step();
    s.completed_count = static_cast<std::size_t>(done.integer(0));
    Stmt cur(c.db,
             "SELECT MIN(display_order) FROM tasks t WHERE batch_id = ?1 AND NOT EXISTS ("
             " SELECT 1 FROM annotations a WHERE a.batch_id = t.batch_id AND a.task_id = t.task_id"
             " AND a.annotator_id = ?2)");
    cur.bind(1, batch_id).bind(2, annotator_id);
    cur.step();
    // MIN over no rows is NULL: every task is done.
    s.cursor = cur.text(0).empty() ? s.batch_size : static_cast<std::size_t>(cur.integer(0));
    exec(c.db, "COMMIT");
    return s;
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& batch_id,
                                                         const std::string& annotator_id) const {
    auto c = open_reader();
    {
        Stmt q(c.db, "SELECT 1 FROM annotators WHERE batch_id = ? AND annotator_id = ?");
        q.bind(1, batch_id).bind(2, annotator_id);
        if (!q.step()) throw ServiceError(ServiceErrorCode::auth, "unknown annotator " + annotator_id);
    }
    Stmt q(c.db,
           "SELECT task_id, display_order, post_text, predicted_label, fragments FROM tasks t"
           " WHERE batch_id = ?1 AND NOT EXISTS (SELECT 1 FROM annotations a WHERE a.batch_id = t.batch_id"
           " AND a.task_id = t.task_id AND a.annotator_id = ?2) ORDER BY display_order LIMIT 1");
    q.bind(1, batch_id).bind(2, annotator_id);
    if (!q.step()) return std::nullopt;
    AnnotationTask t;
    t.task_id = q.text(0);
    t.display_order = static_cast<std::size_t>(q.integer(1));
    t.post_text = q.text(2);
    t.predicted_label = parse_label(q.text(3)).value_or(Label::non_hate);
    for (const auto& f : Json::parse(q.text(4)))
        t.explanations.push_back({f.at(0).get<std::string>(), f.at(1).get<std::string>()});
    return t;
}

void AnnotationStore::submit(const std::string& batch_id, const AnnotationRecord& record) {
    auto c = open_reader();
    {
        Stmt q(c.db, "SELECT 1 FROM annotators WHERE batch_id = ? AND annotator_id = ?");
        q.bind(1, batch_id).bind(2, record.annotator_id);
        if (!q.step()) throw ServiceError(ServiceErrorCode::auth, "unknown annotator " + record.annotator_id);
    }
    Stmt t(c.db, "SELECT n_fragments FROM tasks WHERE batch_id = ? AND task_id = ?");
    t.bind(1, batch_id).bind(2, record.task_id);
    if (!t.step()) throw ServiceError(ServiceErrorCode::not_found, "unknown task " + record.task_id);
    const auto n = static_cast<std::size_t>(t.integer(0));
    if (record.correct.size() != n)
        throw ServiceError(ServiceErrorCode::validation,
                           fmt::format("task {} has {} fragments, got {} correctness flags", record.task_id, n,
                                       record.correct.size()));

    Json correct = Json::array();
    for (bool b : record.correct) correct.push_back(b);
    std::lock_guard lock(write_mu_);
    Stmt ins(writer_, "INSERT INTO annotations VALUES (?, ?, ?, ?, ?)");
    ins.bind(1, batch_id)
        .bind(2, record.task_id)
        .bind(3, record.annotator_id)
        .bind(4, std::int64_t{record.complete ? 1 : 0})
        .bind(5, correct.dump());
    // Autocommit with synchronous=FULL: the row is on disk when this returns.
    if (ins.exec_write() != SQLITE_DONE)
        throw ServiceError(ServiceErrorCode::conflict,
                           "task " + record.task_id + " already annotated by " + record.annotator_id);
}

std::vector<AnnotationRecord> AnnotationStore::export_annotations(const std::string& batch_id) const {
    if (!has_batch(batch_id)) throw ServiceError(ServiceErrorCode::not_found, "unknown batch " + batch_id);
    auto c = open_reader();
    Stmt q(c.db,
           "SELECT task_id, annotator_id, complete, correct FROM annotations WHERE batch_id = ?"
           " ORDER BY task_id, annotator_id");
    q.bind(1, batch_id);
    std::vector<AnnotationRecord> out;
    while (q.step()) {
        AnnotationRecord r;
        r.task_id = q.text(0);
        r.annotator_id = q.text(1);
        r.complete = q.integer(2) != 0;
        for (const auto& b : Json::parse(q.text(3))) r.correct.push_back(b.get<bool>());
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::string> AnnotationStore::schema_columns() const {
    auto c = open_reader();
    std::vector<std::string> tables;
    {
        Stmt q(c.db, "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name");
        while (q.step()) tables.push_back(q.text(0));
    }
    std::vector<std::string> cols;
    for (const auto& t : tables) {
        Stmt q(c.db, "SELECT name FROM pragma_table_info(?)");
        q.bind(1, t);
        while (q.step()) cols.push_back(t + "." + q.text(0));
    }
    return cols;
}

}  // namespace distil
