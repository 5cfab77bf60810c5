#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "distil/humaneval.hpp"

struct sqlite3;

namespace distil {

enum class ServiceErrorCode { validation, conflict, auth, not_found };
std::string_view to_string(ServiceErrorCode c);

class ServiceError : public Error {
public:
    ServiceError(ServiceErrorCode code, const std::string& what) : Error(what), code_(code) {}
    ServiceErrorCode code() const { return code_; }

private:
    ServiceErrorCode code_;
};

struct AnnotatorCredential {
    std::string annotator_id;
    std::string token;
};

// Provisioning for one batch: who may annotate and who may export.
struct BatchAccess {
    std::string batch_id;
    std::string admin_token;
    std::vector<AnnotatorCredential> annotators;
};
BatchAccess batch_access_from_json(const Json& j);
BatchAccess load_batch_access(const std::filesystem::path& path);

struct AnnotatorSession {
    std::string annotator_id;
    std::string batch_id;
    std::size_t cursor = 0;  // display_order of the next undone task
    std::size_t completed_count = 0;
    std::size_t batch_size = 0;
};

// Single-file SQLite store. Model identity is never written here; the
// unblinding key stays with the batch creator.
class AnnotationStore {
public:
    explicit AnnotationStore(std::filesystem::path db_path);
    ~AnnotationStore();
    AnnotationStore(const AnnotationStore&) = delete;
    AnnotationStore& operator=(const AnnotationStore&) = delete;

    // Idempotent for an identical batch; a different batch under the same id
    // is a conflict.
    void create_batch(const BatchAccess& access, std::span<const AnnotationTask> tasks);
    bool has_batch(const std::string& batch_id) const;

    // Resolves a bearer token to an annotator of the batch, else auth error.
    std::string authenticate(const std::string& batch_id, const std::string& token) const;
    void authenticate_admin(const std::string& batch_id, const std::string& token) const;

    AnnotatorSession session(const std::string& batch_id, const std::string& annotator_id) const;
    // nullopt is the done-marker.
    std::optional<AnnotationTask> next_task(const std::string& batch_id, const std::string& annotator_id) const;
    // Returns only once the record is committed to disk.
    void submit(const std::string& batch_id, const AnnotationRecord& record);
    std::vector<AnnotationRecord> export_annotations(const std::string& batch_id) const;

    // Column names of every table, for blindness checks.
    std::vector<std::string> schema_columns() const;

    const std::filesystem::path& path() const { return path_; }

private:
    struct ReadConn;
    ReadConn open_reader() const;

    std::filesystem::path path_;
    sqlite3* writer_ = nullptr;
    std::mutex write_mu_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
};

// HTTP front end over an AnnotationStore.
class AnnotationServer {
public:
    AnnotationServer(AnnotationStore& store, ServerOptions options = {});
    ~AnnotationServer();

    // Binds and serves on a background thread; returns the bound port.
    int start();
    // Binds and serves on the calling thread until stop().
    void run();
    void stop();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    ServerOptions options_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace distil
