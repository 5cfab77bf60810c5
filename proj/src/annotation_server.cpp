#include <httplib.h>

#include "distil/annotation_service.hpp"

namespace distil {

namespace {

int http_status(ServiceErrorCode c) {
    switch (c) {
        case ServiceErrorCode::validation: return 400;
        case ServiceErrorCode::auth: return 401;
        case ServiceErrorCode::not_found: return 404;
        case ServiceErrorCode::conflict: return 409;
    }
    return 400;
}

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, Json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, ServiceErrorCode code, const std::string& message) {
    send_json(res, http_status(code), Json{{"error", {{"code", std::string(to_string(code))}, {"message", message}}}});
}

std::string bearer_token(const httplib::Request& req) {
    const std::string h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.size() > prefix.size() && h.compare(0, prefix.size(), prefix) == 0) return h.substr(prefix.size());
    return {};
}

Json progress(const AnnotatorSession& s) { return Json{{"done", s.completed_count}, {"total", s.batch_size}}; }

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const ServiceError& e) {
        send_error(res, e.code(), e.what());
    } catch (const Json::exception& e) {
        send_error(res, ServiceErrorCode::validation, e.what());
    } catch (const std::exception& e) {
        send_json(res, 500, Json{{"error", {{"code", "internal"}, {"message", e.what()}}}});
    }
}

}  // namespace

struct AnnotationServer::Impl {
    httplib::Server server;
};

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
    auto& srv = impl_->server;

    srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, Json{{"status", "ok"}});
    });

    srv.Get("/api/batches/:id/next", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string batch = req.path_params.at("id");
            const std::string who = store.authenticate(batch, bearer_token(req));
            if (req.has_param("annotator") && req.get_param_value("annotator") != who)
                throw ServiceError(ServiceErrorCode::auth, "token does not belong to the requested annotator");
            const auto task = store.next_task(batch, who);
            const auto session = store.session(batch, who);
            if (!task) {
                send_json(res, 200, Json{{"done", true}, {"progress", progress(session)}});
                return;
            }
            send_json(res, 200, Json{{"done", false}, {"task", annotator_view(*task)}, {"progress", progress(session)}});
        });
    });

    srv.Post("/api/batches/:id/annotations", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string batch = req.path_params.at("id");
            const std::string who = store.authenticate(batch, bearer_token(req));
            Json body;
            try {
                body = Json::parse(req.body);
            } catch (const Json::exception&) {
                throw ServiceError(ServiceErrorCode::validation, "body is not valid JSON");
            }
            if (!body.is_object() || !body.contains("task_id") || !body["task_id"].is_string() ||
                !body.contains("complete") || !body["complete"].is_boolean() || !body.contains("correct") ||
                !body["correct"].is_array())
                throw ServiceError(ServiceErrorCode::validation,
                                   "body needs task_id (string), complete (bool), correct (bool array)");
            AnnotationRecord r;
            r.task_id = body["task_id"].get<std::string>();
            r.annotator_id = who;
            r.complete = body["complete"].get<bool>();
            for (const auto& v : body["correct"]) {
                if (!v.is_boolean()) throw ServiceError(ServiceErrorCode::validation, "correct must hold booleans");
                r.correct.push_back(v.get<bool>());
            }
            store.submit(batch, r);
            send_json(res, 201, Json{{"status", "stored"}, {"task_id", r.task_id},
                                     {"progress", progress(store.session(batch, who))}});
        });
    });

    srv.Get("/api/batches/:id/export", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string batch = req.path_params.at("id");
            store.authenticate_admin(batch, bearer_token(req));
            std::string body;
            for (const auto& r : store.export_annotations(batch)) body += to_json(r).dump() + "\n";
            res.status = 200;
            res.set_content(body, "application/x-ndjson");
        });
    });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start() {
    auto& srv = impl_->server;
    if (options_.port == 0) {
        port_ = srv.bind_to_any_port(options_.host);
    } else {
        port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ <= 0) throw IoError("cannot bind annotation server on " + options_.host);
    thread_ = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return port_;
}

void AnnotationServer::run() {
    auto& srv = impl_->server;
    if (options_.port == 0) {
        port_ = srv.bind_to_any_port(options_.host);
    } else {
        port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ <= 0) throw IoError("cannot bind annotation server on " + options_.host);
    srv.listen_after_bind();
}

void AnnotationServer::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace distil
