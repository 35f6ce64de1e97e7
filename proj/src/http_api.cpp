#include "irsis/http_api.hpp"

#include <httplib.h>

#include <thread>

#include "irsis/serialize.hpp"

namespace irsis {

using json_util::json;

struct ApiServer::Impl {
    SessionService* service = nullptr;
    httplib::Server server;
    std::thread thread;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename Fn>
void handle(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ServiceError& e) {
        json body{{"error", e.what()}};
        if (!e.field().empty()) body["field"] = e.field();
        if (!e.session_id().empty()) body["session_id"] = e.session_id();
        send_json(res, e.http_status(), body);
    } catch (const std::exception& e) {
        send_json(res, 500, json{{"error", e.what()}});
    }
}

json parse_request(const httplib::Request& req, bool allow_empty) {
    if (allow_empty && req.body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ServiceError(ServiceError::Kind::Invalid, "request body must be a JSON object", "body");
    }
    return j;
}

}  // namespace

ApiServer::ApiServer(SessionService& service) : impl_(std::make_unique<Impl>()) {
    Impl* st = impl_.get();
    st->service = &service;
    auto& svc = service;

    st->server.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200,
                  json{{"status", "ok"}, {"segmenter_kind", svc.segmenter_kind()}, {"detector_kind", svc.detector_kind()}});
    });

    st->server.Post("/v1/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] {
            const json j = parse_request(req, false);
            if (!j.contains("image_png_b64") || !j.at("image_png_b64").is_string()) {
                throw ServiceError(ServiceError::Kind::Invalid, "image_png_b64 is required", "image_png_b64");
            }
            Query q;
            if (j.contains("query") && j.at("query").is_string()) {
                q.text = j.at("query").get<std::string>();
            } else if (j.contains("query") && j.at("query").is_object() && j.at("query").contains("text") &&
                       j.at("query").at("text").is_string()) {
                q.text = j.at("query").at("text").get<std::string>();
                if (j.at("query").contains("level") && j.at("query").at("level").is_number_integer()) {
                    q.level = j.at("query").at("level").get<int>();
                }
            }
            if (q.text.empty()) throw ServiceError(ServiceError::Kind::Invalid, "query is required", "query");
            if (j.contains("level")) {
                if (!j.at("level").is_number_integer()) {
                    throw ServiceError(ServiceError::Kind::Invalid, "level must be an integer", "level");
                }
                q.level = j.at("level").get<int>();
            }
            std::optional<AgentConfig> cfg;
            if (j.contains("config") && !j.at("config").is_null()) {
                try {
                    cfg = json_util::config_from_json(j.at("config"), svc.defaults());
                } catch (const Error& e) {
                    throw ServiceError(ServiceError::Kind::Invalid, e.what(), "config");
                }
            }
            std::string png;
            try {
                png = base64_decode(j.at("image_png_b64").get<std::string>());
            } catch (const Error& e) {
                throw ServiceError(ServiceError::Kind::Invalid, e.what(), "image_png_b64");
            }
            const auto snap = svc.create(std::move(png), std::move(q), cfg);
            const auto& s = snap->session;
            const auto& r0 = s.history.front();
            send_json(res, 201,
                      json{{"id", s.id},
                           {"state", to_string(s.state)},
                           {"report", r0.report ? json_util::report_to_json(*r0.report) : json(nullptr)},
                           {"mask_irle", rle_encode(r0.mask_in)},
                           {"session", json_util::session_to_json(s)}});
        });
    });

    st->server.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/step)", [&svc](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] {
            const auto r = svc.step(req.matches[1]);
            send_json(res, 200,
                      json{{"record", json_util::record_to_json(r.record, true)},
                           {"state", to_string(r.snapshot->session.state)},
                           {"session", json_util::session_to_json(r.snapshot->session)}});
        });
    });

    st->server.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/feedback)",
                    [&svc](const httplib::Request& req, httplib::Response& res) {
                        handle(res, [&] {
                            const json j = parse_request(req, false);
                            ClinicianFeedback fb;
                            try {
                                fb = json_util::feedback_from_json(j);
                            } catch (const Error& e) {
                                throw ServiceError(ServiceError::Kind::Invalid, e.what(), "feedback", req.matches[1]);
                            }
                            const auto fid = svc.submit_feedback(req.matches[1], std::move(fb));
                            const auto snap = svc.get(req.matches[1]);
                            json pending = json::array();
                            for (const auto& f : snap->session.pending_feedback) pending.push_back(f.id);
                            send_json(res, 200,
                                      json{{"feedback_id", fid},
                                           {"state", to_string(snap->session.state)},
                                           {"pending_feedback", pending}});
                        });
                    });

    st->server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] { send_json(res, 200, json_util::session_to_json(svc.get(req.matches[1])->session)); });
    });

    st->server.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/finalize)",
                    [&svc](const httplib::Request& req, httplib::Response& res) {
                        handle(res, [&] {
                            const BinaryMask m = svc.finalize(req.matches[1]);
                            const auto snap = svc.get(req.matches[1]);
                            send_json(res, 200,
                                      json{{"state", to_string(snap->session.state)}, {"mask_irle", rle_encode(m)}});
                        });
                    });

    st->server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/mask/([A-Za-z0-9]+))",
                   [&svc](const httplib::Request& req, httplib::Response& res) {
                       handle(res, [&] {
                           res.status = 200;
                           res.set_content(rle_encode(svc.mask(req.matches[1], req.matches[2])), "text/plain");
                       });
                   });
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw Error("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void ApiServer::serve() { impl_->server.listen_after_bind(); }

int ApiServer::start_background(const std::string& host, int port) {
    const int bound = bind(host, port);
    impl_->thread = std::thread([this] { serve(); });
    impl_->server.wait_until_ready();
    return bound;
}

void ApiServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace irsis
