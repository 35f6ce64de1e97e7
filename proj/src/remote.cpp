#include "irsis/remote.hpp"

#include <httplib.h>

#include <cstdlib>
#include <mutex>
#include <thread>

#include "irsis/serialize.hpp"

namespace irsis {

using json_util::json;

namespace {

[[noreturn]] void malformed(const std::string& what) { throw BackendError(BackendError::Kind::Malformed, what); }

json parse_body(std::string_view body, const char* what) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) malformed(std::string(what) + ": body is not a JSON object");
    return j;
}

template <typename Fn>
auto wire_guard(const char* what, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const BackendError&) {
        throw;
    } catch (const json::exception& e) {
        malformed(std::string(what) + ": " + e.what());
    } catch (const Error& e) {
        malformed(std::string(what) + ": " + e.what());
    }
}

std::shared_ptr<const RgbImage> image_field(const json& j) {
    const auto& v = j.at("image_png_b64");
    if (!v.is_string()) malformed("image_png_b64 must be a string");
    return std::make_shared<const RgbImage>(decode_png(base64_decode(v.get<std::string>())));
}

}  // namespace

std::string encode_segment_request(const SegmentRequest& request) {
    request.validate();
    json j{{"image_png_b64", base64_encode(encode_png(*request.image))}};
    if (request.text_query) j["text_query"] = *request.text_query;
    if (request.box_prompt) j["box_prompt"] = json_util::box_to_json(*request.box_prompt);
    return j.dump();
}

SegmentRequest decode_segment_request(std::string_view body) {
    return wire_guard("segment request", [&] {
        const json j = parse_body(body, "segment request");
        SegmentRequest r;
        r.image = image_field(j);
        if (j.contains("text_query") && !j["text_query"].is_null()) r.text_query = j["text_query"].get<std::string>();
        if (j.contains("box_prompt") && !j["box_prompt"].is_null()) r.box_prompt = json_util::box_from_json(j["box_prompt"]);
        r.validate();
        return r;
    });
}

std::string encode_segment_response(const SegmentResult& result) {
    return json{{"mask_irle", rle_encode(result.mask)}, {"score", result.score}}.dump();
}

SegmentResult decode_segment_response(std::string_view body) {
    return wire_guard("segment response", [&] {
        const json j = parse_body(body, "segment response");
        SegmentResult r{rle_decode(j.at("mask_irle").get<std::string>()), j.at("score").get<double>()};
        if (!(r.score >= 0.0 && r.score <= 1.0)) malformed("score outside [0,1]");
        return r;
    });
}

std::string encode_detect_request(const RgbImage& image, std::string_view prompt) {
    return json{{"image_png_b64", base64_encode(encode_png(image))}, {"prompt", std::string(prompt)}}.dump();
}

DetectRequest decode_detect_request(std::string_view body) {
    return wire_guard("detect request", [&] {
        const json j = parse_body(body, "detect request");
        return DetectRequest{image_field(j), j.at("prompt").get<std::string>()};
    });
}

std::string encode_detect_response(const std::vector<Detection>& detections) {
    json arr = json::array();
    for (const auto& d : detections) arr.push_back(json_util::detection_to_json(d));
    return json{{"detections", arr}}.dump();
}

std::vector<Detection> decode_detect_response(std::string_view body) {
    return wire_guard("detect response", [&] {
        const json j = parse_body(body, "detect response");
        std::vector<Detection> out;
        for (const auto& d : j.at("detections")) out.push_back(json_util::detection_from_json(d));
        return out;
    });
}

ClientOptions ClientOptions::from_env() {
    ClientOptions o;
    if (const char* v = std::getenv("IRSIS_BACKEND_TIMEOUT_SECS")) {
        char* end = nullptr;
        const double secs = std::strtod(v, &end);
        if (end != v && secs > 0) o.timeout = std::chrono::milliseconds(static_cast<long long>(secs * 1000));
    }
    return o;
}

namespace {

std::string post_json(const std::string& base_url, const std::string& path, const std::string& body,
                      const ClientOptions& options) {
    int attempts_left = options.transport_retries + 1;
    while (true) {
        httplib::Client cli(base_url);
        if (!cli.is_valid()) throw BackendError(BackendError::Kind::Unreachable, "invalid backend URL '" + base_url + "'");
        cli.set_connection_timeout(options.timeout);
        cli.set_read_timeout(options.timeout);
        cli.set_write_timeout(options.timeout);
        auto res = path.empty() ? cli.Get("/healthz") : cli.Post(path, body, "application/json");
        if (res) {
            if (res->status == 200) return res->body;
            const std::string msg = base_url + path + " answered HTTP " + std::to_string(res->status) + ": " + res->body;
            if (res->status >= 500) {
                if (--attempts_left > 0) continue;
                throw BackendError(BackendError::Kind::Unreachable, msg);
            }
            throw BackendError(BackendError::Kind::Rejected, msg);
        }
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                               err == httplib::Error::Write;
        if (--attempts_left > 0) continue;
        throw BackendError(timed_out ? BackendError::Kind::Timeout : BackendError::Kind::Unreachable,
                           base_url + path + ": " + httplib::to_string(err));
    }
}

}  // namespace

RemoteSegmenter::RemoteSegmenter(std::string base_url, ClientOptions options)
    : base_url_(std::move(base_url)), options_(options) {}

SegmentResult RemoteSegmenter::segment(const SegmentRequest& request) {
    SegmentResult r = decode_segment_response(post_json(base_url_, "/v1/segment", encode_segment_request(request), options_));
    if (r.mask.width() != request.image->width() || r.mask.height() != request.image->height()) {
        malformed("segment response mask size differs from the image");
    }
    return r;
}

RemoteDetector::RemoteDetector(std::string base_url, ClientOptions options)
    : base_url_(std::move(base_url)), options_(options) {}

std::vector<Detection> RemoteDetector::detect(const RgbImage& image, std::string_view prompt) {
    auto dets = decode_detect_response(post_json(base_url_, "/v1/detect", encode_detect_request(image, prompt), options_));
    for (const auto& d : dets) {
        if (!d.box.fits(image.width(), image.height())) malformed("detection box outside the image");
    }
    return dets;
}

std::string probe_backend(const std::string& base_url, ClientOptions options) {
    const std::string body = post_json(base_url, "", "", options);
    return wire_guard("health response", [&] {
        const json j = parse_body(body, "health response");
        if (j.at("status").get<std::string>() != "ok") malformed("backend status is not ok");
        return j.at("backend_kind").get<std::string>();
    });
}

struct BackendServer::Impl {
    std::shared_ptr<Segmenter> segmenter;
    std::shared_ptr<Detector> detector;
    std::string kind;
    httplib::Server server;
    std::thread thread;
    std::mutex call_mutex;  // oracle backends are reentrant; remote wrappers may not be
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
}

template <typename Fn>
void handle(httplib::Response& res, Fn&& fn) {
    try {
        res.set_content(fn(), "application/json");
        res.status = 200;
    } catch (const BackendError& e) {
        reply_error(res, e.kind() == BackendError::Kind::Malformed || e.kind() == BackendError::Kind::Rejected ? 400 : 503,
                    e.what());
    } catch (const Error& e) {
        reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
        reply_error(res, 500, e.what());
    }
}

}  // namespace

BackendServer::BackendServer(std::shared_ptr<Segmenter> segmenter, std::shared_ptr<Detector> detector,
                             std::string backend_kind)
    : impl_(std::make_unique<Impl>()) {
    impl_->segmenter = std::move(segmenter);
    impl_->detector = std::move(detector);
    impl_->kind = std::move(backend_kind);
    Impl* st = impl_.get();
    st->server.Get("/healthz", [st](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"}, {"backend_kind", st->kind}}.dump(), "application/json");
    });
    st->server.Post("/v1/segment", [st](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] {
            const auto r = decode_segment_request(req.body);
            std::lock_guard lock(st->call_mutex);
            return encode_segment_response(st->segmenter->segment(r));
        });
    });
    st->server.Post("/v1/detect", [st](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] {
            const auto r = decode_detect_request(req.body);
            std::lock_guard lock(st->call_mutex);
            return encode_detect_response(st->detector->detect(*r.image, r.prompt));
        });
    });
}

BackendServer::~BackendServer() { stop(); }

int BackendServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw Error("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void BackendServer::serve() { impl_->server.listen_after_bind(); }

int BackendServer::start_background(const std::string& host, int port) {
    const int bound = bind(host, port);
    impl_->thread = std::thread([this] { serve(); });
    impl_->server.wait_until_ready();
    return bound;
}

void BackendServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace irsis
