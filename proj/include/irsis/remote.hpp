// remote.hpp
//
// Backend wire protocol (JSON over HTTP) and its two ends: client-side
// Segmenter/Detector implementations and a standalone server that exposes any
// local Segmenter/Detector pair.
//
//   POST /v1/segment  {image_png_b64, text_query?, box_prompt?{x0,y0,x1,y1}}
//                     -> {mask_irle, score}
//   POST /v1/detect   {image_png_b64, prompt}
//                     -> {detections:[{box:{x0,y0,x1,y1}, label, confidence}]}
//   GET  /healthz     -> {status:"ok", backend_kind}

#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

#include "irsis/backends.hpp"

namespace irsis {

// Wire codecs. Decoders throw BackendError(Malformed) on schema violations.
std::string encode_segment_request(const SegmentRequest& request);
SegmentRequest decode_segment_request(std::string_view body);
std::string encode_segment_response(const SegmentResult& result);
SegmentResult decode_segment_response(std::string_view body);
std::string encode_detect_request(const RgbImage& image, std::string_view prompt);
struct DetectRequest {
    std::shared_ptr<const RgbImage> image;
    std::string prompt;
};
DetectRequest decode_detect_request(std::string_view body);
std::string encode_detect_response(const std::vector<Detection>& detections);
std::vector<Detection> decode_detect_response(std::string_view body);

struct ClientOptions {
    std::chrono::milliseconds timeout{30000};
    int transport_retries = 1;

    // Defaults, with IRSIS_BACKEND_TIMEOUT_SECS overriding the timeout.
    static ClientOptions from_env();
};

class RemoteSegmenter : public Segmenter {
public:
    RemoteSegmenter(std::string base_url, ClientOptions options = ClientOptions::from_env());
    SegmentResult segment(const SegmentRequest& request) override;
    std::string kind() const override { return "remote-model"; }

private:
    std::string base_url_;
    ClientOptions options_;
};

class RemoteDetector : public Detector {
public:
    RemoteDetector(std::string base_url, ClientOptions options = ClientOptions::from_env());
    std::vector<Detection> detect(const RgbImage& image, std::string_view prompt) override;
    std::string kind() const override { return "remote-model"; }

private:
    std::string base_url_;
    ClientOptions options_;
};

// GET /healthz; returns backend_kind or throws BackendError.
std::string probe_backend(const std::string& base_url, ClientOptions options = ClientOptions::from_env());

class BackendServer {
public:
    BackendServer(std::shared_ptr<Segmenter> segmenter, std::shared_ptr<Detector> detector,
                  std::string backend_kind);
    ~BackendServer();
    BackendServer(const BackendServer&) = delete;
    BackendServer& operator=(const BackendServer&) = delete;

    // Port 0 binds an ephemeral port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void serve();
    // bind + serve on a background thread; returns once accepting.
    int start_background(const std::string& host, int port = 0);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace irsis
