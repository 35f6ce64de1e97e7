// backends.hpp
//
// Segmenter and detector contracts. The agent only ever talks to these
// interfaces; concrete implementations are the oracle/noisy stand-ins in
// oracle.hpp and the HTTP clients in remote.hpp.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "irsis/image.hpp"
#include "irsis/mask.hpp"

namespace irsis {

class BackendError : public Error {
public:
    enum class Kind { Unreachable, Timeout, Malformed, Rejected };

    BackendError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const { return kind_; }
    // Transport failures may succeed on retry; a malformed or rejected
    // payload is a contract bug and will not.
    bool retryable() const { return kind_ == Kind::Unreachable || kind_ == Kind::Timeout; }

private:
    Kind kind_;
};

const char* to_string(BackendError::Kind kind);

struct SegmentRequest {
    std::shared_ptr<const RgbImage> image;
    std::optional<std::string> text_query;
    std::optional<BoundingBox> box_prompt;

    // Image present, at least one prompt, box inside the image.
    void validate() const;
};

struct SegmentResult {
    BinaryMask mask;
    double score = 0.0;
};

struct Detection {
    BoundingBox box;
    std::string label;
    double confidence = 1.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

class Segmenter {
public:
    virtual ~Segmenter() = default;
    // Result mask has the request image's dimensions.
    virtual SegmentResult segment(const SegmentRequest& request) = 0;
    virtual std::string kind() const = 0;
};

class Detector {
public:
    virtual ~Detector() = default;
    // Boxes lie within the image; the list may be empty.
    virtual std::vector<Detection> detect(const RgbImage& image, std::string_view prompt) = 0;
    virtual std::string kind() const = 0;
};

// Boxes of a detection list, with the detection label copied onto each box.
std::vector<BoundingBox> boxes_of(const std::vector<Detection>& detections);

inline constexpr std::string_view kDefaultDetectionPrompt =
    "Detect every visible surgical instrument and return one bounding box per instrument.";

}  // namespace irsis
