#include "irsis/backends.hpp"

namespace irsis {

const char* to_string(BackendError::Kind kind) {
    switch (kind) {
        case BackendError::Kind::Unreachable: return "unreachable";
        case BackendError::Kind::Timeout: return "timeout";
        case BackendError::Kind::Malformed: return "malformed";
        case BackendError::Kind::Rejected: return "rejected";
    }
    return "?";
}

void SegmentRequest::validate() const {
    if (!image) throw InvalidArgument("segment request has no image");
    if (!text_query && !box_prompt) throw InvalidArgument("segment request needs a text query or a box prompt");
    if (box_prompt) require_fits(*box_prompt, image->width(), image->height());
}

std::vector<BoundingBox> boxes_of(const std::vector<Detection>& detections) {
    std::vector<BoundingBox> out;
    out.reserve(detections.size());
    for (const auto& d : detections) {
        BoundingBox b = d.box;
        b.label = d.label;
        b.confidence = d.confidence;
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace irsis
