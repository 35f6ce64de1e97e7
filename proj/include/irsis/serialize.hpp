// serialize.hpp
//
// JSON conversions shared by the backend wire protocol, the session API, the
// on-disk session store and the CLI. Masks travel as IRLE v1 strings.

#pragma once

#include <json.hpp>

#include "irsis/agent.hpp"
#include "irsis/backends.hpp"
#include "irsis/quality.hpp"

namespace irsis::json_util {

using nlohmann::json;

inline json box_to_json(const BoundingBox& b) {
    return json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
}

inline int int_field(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw FormatError(std::string("field '") + key + "' must be an integer");
    return v.get<int>();
}

inline BoundingBox box_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("box must be an object");
    BoundingBox b;
    b.x0 = int_field(j, "x0");
    b.y0 = int_field(j, "y0");
    b.x1 = int_field(j, "x1");
    b.y1 = int_field(j, "y1");
    return b;
}

inline json detection_to_json(const Detection& d) {
    return json{{"box", box_to_json(d.box)}, {"label", d.label}, {"confidence", d.confidence}};
}

inline Detection detection_from_json(const json& j) {
    Detection d;
    d.box = box_from_json(j.at("box"));
    d.label = j.at("label").get<std::string>();
    d.confidence = j.at("confidence").get<double>();
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw FormatError("confidence outside [0,1]");
    d.box.label = d.label;
    d.box.confidence = d.confidence;
    return d;
}

inline json report_to_json(const QualityReport& r) {
    json overlaps = json::array();
    for (const auto& o : r.per_box_overlap) overlaps.push_back({{"box", o.box_index}, {"overlap", o.overlap}});
    return json{{"coverage", r.coverage},
                {"per_box_overlap", overlaps},
                {"gate", r.gate},
                {"low_boxes", r.low_boxes},
                {"box_union_area", r.box_union_area}};
}

inline QualityReport report_from_json(const json& j) {
    QualityReport r;
    r.coverage = j.at("coverage").get<double>();
    for (const auto& o : j.at("per_box_overlap")) {
        r.per_box_overlap.push_back({o.at("box").get<std::size_t>(), o.at("overlap").get<double>()});
    }
    r.gate = j.at("gate").get<bool>();
    r.low_boxes = j.at("low_boxes").get<std::vector<std::size_t>>();
    r.box_union_area = j.at("box_union_area").get<std::int64_t>();
    return r;
}

// Runs `fn`, converting nlohmann exceptions into FormatError.
template <typename Fn>
auto guarded(const char* what, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

json config_to_json(const AgentConfig& c);
// Fields absent from `j` keep their value from `base`.
AgentConfig config_from_json(const json& j, AgentConfig base = {});

json region_to_json(const RefinedRegion& r);
RefinedRegion region_from_json(const json& j);

// Record metadata; masks and reports are added only when requested.
json record_to_json(const IterationRecord& r, bool with_masks, bool with_reports = true);

// {id, kind, received_at_iteration, box? | text? | region?+mask_irle?}
json feedback_to_json(const ClinicianFeedback& f);
// Accepts the same shape; `id` and `received_at_iteration` are optional.
ClinicianFeedback feedback_from_json(const json& j);

// Session overview for API responses: state, query, detections, history
// (with reports, without masks), pending feedback ids and fault.
json session_to_json(const RefinementSession& s);

}  // namespace irsis::json_util
