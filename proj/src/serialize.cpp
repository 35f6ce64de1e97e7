#include "irsis/serialize.hpp"

namespace irsis::json_util {

json config_to_json(const AgentConfig& c) {
    return json{{"tau_c", c.thresholds.coverage},
                {"tau_o", c.thresholds.overlap},
                {"max_iterations", c.max_iterations},
                {"kernel_side", c.kernel.side},
                {"detection_prompt", c.detection_prompt}};
}

AgentConfig config_from_json(const json& j, AgentConfig base) {
    return guarded("config", [&] {
        if (!j.is_object()) throw FormatError("config must be an object");
        if (j.contains("tau_c")) base.thresholds.coverage = j.at("tau_c").get<double>();
        if (j.contains("tau_o")) base.thresholds.overlap = j.at("tau_o").get<double>();
        if (j.contains("max_iterations")) base.max_iterations = int_field(j, "max_iterations");
        if (j.contains("kernel_side")) base.kernel = StructuringElement::square(int_field(j, "kernel_side"));
        if (j.contains("detection_prompt")) base.detection_prompt = j.at("detection_prompt").get<std::string>();
        base.validate();
        return base;
    });
}

json region_to_json(const RefinedRegion& r) {
    return json{{"box", box_to_json(r.box)},
                {"label", r.box.label},
                {"confidence", r.box.confidence ? json(*r.box.confidence) : json(nullptr)},
                {"detection_index", r.detection_index ? json(*r.detection_index) : json(nullptr)},
                {"from_feedback", r.from_feedback},
                {"succeeded", r.succeeded}};
}

RefinedRegion region_from_json(const json& j) {
    RefinedRegion r;
    r.box = box_from_json(j.at("box"));
    if (j.contains("label")) r.box.label = j.at("label").get<std::string>();
    if (j.contains("confidence") && !j.at("confidence").is_null()) r.box.confidence = j.at("confidence").get<double>();
    if (!j.at("detection_index").is_null()) r.detection_index = j.at("detection_index").get<std::size_t>();
    r.from_feedback = j.at("from_feedback").get<bool>();
    r.succeeded = j.at("succeeded").get<bool>();
    return r;
}

json record_to_json(const IterationRecord& r, bool with_masks, bool with_reports) {
    json refined = json::array();
    for (const auto& g : r.refined) refined.push_back(region_to_json(g));
    json j{{"t", r.t},
           {"strategy", r.strategy ? json(to_string(*r.strategy)) : json(nullptr)},
           {"refined", refined},
           {"feedback_applied", r.feedback_applied},
           {"faults", r.faults}};
    if (with_reports) {
        j["report"] = r.report ? report_to_json(*r.report) : json(nullptr);
        j["refined_report"] = r.refined_report ? report_to_json(*r.refined_report) : json(nullptr);
    }
    if (with_masks) {
        j["mask_in_irle"] = rle_encode(r.mask_in);
        j["mask_out_irle"] = r.mask_out ? json(rle_encode(*r.mask_out)) : json(nullptr);
    }
    return j;
}

json feedback_to_json(const ClinicianFeedback& f) {
    json j{{"id", f.id}, {"kind", feedback_kind(f.payload)}, {"received_at_iteration", f.received_at_iteration}};
    if (const auto* bp = std::get_if<BoxPrompt>(&f.payload)) {
        j["box"] = box_to_json(bp->box);
    } else if (const auto* lc = std::get_if<LanguageCorrection>(&f.payload)) {
        j["text"] = lc->text;
    } else if (const auto* ra = std::get_if<ReferenceAnnotation>(&f.payload)) {
        j["region"] = box_to_json(ra->region);
        j["mask_irle"] = rle_encode(ra->mask);
    }
    return j;
}

ClinicianFeedback feedback_from_json(const json& j) {
    return guarded("feedback", [&] {
        if (!j.is_object()) throw FormatError("feedback must be an object");
        if (!j.contains("kind") || !j.at("kind").is_string()) throw FormatError("feedback field 'kind' is required");
        ClinicianFeedback f;
        if (j.contains("id")) f.id = j.at("id").get<std::uint64_t>();
        if (j.contains("received_at_iteration")) f.received_at_iteration = int_field(j, "received_at_iteration");
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "box_prompt") {
            if (!j.contains("box")) throw FormatError("box_prompt feedback needs field 'box'");
            f.payload = BoxPrompt{box_from_json(j.at("box"))};
        } else if (kind == "language_correction") {
            if (!j.contains("text") || !j.at("text").is_string()) {
                throw FormatError("language_correction feedback needs string field 'text'");
            }
            f.payload = LanguageCorrection{j.at("text").get<std::string>()};
        } else if (kind == "reference_annotation") {
            if (!j.contains("region") || !j.contains("mask_irle")) {
                throw FormatError("reference_annotation feedback needs fields 'region' and 'mask_irle'");
            }
            f.payload = ReferenceAnnotation{rle_decode(j.at("mask_irle").get<std::string>()), box_from_json(j.at("region"))};
        } else if (kind == "accept") {
            f.payload = Accept{};
        } else if (kind == "reject") {
            f.payload = Reject{};
        } else {
            throw FormatError("unknown feedback kind '" + kind + "'");
        }
        return f;
    });
}

json session_to_json(const RefinementSession& s) {
    json dets = json::array();
    for (const auto& d : s.detections) dets.push_back(detection_to_json(d));
    json hist = json::array();
    for (const auto& r : s.history) hist.push_back(record_to_json(r, false));
    json pending = json::array();
    for (const auto& f : s.pending_feedback) pending.push_back(f.id);
    json refs = json::array();
    for (const auto& r : s.references) refs.push_back(box_to_json(r.region));
    return json{{"id", s.id},
                {"state", to_string(s.state)},
                {"query", {{"text", s.query.text}, {"level", s.query.level ? json(*s.query.level) : json(nullptr)}}},
                {"corrections", s.corrections},
                {"effective_query", s.effective_query()},
                {"image", {{"width", s.image ? s.image->width() : 0}, {"height", s.image ? s.image->height() : 0}}},
                {"detections", dets},
                {"target_indices", s.target_indices},
                {"history", hist},
                {"pending_feedback", pending},
                {"reference_regions", refs},
                {"has_final_mask", s.final_mask.has_value()},
                {"fault", s.fault ? json(*s.fault) : json(nullptr)}};
}

}  // namespace irsis::json_util
