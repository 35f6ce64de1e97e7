#include "irsis/agent.hpp"

#include <algorithm>

namespace irsis {

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::TrustInitial: return "TrustInitial";
        case Strategy::MultiInstrument: return "MultiInstrument";
    }
    return "?";
}

const char* to_string(SessionState s) {
    switch (s) {
        case SessionState::Running: return "Running";
        case SessionState::ConvergedQuality: return "ConvergedQuality";
        case SessionState::ExhaustedIterations: return "ExhaustedIterations";
        case SessionState::NoDetections: return "NoDetections";
        case SessionState::FinalizedByClinician: return "FinalizedByClinician";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view s) {
    if (s == "TrustInitial") return Strategy::TrustInitial;
    if (s == "MultiInstrument") return Strategy::MultiInstrument;
    throw FormatError("unknown strategy '" + std::string(s) + "'");
}

SessionState state_from_string(std::string_view s) {
    for (auto st : {SessionState::Running, SessionState::ConvergedQuality, SessionState::ExhaustedIterations,
                    SessionState::NoDetections, SessionState::FinalizedByClinician}) {
        if (s == to_string(st)) return st;
    }
    throw FormatError("unknown session state '" + std::string(s) + "'");
}

const char* feedback_kind(const FeedbackPayload& p) {
    struct V {
        const char* operator()(const BoxPrompt&) const { return "box_prompt"; }
        const char* operator()(const LanguageCorrection&) const { return "language_correction"; }
        const char* operator()(const ReferenceAnnotation&) const { return "reference_annotation"; }
        const char* operator()(const Accept&) const { return "accept"; }
        const char* operator()(const Reject&) const { return "reject"; }
    };
    return std::visit(V{}, p);
}

void AgentConfig::validate() const {
    thresholds.validate();
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    StructuringElement::square(kernel.side);
}

std::string RefinementSession::effective_query() const {
    std::string q = query.text;
    for (const auto& c : corrections) q += "; " + c;
    return q;
}

const BinaryMask& RefinementSession::current_mask() const {
    if (terminal()) {
        if (!final_mask) throw SessionStateError("terminal session has no final mask");
        return *final_mask;
    }
    if (history.empty()) throw SessionStateError("session has no mask yet");
    const auto& last = history.back();
    return last.complete() && last.mask_out ? *last.mask_out : last.mask_in;
}

bool operator==(const RefinementSession& a, const RefinementSession& b) {
    const bool same_image = a.image == b.image || (a.image && b.image && *a.image == *b.image);
    return same_image && a.id == b.id && a.query == b.query && a.corrections == b.corrections &&
           a.detections == b.detections && a.target_indices == b.target_indices && a.history == b.history &&
           a.state == b.state && a.pending_feedback == b.pending_feedback && a.feedback_log == b.feedback_log &&
           a.references == b.references && a.final_mask == b.final_mask && a.fault == b.fault &&
           a.next_feedback_id == b.next_feedback_id;
}

std::vector<BoundingBox> RefinementSession::target_boxes() const {
    std::vector<BoundingBox> out;
    const auto all = boxes_of(detections);
    for (std::size_t i : target_indices) out.push_back(all.at(i));
    return out;
}

BinaryMask apply_references(const BinaryMask& m, std::span<const ReferenceRegion> refs) {
    BinaryMask out = m;
    for (const auto& r : refs) {
        out = subtract_box(out, r.region);
        out |= r.content;
    }
    return out;
}

RefinementAgent::RefinementAgent(std::shared_ptr<Segmenter> segmenter, std::shared_ptr<Detector> detector,
                                 AgentConfig config)
    : segmenter_(std::move(segmenter)), detector_(std::move(detector)), config_(std::move(config)) {
    if (!segmenter_ || !detector_) throw InvalidArgument("agent needs a segmenter and a detector");
    config_.validate();
}

BinaryMask RefinementAgent::morph(const RefinementSession& session, const BinaryMask& m) const {
    return apply_references(morph_clean(m, config_.kernel), session.references);
}

QualityReport RefinementAgent::evaluate_targets(const RefinementSession& session, const BinaryMask& m) const {
    const auto boxes = session.target_boxes();
    return evaluate(m, boxes, config_.thresholds);
}

RefinementSession RefinementAgent::run_initial(std::shared_ptr<const RgbImage> image, Query query,
                                               std::string id) const {
    if (!image) throw InvalidArgument("run_initial needs an image");
    if (query.text.empty()) throw InvalidArgument("query text is empty");
    if (query.level && (*query.level < 0 || *query.level > 2)) throw InvalidArgument("query level must be 0, 1 or 2");
    RefinementSession s;
    s.id = std::move(id);
    s.image = std::move(image);
    s.query = std::move(query);
    try {
        initialize(s);
    } catch (const BackendError&) {
        // fault already recorded; the session stays resumable
    }
    return s;
}

void RefinementAgent::initialize(RefinementSession& s) const {
    SegmentResult initial;
    std::vector<Detection> detections;
    try {
        SegmentRequest req;
        req.image = s.image;
        req.text_query = s.effective_query();
        initial = segmenter_->segment(req);
        detections = detector_->detect(*s.image, config_.detection_prompt);
    } catch (const BackendError& e) {
        s.fault = std::string("initial pass: ") + to_string(e.kind()) + ": " + e.what();
        throw;
    }
    s.fault.reset();
    s.detections = std::move(detections);
    const auto boxes = boxes_of(s.detections);
    s.target_indices = boxes.empty() ? std::vector<std::size_t>{} : select_target_boxes(boxes, s.query.text);

    IterationRecord rec;
    rec.t = 0;
    rec.mask_in = apply_references(initial.mask, s.references);
    if (s.detections.empty()) {
        rec.strategy = Strategy::TrustInitial;
        rec.mask_out = morph(s, rec.mask_in);
        s.final_mask = rec.mask_out;
        s.state = SessionState::NoDetections;
    } else {
        rec.report = evaluate_targets(s, rec.mask_in);
    }
    s.history.push_back(std::move(rec));
}

IterationRecord RefinementAgent::step(RefinementSession& s) const {
    if (s.terminal()) throw SessionStateError(std::string("session is ") + to_string(s.state));
    if (s.history.empty()) {
        initialize(s);
        return s.history.back();
    }
    IterationRecord& rec = s.history.back();

    bool reject = false;
    std::vector<BoundingBox> feedback_boxes;
    while (!s.pending_feedback.empty()) {
        ClinicianFeedback fb = std::move(s.pending_feedback.front());
        s.pending_feedback.pop_front();
        rec.feedback_applied.push_back(fb.id);
        if (const auto* bp = std::get_if<BoxPrompt>(&fb.payload)) {
            const bool dup = std::any_of(feedback_boxes.begin(), feedback_boxes.end(),
                                         [&](const BoundingBox& b) { return b.same_extent(bp->box); });
            if (!dup) feedback_boxes.push_back(bp->box);
        } else if (const auto* lc = std::get_if<LanguageCorrection>(&fb.payload)) {
            s.corrections.push_back(lc->text);
            try {
                SegmentRequest req;
                req.image = s.image;
                req.text_query = s.effective_query();
                rec.mask_in = apply_references(segmenter_->segment(req).mask, s.references);
            } catch (const BackendError& e) {
                rec.faults.push_back(std::string("language correction: ") + to_string(e.kind()) + ": " + e.what());
            }
        } else if (const auto* ra = std::get_if<ReferenceAnnotation>(&fb.payload)) {
            s.references.push_back({ra->region, intersect_mask_box(ra->mask, ra->region)});
            rec.mask_in = apply_references(rec.mask_in, s.references);
        } else if (std::holds_alternative<Reject>(fb.payload)) {
            reject = true;
        }
    }
    const bool had_feedback = !rec.feedback_applied.empty();
    const bool detected = !s.detections.empty();
    if (detected) rec.report = evaluate_targets(s, rec.mask_in);

    if (!detected && feedback_boxes.empty()) {
        rec.strategy = Strategy::TrustInitial;
        rec.mask_out = morph(s, rec.mask_in);
        s.final_mask = rec.mask_out;
        s.state = SessionState::NoDetections;
        return rec;
    }
    if (detected && rec.report->gate && !had_feedback) {
        rec.strategy = Strategy::TrustInitial;
        rec.mask_out = morph(s, rec.mask_in);
        s.final_mask = rec.mask_out;
        s.state = SessionState::ConvergedQuality;
        return rec;
    }

    // Refinement set: low target boxes (or every target after a rejection)
    // plus clinician boxes, one call per distinct extent.
    std::vector<RefinedRegion> regions;
    auto known = [&](const BoundingBox& b) {
        return std::any_of(regions.begin(), regions.end(), [&](const RefinedRegion& r) { return r.box.same_extent(b); });
    };
    auto pinned = [&](const BoundingBox& b) {
        return std::any_of(s.references.begin(), s.references.end(), [&](const ReferenceRegion& r) {
            return r.region.x0 <= b.x0 && r.region.y0 <= b.y0 && b.x1 <= r.region.x1 && b.y1 <= r.region.y1;
        });
    };
    if (detected) {
        const auto targets = s.target_boxes();
        std::vector<std::size_t> picks;
        if (reject) {
            for (std::size_t i = 0; i < targets.size(); ++i) picks.push_back(i);
        } else {
            picks = rec.report->low_boxes;
        }
        for (std::size_t i : picks) {
            if (pinned(targets[i]) || known(targets[i])) continue;
            regions.push_back({targets[i], s.target_indices[i], false, true});
        }
    }
    for (const auto& b : feedback_boxes) {
        if (!known(b)) regions.push_back({b, std::nullopt, true, true});
    }

    BinaryMask composed = rec.mask_in;
    for (const auto& r : regions) composed = subtract_box(composed, r.box);
    for (auto& r : regions) {
        try {
            SegmentRequest req;
            req.image = s.image;
            req.box_prompt = r.box;
            composed |= intersect_mask_box(segmenter_->segment(req).mask, r.box);
        } catch (const BackendError& e) {
            r.succeeded = false;
            composed |= intersect_mask_box(rec.mask_in, r.box);
            rec.faults.push_back("box (" + std::to_string(r.box.x0) + "," + std::to_string(r.box.y0) + "," +
                                 std::to_string(r.box.x1) + "," + std::to_string(r.box.y1) + "): " +
                                 to_string(e.kind()) + ": " + e.what());
        }
    }
    composed = apply_references(composed, s.references);

    rec.strategy = Strategy::MultiInstrument;
    rec.refined = regions;
    rec.mask_out = composed;
    if (detected) rec.refined_report = evaluate_targets(s, composed);

    if (!detected) {
        s.final_mask = morph(s, composed);
        s.state = SessionState::NoDetections;
    } else if (rec.refined_report->gate) {
        s.final_mask = morph(s, composed);
        s.state = SessionState::ConvergedQuality;
    } else if (rec.t + 1 >= config_.max_iterations || regions.empty()) {
        // An empty refinement set cannot change the mask, so further rounds
        // would repeat this one.
        s.final_mask = composed;
        s.state = SessionState::ExhaustedIterations;
    } else {
        IterationRecord next;
        next.t = rec.t + 1;
        next.mask_in = composed;
        next.report = rec.refined_report;
        const IterationRecord done = rec;
        s.history.push_back(std::move(next));
        return done;
    }
    return rec;
}

void RefinementAgent::reopen_last(RefinementSession& s, bool discard_open) const {
    if (s.history.empty()) return;
    if (!s.history.back().complete()) {
        if (!discard_open || s.history.size() == 1) return;
        s.history.pop_back();
    }
    IterationRecord& rec = s.history.back();
    rec.strategy.reset();
    rec.refined.clear();
    rec.mask_out.reset();
    rec.refined_report.reset();
    rec.feedback_applied.clear();
    rec.faults.clear();
    s.final_mask.reset();
    s.state = SessionState::Running;
}

std::uint64_t RefinementAgent::apply_feedback(RefinementSession& s, ClinicianFeedback fb) const {
    if (s.state == SessionState::FinalizedByClinician) {
        throw SessionStateError("session is finalized; feedback is no longer accepted");
    }
    if (s.history.empty()) throw SessionStateError("session has no iteration to give feedback on");
    const int w = s.image->width(), h = s.image->height();
    // Clinician boxes are pure extents.
    auto extent = [](const BoundingBox& b) {
        BoundingBox e;
        e.x0 = b.x0;
        e.y0 = b.y0;
        e.x1 = b.x1;
        e.y1 = b.y1;
        return e;
    };
    if (auto* bp = std::get_if<BoxPrompt>(&fb.payload)) {
        require_fits(bp->box, w, h);
        bp->box = extent(bp->box);
    } else if (const auto* lc = std::get_if<LanguageCorrection>(&fb.payload)) {
        if (lc->text.empty()) throw InvalidArgument("language correction is empty");
    } else if (auto* ra = std::get_if<ReferenceAnnotation>(&fb.payload)) {
        require_fits(ra->region, w, h);
        ra->region = extent(ra->region);
        if (ra->mask.width() != w || ra->mask.height() != h) {
            throw DimensionMismatch("reference mask size differs from the image");
        }
    }

    if (fb.id == 0) fb.id = s.next_feedback_id;
    s.next_feedback_id = std::max(s.next_feedback_id, fb.id + 1);
    s.feedback_log.push_back(fb);

    if (std::holds_alternative<Accept>(fb.payload)) {
        if (!s.terminal()) s.final_mask = morph(s, s.current_mask());
        s.history.back().feedback_applied.push_back(fb.id);
        s.pending_feedback.clear();
        s.state = SessionState::FinalizedByClinician;
    } else if (std::holds_alternative<Reject>(fb.payload)) {
        reopen_last(s, true);
        s.pending_feedback.push_back(std::move(fb));
    } else {
        if (s.terminal()) reopen_last(s, false);
        s.pending_feedback.push_back(std::move(fb));
    }
    return s.feedback_log.back().id;
}

BinaryMask RefinementAgent::finalize(RefinementSession& s) const {
    if (s.terminal()) return *s.final_mask;
    s.final_mask = morph(s, s.current_mask());
    s.pending_feedback.clear();
    s.state = SessionState::FinalizedByClinician;
    return *s.final_mask;
}

RefinementSession RefinementAgent::run_to_completion(std::shared_ptr<const RgbImage> image, Query query,
                                                     std::span<const ClinicianFeedback> script) const {
    RefinementSession s = run_initial(std::move(image), std::move(query));
    if (s.fault) throw AgentFault(*s.fault, s);
    std::size_t next = 0;
    while (true) {
        const int t = s.history.back().t;
        while (next < script.size() && script[next].received_at_iteration <= t &&
               s.state != SessionState::FinalizedByClinician) {
            apply_feedback(s, script[next++]);
        }
        if (s.terminal()) break;
        step(s);
    }
    return s;
}

}  // namespace irsis
