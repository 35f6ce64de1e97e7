// agent.hpp
//
// Quality-gated refinement loop. Each session carries a history of iteration
// records; the last record stays open (no strategy, no output) while the
// session is Running and is completed by step():
//
//   gate passes, no feedback pending  -> TrustInitial: output = Morph(input),
//                                        session converges
//   otherwise                         -> MultiInstrument: clear the low boxes
//                                        and feedback boxes, re-segment each
//                                        with a box prompt (clipped to the
//                                        box), union with what remains, then
//                                        re-evaluate
//
// Morph is opening then closing with the configured square kernel and is
// applied once, when the session finishes.

#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "irsis/backends.hpp"
#include "irsis/mask.hpp"
#include "irsis/quality.hpp"

namespace irsis {

enum class Strategy { TrustInitial, MultiInstrument };

enum class SessionState { Running, ConvergedQuality, ExhaustedIterations, NoDetections, FinalizedByClinician };

const char* to_string(Strategy s);
const char* to_string(SessionState s);
Strategy strategy_from_string(std::string_view s);
SessionState state_from_string(std::string_view s);

struct AgentConfig {
    QualityThresholds thresholds;
    int max_iterations = 3;
    StructuringElement kernel{5};
    std::string detection_prompt{kDefaultDetectionPrompt};

    void validate() const;
};

struct Query {
    std::string text;
    std::optional<int> level;  ///< 0, 1 or 2 when known

    friend bool operator==(const Query&, const Query&) = default;
};

struct BoxPrompt {
    BoundingBox box;
    friend bool operator==(const BoxPrompt&, const BoxPrompt&) = default;
};
struct LanguageCorrection {
    std::string text;
    friend bool operator==(const LanguageCorrection&, const LanguageCorrection&) = default;
};
struct ReferenceAnnotation {
    BinaryMask mask;
    BoundingBox region;
    friend bool operator==(const ReferenceAnnotation&, const ReferenceAnnotation&) = default;
};
struct Accept {
    friend bool operator==(const Accept&, const Accept&) = default;
};
struct Reject {
    friend bool operator==(const Reject&, const Reject&) = default;
};

using FeedbackPayload = std::variant<BoxPrompt, LanguageCorrection, ReferenceAnnotation, Accept, Reject>;

const char* feedback_kind(const FeedbackPayload& p);

struct ClinicianFeedback {
    std::uint64_t id = 0;  ///< assigned by apply_feedback when 0
    FeedbackPayload payload;
    int received_at_iteration = 0;

    friend bool operator==(const ClinicianFeedback&, const ClinicianFeedback&) = default;
};

struct RefinedRegion {
    BoundingBox box;
    std::optional<std::size_t> detection_index;
    bool from_feedback = false;
    bool succeeded = true;

    friend bool operator==(const RefinedRegion&, const RefinedRegion&) = default;
};

struct IterationRecord {
    int t = 0;
    BinaryMask mask_in;
    std::optional<QualityReport> report;  ///< absent when nothing was detected
    std::optional<Strategy> strategy;     ///< absent while the record is open
    std::vector<RefinedRegion> refined;
    std::optional<BinaryMask> mask_out;
    std::optional<QualityReport> refined_report;  ///< quality of the composed mask
    std::vector<std::uint64_t> feedback_applied;
    std::vector<std::string> faults;

    bool complete() const { return strategy.has_value(); }

    friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

// A clinician-supplied region whose content is pinned to the reference mask.
struct ReferenceRegion {
    BoundingBox region;
    BinaryMask content;

    friend bool operator==(const ReferenceRegion&, const ReferenceRegion&) = default;
};

struct RefinementSession {
    std::string id;
    std::shared_ptr<const RgbImage> image;
    Query query;
    std::vector<std::string> corrections;  ///< appended language corrections
    std::vector<Detection> detections;
    std::vector<std::size_t> target_indices;  ///< detections that enter the gate
    std::vector<IterationRecord> history;
    SessionState state = SessionState::Running;
    std::deque<ClinicianFeedback> pending_feedback;
    std::vector<ClinicianFeedback> feedback_log;  ///< every feedback received, in order
    std::vector<ReferenceRegion> references;
    std::optional<BinaryMask> final_mask;
    std::optional<std::string> fault;
    std::uint64_t next_feedback_id = 1;

    bool terminal() const { return state != SessionState::Running; }
    // Query text with corrections appended, as sent to the segmenter.
    std::string effective_query() const;
    // The mask the next step starts from, or the final mask when terminal.
    const BinaryMask& current_mask() const;
    std::vector<BoundingBox> target_boxes() const;

    // Compares image content, not image identity.
    friend bool operator==(const RefinementSession& a, const RefinementSession& b);
};

// Operation not allowed in the session's current state (stepping a terminal
// session, feedback on a finalized one).
class SessionStateError : public Error {
public:
    using Error::Error;
};

// A run that could not make progress because a backend failed; carries the
// session as it stood.
class AgentFault : public Error {
public:
    AgentFault(const std::string& what, RefinementSession session)
        : Error(what), session_(std::move(session)) {}
    const RefinementSession& session() const { return session_; }

private:
    RefinementSession session_;
};

class RefinementAgent {
public:
    RefinementAgent(std::shared_ptr<Segmenter> segmenter, std::shared_ptr<Detector> detector, AgentConfig config);

    const AgentConfig& config() const { return config_; }

    // Segments with the text query and detects instruments. Backend failures
    // leave the session Running with `fault` set and no history; the next
    // step() retries.
    RefinementSession run_initial(std::shared_ptr<const RgbImage> image, Query query, std::string id = {}) const;

    // Completes the open record. Requires a Running session.
    IterationRecord step(RefinementSession& session) const;

    // Accept finalizes immediately; Reject reopens the last completed record;
    // other feedback queues for the next step (reopening a terminal session).
    // Returns the feedback id.
    std::uint64_t apply_feedback(RefinementSession& session, ClinicianFeedback feedback) const;

    // Closes a session: Running sessions get Morph applied to their current
    // mask and become FinalizedByClinician. Returns the final mask.
    BinaryMask finalize(RefinementSession& session) const;

    // Scripted feedback is applied once the session reaches each item's
    // received_at_iteration. Throws AgentFault when a backend failure stalls
    // the run.
    RefinementSession run_to_completion(std::shared_ptr<const RgbImage> image, Query query,
                                        std::span<const ClinicianFeedback> feedback_script = {}) const;

private:
    void initialize(RefinementSession& session) const;
    BinaryMask morph(const RefinementSession& session, const BinaryMask& m) const;
    QualityReport evaluate_targets(const RefinementSession& session, const BinaryMask& m) const;
    void reopen_last(RefinementSession& session, bool discard_open) const;

    std::shared_ptr<Segmenter> segmenter_;
    std::shared_ptr<Detector> detector_;
    AgentConfig config_;
};

// Pastes every reference region's content over `m`.
BinaryMask apply_references(const BinaryMask& m, std::span<const ReferenceRegion> refs);

}  // namespace irsis
