// service.hpp
//
// Session-oriented front end to the refinement agent, backed by a folder per
// session:
//
//   <root>/<id>/manifest.json        session metadata and iteration index
//   <root>/<id>/image.png            the uploaded image, byte for byte
//   <root>/<id>/masks/iter_NNN_in.irle, iter_NNN_out.irle
//   <root>/<id>/reports/iter_NNN.json
//   <root>/<id>/references/ref_NNN.irle
//   <root>/<id>/feedback.jsonl       every feedback received, in order
//   <root>/<id>/final.irle
//
// Operations on one session are serialized; reads return the last committed
// snapshot and never wait for a running step.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "irsis/agent.hpp"

namespace irsis {

class ServiceError : public Error {
public:
    enum class Kind { Invalid, NotFound, Conflict, BackendUnavailable };

    ServiceError(Kind kind, const std::string& what, std::string field = {}, std::string session_id = {})
        : Error(what), kind_(kind), field_(std::move(field)), session_id_(std::move(session_id)) {}

    Kind kind() const { return kind_; }
    const std::string& field() const { return field_; }
    const std::string& session_id() const { return session_id_; }
    int http_status() const;

private:
    Kind kind_;
    std::string field_;
    std::string session_id_;
};

struct SessionSnapshot {
    RefinementSession session;
    AgentConfig config;
    std::string image_png;
};

class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path dir(const std::string& id) const { return root_ / id; }
    bool exists(const std::string& id) const;
    // Replaces the session folder as a whole.
    void save(const SessionSnapshot& snap) const;
    SessionSnapshot load(const std::string& id) const;
    std::vector<std::string> list() const;

private:
    std::filesystem::path root_;
};

struct ServiceOptions {
    std::filesystem::path root;
    AgentConfig defaults;
};

struct StepResult {
    IterationRecord record;
    std::shared_ptr<const SessionSnapshot> snapshot;
};

class SessionService {
public:
    SessionService(std::shared_ptr<Segmenter> segmenter, std::shared_ptr<Detector> detector, ServiceOptions options);

    const AgentConfig& defaults() const { return options_.defaults; }
    std::string segmenter_kind() const { return segmenter_->kind(); }
    std::string detector_kind() const { return detector_->kind(); }

    // Runs the initial pass and persists the session. Throws
    // ServiceError(Invalid) without creating anything for a bad image or
    // query; ServiceError(BackendUnavailable) carries the id of the session
    // that was persisted with its fault.
    std::shared_ptr<const SessionSnapshot> create(std::string image_png, Query query,
                                                  std::optional<AgentConfig> config = std::nullopt);
    StepResult step(const std::string& id);
    // Stamps the feedback with the current iteration and a fresh id.
    std::uint64_t submit_feedback(const std::string& id, ClinicianFeedback feedback);
    std::shared_ptr<const SessionSnapshot> get(const std::string& id);
    BinaryMask finalize(const std::string& id);
    // `which` is an iteration index (the mask that iteration started from) or
    // "final".
    BinaryMask mask(const std::string& id, const std::string& which);
    std::vector<std::string> list() const { return store_.list(); }

private:
    struct Entry {
        std::mutex op;
        mutable std::mutex snap_mu;
        std::shared_ptr<const SessionSnapshot> snap;

        std::shared_ptr<const SessionSnapshot> load() const;
        void commit(std::shared_ptr<const SessionSnapshot> s);
    };

    std::shared_ptr<Entry> entry(const std::string& id);
    RefinementAgent agent_for(const AgentConfig& config) const;
    std::shared_ptr<const SessionSnapshot> commit(Entry& e, SessionSnapshot snap);

    std::shared_ptr<Segmenter> segmenter_;
    std::shared_ptr<Detector> detector_;
    ServiceOptions options_;
    SessionStore store_;
    mutable std::mutex registry_mu_;
    std::map<std::string, std::shared_ptr<Entry>> entries_;
    std::uint64_t next_id_ = 1;
};

}  // namespace irsis
