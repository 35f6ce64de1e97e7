#include "irsis/service.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>

#include "irsis/serialize.hpp"

namespace irsis {

using json_util::json;

int ServiceError::http_status() const {
    switch (kind_) {
        case Kind::Invalid: return 400;
        case Kind::NotFound: return 404;
        case Kind::Conflict: return 409;
        case Kind::BackendUnavailable: return 503;
    }
    return 500;
}

namespace {

constexpr const char* kFormat = "irsis-session-1";

std::string numbered(const char* prefix, std::size_t n, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%03zu%s", prefix, n, suffix);
    return buf;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 64 || id[0] == '.') return false;
    for (char c : id) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
    }
    return true;
}

}  // namespace

SessionStore::SessionStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

bool SessionStore::exists(const std::string& id) const {
    return valid_id(id) && std::filesystem::is_regular_file(dir(id) / "manifest.json");
}

std::vector<std::string> SessionStore::list() const {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(root_)) {
        const std::string name = e.path().filename().string();
        if (e.is_directory() && valid_id(name) && exists(name)) out.push_back(name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void SessionStore::save(const SessionSnapshot& snap) const {
    const RefinementSession& s = snap.session;
    if (!valid_id(s.id)) throw InvalidArgument("invalid session id '" + s.id + "'");
    const auto tmp = root_ / ("." + s.id + ".tmp");
    const auto old = root_ / ("." + s.id + ".old");
    std::filesystem::remove_all(tmp);

    json history = json::array();
    for (std::size_t t = 0; t < s.history.size(); ++t) {
        const auto& r = s.history[t];
        json meta = json_util::record_to_json(r, false, false);
        meta["has_mask_out"] = r.mask_out.has_value();
        history.push_back(meta);
        write_file(tmp / "masks" / numbered("iter_", t, "_in.irle"), rle_encode(r.mask_in));
        if (r.mask_out) write_file(tmp / "masks" / numbered("iter_", t, "_out.irle"), rle_encode(*r.mask_out));
        json rep{{"report", r.report ? json_util::report_to_json(*r.report) : json(nullptr)},
                 {"refined_report", r.refined_report ? json_util::report_to_json(*r.refined_report) : json(nullptr)}};
        write_file(tmp / "reports" / numbered("iter_", t, ".json"), dump(rep));
    }
    json refs = json::array();
    for (std::size_t i = 0; i < s.references.size(); ++i) {
        const std::string file = "references/" + numbered("ref_", i, ".irle");
        refs.push_back({{"region", json_util::box_to_json(s.references[i].region)}, {"file", file}});
        write_file(tmp / file, rle_encode(s.references[i].content));
    }
    json dets = json::array();
    for (const auto& d : s.detections) dets.push_back(json_util::detection_to_json(d));
    json pending = json::array();
    for (const auto& f : s.pending_feedback) pending.push_back(f.id);

    const json manifest{
        {"format", kFormat},
        {"id", s.id},
        {"query", {{"text", s.query.text}, {"level", s.query.level ? json(*s.query.level) : json(nullptr)}}},
        {"corrections", s.corrections},
        {"config", json_util::config_to_json(snap.config)},
        {"state", to_string(s.state)},
        {"image", {{"file", "image.png"}, {"width", s.image->width()}, {"height", s.image->height()}}},
        {"detections", dets},
        {"target_indices", s.target_indices},
        {"fault", s.fault ? json(*s.fault) : json(nullptr)},
        {"next_feedback_id", s.next_feedback_id},
        {"pending_feedback", pending},
        {"history_length", s.history.size()},
        {"history", history},
        {"references", refs},
        {"has_final_mask", s.final_mask.has_value()},
    };
    write_file(tmp / "manifest.json", dump(manifest));
    write_file(tmp / "image.png", snap.image_png);
    std::string log;
    for (const auto& f : s.feedback_log) log += json_util::feedback_to_json(f).dump() + "\n";
    write_file(tmp / "feedback.jsonl", log);
    if (s.final_mask) write_file(tmp / "final.irle", rle_encode(*s.final_mask));

    const auto target = dir(s.id);
    std::filesystem::remove_all(old);
    if (std::filesystem::exists(target)) std::filesystem::rename(target, old);
    std::filesystem::rename(tmp, target);
    std::filesystem::remove_all(old);
}

SessionSnapshot SessionStore::load(const std::string& id) const {
    if (!exists(id)) throw Error("no stored session '" + id + "'");
    const auto d = dir(id);
    return json_util::guarded("session manifest", [&] {
        const json m = json::parse(read_file(d / "manifest.json"));
        if (m.at("format").get<std::string>() != kFormat) throw FormatError("unknown session format");
        SessionSnapshot snap;
        snap.image_png = read_file(d / "image.png");
        RefinementSession& s = snap.session;
        s.id = m.at("id").get<std::string>();
        s.image = std::make_shared<const RgbImage>(decode_png(snap.image_png));
        s.query.text = m.at("query").at("text").get<std::string>();
        if (!m.at("query").at("level").is_null()) s.query.level = m.at("query").at("level").get<int>();
        s.corrections = m.at("corrections").get<std::vector<std::string>>();
        snap.config = json_util::config_from_json(m.at("config"));
        s.state = state_from_string(m.at("state").get<std::string>());
        for (const auto& dj : m.at("detections")) s.detections.push_back(json_util::detection_from_json(dj));
        s.target_indices = m.at("target_indices").get<std::vector<std::size_t>>();
        if (!m.at("fault").is_null()) s.fault = m.at("fault").get<std::string>();
        s.next_feedback_id = m.at("next_feedback_id").get<std::uint64_t>();

        const auto& hist = m.at("history");
        if (hist.size() != m.at("history_length").get<std::size_t>()) throw FormatError("history length mismatch");
        for (std::size_t t = 0; t < hist.size(); ++t) {
            const json& h = hist[t];
            IterationRecord r;
            r.t = h.at("t").get<int>();
            if (!h.at("strategy").is_null()) r.strategy = strategy_from_string(h.at("strategy").get<std::string>());
            for (const auto& g : h.at("refined")) r.refined.push_back(json_util::region_from_json(g));
            r.feedback_applied = h.at("feedback_applied").get<std::vector<std::uint64_t>>();
            r.faults = h.at("faults").get<std::vector<std::string>>();
            r.mask_in = rle_decode(read_file(d / "masks" / numbered("iter_", t, "_in.irle")));
            if (h.at("has_mask_out").get<bool>()) {
                r.mask_out = rle_decode(read_file(d / "masks" / numbered("iter_", t, "_out.irle")));
            }
            const json rep = json::parse(read_file(d / "reports" / numbered("iter_", t, ".json")));
            if (!rep.at("report").is_null()) r.report = json_util::report_from_json(rep.at("report"));
            if (!rep.at("refined_report").is_null()) r.refined_report = json_util::report_from_json(rep.at("refined_report"));
            s.history.push_back(std::move(r));
        }
        for (const auto& rj : m.at("references")) {
            s.references.push_back({json_util::box_from_json(rj.at("region")),
                                    rle_decode(read_file(d / rj.at("file").get<std::string>()))});
        }
        std::ifstream log(d / "feedback.jsonl");
        std::string line;
        while (std::getline(log, line)) {
            if (!line.empty()) s.feedback_log.push_back(json_util::feedback_from_json(json::parse(line)));
        }
        for (const auto& pid : m.at("pending_feedback")) {
            const auto want = pid.get<std::uint64_t>();
            auto it = std::find_if(s.feedback_log.begin(), s.feedback_log.end(),
                                   [&](const ClinicianFeedback& f) { return f.id == want; });
            if (it == s.feedback_log.end()) throw FormatError("pending feedback id not in the log");
            s.pending_feedback.push_back(*it);
        }
        if (m.at("has_final_mask").get<bool>()) s.final_mask = rle_decode(read_file(d / "final.irle"));
        return snap;
    });
}

std::shared_ptr<const SessionSnapshot> SessionService::Entry::load() const {
    std::lock_guard lock(snap_mu);
    if (!snap) throw ServiceError(ServiceError::Kind::NotFound, "session is still being created");
    return snap;
}

void SessionService::Entry::commit(std::shared_ptr<const SessionSnapshot> s) {
    std::lock_guard lock(snap_mu);
    snap = std::move(s);
}

SessionService::SessionService(std::shared_ptr<Segmenter> segmenter, std::shared_ptr<Detector> detector,
                               ServiceOptions options)
    : segmenter_(std::move(segmenter)), detector_(std::move(detector)), options_(std::move(options)),
      store_(options_.root) {
    if (!segmenter_ || !detector_) throw InvalidArgument("service needs a segmenter and a detector");
    options_.defaults.validate();
    for (const auto& id : store_.list()) {
        unsigned long long n = 0;
        if (std::sscanf(id.c_str(), "sess-%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
    }
}

RefinementAgent SessionService::agent_for(const AgentConfig& config) const {
    return RefinementAgent(segmenter_, detector_, config);
}

std::shared_ptr<SessionService::Entry> SessionService::entry(const std::string& id) {
    std::lock_guard lock(registry_mu_);
    if (auto it = entries_.find(id); it != entries_.end()) return it->second;
    if (!store_.exists(id)) throw ServiceError(ServiceError::Kind::NotFound, "no session '" + id + "'", "", id);
    auto e = std::make_shared<Entry>();
    e->snap = std::make_shared<const SessionSnapshot>(store_.load(id));
    entries_.emplace(id, e);
    return e;
}

std::shared_ptr<const SessionSnapshot> SessionService::commit(Entry& e, SessionSnapshot snap) {
    store_.save(snap);
    auto shared = std::make_shared<const SessionSnapshot>(std::move(snap));
    e.commit(shared);
    return shared;
}

std::shared_ptr<const SessionSnapshot> SessionService::create(std::string image_png, Query query,
                                                              std::optional<AgentConfig> config) {
    if (image_png.empty()) throw ServiceError(ServiceError::Kind::Invalid, "image is empty", "image");
    if (query.text.empty()) throw ServiceError(ServiceError::Kind::Invalid, "query is required", "query");
    if (query.level && (*query.level < 0 || *query.level > 2)) {
        throw ServiceError(ServiceError::Kind::Invalid, "level must be 0, 1 or 2", "level");
    }
    std::shared_ptr<const RgbImage> image;
    try {
        image = std::make_shared<const RgbImage>(decode_png(image_png));
    } catch (const Error& e) {
        throw ServiceError(ServiceError::Kind::Invalid, std::string("image is not a readable PNG: ") + e.what(), "image");
    }
    const AgentConfig cfg = config.value_or(options_.defaults);
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ServiceError(ServiceError::Kind::Invalid, e.what(), "config");
    }

    auto e = std::make_shared<Entry>();
    std::string id;
    {
        std::lock_guard lock(registry_mu_);
        char buf[32];
        do {
            std::snprintf(buf, sizeof buf, "sess-%06llu", static_cast<unsigned long long>(next_id_++));
        } while (store_.exists(buf) || entries_.count(buf));
        id = buf;
        entries_.emplace(id, e);
    }
    std::lock_guard op(e->op);
    SessionSnapshot snap;
    snap.config = cfg;
    snap.image_png = std::move(image_png);
    snap.session = agent_for(cfg).run_initial(image, std::move(query), id);
    const bool faulted = snap.session.fault.has_value();
    const std::string fault = faulted ? *snap.session.fault : std::string();
    auto committed = commit(*e, std::move(snap));
    if (faulted) throw ServiceError(ServiceError::Kind::BackendUnavailable, fault, "", id);
    return committed;
}

StepResult SessionService::step(const std::string& id) {
    auto e = entry(id);
    std::lock_guard op(e->op);
    SessionSnapshot snap = *e->load();
    if (snap.session.terminal()) {
        throw ServiceError(ServiceError::Kind::Conflict,
                           std::string("session is ") + to_string(snap.session.state), "", id);
    }
    IterationRecord rec;
    try {
        rec = agent_for(snap.config).step(snap.session);
    } catch (const BackendError& be) {
        commit(*e, std::move(snap));
        throw ServiceError(ServiceError::Kind::BackendUnavailable, be.what(), "", id);
    }
    return {std::move(rec), commit(*e, std::move(snap))};
}

std::uint64_t SessionService::submit_feedback(const std::string& id, ClinicianFeedback fb) {
    auto e = entry(id);
    std::lock_guard op(e->op);
    SessionSnapshot snap = *e->load();
    if (snap.session.history.empty()) {
        throw ServiceError(ServiceError::Kind::Conflict, "session has no iteration yet", "", id);
    }
    fb.id = 0;
    fb.received_at_iteration = snap.session.history.back().t;
    std::uint64_t fid = 0;
    try {
        fid = agent_for(snap.config).apply_feedback(snap.session, std::move(fb));
    } catch (const SessionStateError& se) {
        throw ServiceError(ServiceError::Kind::Conflict, se.what(), "", id);
    } catch (const Error& err) {
        throw ServiceError(ServiceError::Kind::Invalid, err.what(), "feedback", id);
    }
    commit(*e, std::move(snap));
    return fid;
}

std::shared_ptr<const SessionSnapshot> SessionService::get(const std::string& id) { return entry(id)->load(); }

BinaryMask SessionService::finalize(const std::string& id) {
    auto e = entry(id);
    std::lock_guard op(e->op);
    SessionSnapshot snap = *e->load();
    if (snap.session.terminal()) return *snap.session.final_mask;
    if (snap.session.history.empty()) {
        throw ServiceError(ServiceError::Kind::Conflict, "session has no mask to finalize", "", id);
    }
    BinaryMask m = agent_for(snap.config).finalize(snap.session);
    commit(*e, std::move(snap));
    return m;
}

BinaryMask SessionService::mask(const std::string& id, const std::string& which) {
    const auto snap = get(id);
    const auto& s = snap->session;
    if (which == "final") {
        if (!s.final_mask) throw ServiceError(ServiceError::Kind::NotFound, "session has no final mask yet", "", id);
        return *s.final_mask;
    }
    std::size_t t = 0;
    const bool numeric = !which.empty() && which.size() < 10 &&
                         std::all_of(which.begin(), which.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (numeric) t = std::stoul(which);
    if (!numeric || t >= s.history.size()) {
        throw ServiceError(ServiceError::Kind::NotFound, "no mask '" + which + "' in session", "", id);
    }
    return s.history[t].mask_in;
}

}  // namespace irsis
