#include <gtest/gtest.h>

#include <httplib.h>

#include <json.hpp>
#include <map>
#include <thread>

#include "irsis/http_api.hpp"
#include "irsis/oracle.hpp"
#include "irsis/serialize.hpp"
#include "irsis/service.hpp"
#include "test_support.hpp"

using namespace irsis;
using namespace irsis::testing;
using nlohmann::json;

namespace {

CorruptionModel noise(std::uint64_t seed) {
    CorruptionModel m;
    m.seed = seed;
    m.p_drop_component = 0.5;
    m.min_morph_steps = 1;
    m.max_morph_steps = 2;
    m.max_salt_blobs = 3;
    m.box_prompt_fidelity_gain = 4;
    return m;
}

struct Fixture {
    std::shared_ptr<const RenderedScene> scene = rendered(two_capsule_scene(3));
    std::shared_ptr<Segmenter> seg = std::make_shared<NoisySegmenter>(scene, noise(11));
    std::shared_ptr<Detector> det = std::make_shared<OracleDetector>(scene);
    std::string png = encode_png(scene->image);

    SessionService service(const std::filesystem::path& root) const { return SessionService(seg, det, {root, {}}); }
};

std::map<std::string, std::string> tree(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = read_file(e.path());
    }
    return out;
}

ServiceError::Kind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ServiceError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected ServiceError";
    return ServiceError::Kind::Invalid;
}

}  // namespace

TEST(Service, CreateValidatesBeforePersisting) {
    TempDir d("svc_validate");
    Fixture f;
    auto svc = f.service(d.path());
    EXPECT_EQ(kind_of([&] { svc.create("", {"forceps"}); }), ServiceError::Kind::Invalid);
    EXPECT_EQ(kind_of([&] { svc.create(f.png, {""}); }), ServiceError::Kind::Invalid);
    EXPECT_EQ(kind_of([&] { svc.create("not a png", {"forceps"}); }), ServiceError::Kind::Invalid);
    EXPECT_EQ(kind_of([&] { svc.create(f.png, {"forceps", 3}); }), ServiceError::Kind::Invalid);
    AgentConfig bad;
    bad.max_iterations = 0;
    EXPECT_EQ(kind_of([&] { svc.create(f.png, {"forceps"}, bad); }), ServiceError::Kind::Invalid);
    EXPECT_TRUE(svc.list().empty());
    try {
        svc.create(f.png, {""});
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.field(), "query");
        EXPECT_EQ(e.http_status(), 400);
    }
}

TEST(Service, LifecycleAndErrors) {
    TempDir d("svc_life");
    Fixture f;
    auto svc = f.service(d.path());
    const auto snap = svc.create(f.png, {"surgical instrument"});
    const std::string id = snap->session.id;
    EXPECT_EQ(snap->image_png, f.png);
    EXPECT_EQ(read_file(d / id / "image.png"), f.png);
    EXPECT_EQ(kind_of([&] { svc.get("sess-999999"); }), ServiceError::Kind::NotFound);
    EXPECT_EQ(kind_of([&] { svc.mask(id, "final"); }), ServiceError::Kind::NotFound);
    EXPECT_EQ(svc.mask(id, "0"), snap->session.history[0].mask_in);

    while (!svc.get(id)->session.terminal()) svc.step(id);
    EXPECT_EQ(kind_of([&] { svc.step(id); }), ServiceError::Kind::Conflict);
    EXPECT_EQ(svc.finalize(id), *svc.get(id)->session.final_mask);
    EXPECT_EQ(svc.mask(id, "final"), *svc.get(id)->session.final_mask);
    EXPECT_EQ(rle_decode(read_file(d / id / "final.irle")), svc.mask(id, "final"));
}

TEST(Service, FeedbackIsStampedAndConsumed) {
    TempDir d("svc_feedback");
    Fixture f;
    auto svc = f.service(d.path());
    const std::string id = svc.create(f.png, {"surgical instrument"})->session.id;
    const auto box = f.scene->instruments[1].box;
    const auto fid = svc.submit_feedback(id, {0, BoxPrompt{box}, 0});
    EXPECT_EQ(svc.get(id)->session.pending_feedback.size(), 1u);
    EXPECT_EQ(svc.get(id)->session.pending_feedback[0].id, fid);
    const auto r = svc.step(id);
    EXPECT_EQ(r.record.feedback_applied, std::vector<std::uint64_t>{fid});
    EXPECT_TRUE(r.snapshot->session.pending_feedback.empty());
    EXPECT_EQ(kind_of([&] { svc.submit_feedback(id, {0, BoxPrompt{{0, 0, 500, 5}}, 0}); }), ServiceError::Kind::Invalid);
    svc.submit_feedback(id, {0, Accept{}, 0});
    EXPECT_EQ(svc.get(id)->session.state, SessionState::FinalizedByClinician);
    EXPECT_EQ(svc.get(id)->session.feedback_log.size(), 2u);
}

TEST(Service, PersistenceSurvivesRestartByteForByte) {
    TempDir d("svc_restart");
    Fixture f;
    std::string id;
    RefinementSession before;
    {
        auto svc = f.service(d.path());
        id = svc.create(f.png, {"bipolar forceps", 2})->session.id;
        svc.submit_feedback(id, {0, BoxPrompt{f.scene->instruments[0].box}, 0});
        svc.submit_feedback(id, {0, LanguageCorrection{"the curved one"}, 0});
        BinaryMask ref(f.scene->image.width(), f.scene->image.height());
        ref.fill_box({60, 40, 70, 48}, true);
        svc.submit_feedback(id, {0, ReferenceAnnotation{ref, {58, 38, 72, 50}}, 0});
        svc.step(id);
        before = svc.get(id)->session;
    }
    const auto files = tree(d / id);
    auto svc = f.service(d.path());
    const auto after = svc.get(id);
    EXPECT_EQ(after->session, before);
    SessionStore store(d / "copy");
    store.save(*after);
    EXPECT_EQ(tree(d / "copy" / id), files);
    const auto next = svc.create(f.png, {"forceps"})->session.id;
    EXPECT_NE(next, id);
}

TEST(Service, ConcurrentSessionsAndReaders) {
    TempDir d("svc_conc");
    Fixture f;
    auto svc = f.service(d.path());
    std::vector<std::string> ids(4);
    {
        std::vector<std::thread> threads;
        for (int i = 0; i < 4; ++i) {
            threads.emplace_back([&, i] { ids[i] = svc.create(f.png, {"surgical instrument"})->session.id; });
        }
        for (auto& t : threads) t.join();
    }
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 4u);
    std::atomic<int> conflicts{0}, reads{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] {
            const auto& id = ids[i % 4];
            for (int k = 0; k < 5; ++k) {
                try {
                    svc.step(id);
                } catch (const ServiceError& e) {
                    if (e.kind() == ServiceError::Kind::Conflict) ++conflicts;
                }
                const auto s = svc.get(id);
                if (!s->session.history.empty()) ++reads;
            }
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(reads.load(), 40);
    auto fresh = f.service(d.path());
    for (const auto& id : ids) {
        EXPECT_TRUE(svc.get(id)->session.terminal());
        EXPECT_EQ(fresh.get(id)->session, svc.get(id)->session);
    }
}

namespace {

struct ApiRig {
    TempDir dir{"api"};
    Fixture f;
    SessionService svc = f.service(dir.path());
    ApiServer api{svc};
    int port = api.start_background("127.0.0.1");
    httplib::Client client{"127.0.0.1", port};
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST(Api, HealthAndSessionFlow) {
    ApiRig rig;
    auto h = rig.client.Get("/healthz");
    ASSERT_TRUE(h);
    EXPECT_EQ(h->status, 200);
    EXPECT_EQ(body_of(h)["status"], "ok");

    const json req{{"image_png_b64", base64_encode(rig.f.png)}, {"query", "surgical instrument"}, {"level", 0}};
    auto c = rig.client.Post("/v1/sessions", req.dump(), "application/json");
    ASSERT_TRUE(c);
    ASSERT_EQ(c->status, 201) << c->body;
    const json created = body_of(c);
    const std::string id = created["id"];
    EXPECT_EQ(created["mask_irle"], rle_encode(rig.svc.get(id)->session.history[0].mask_in));

    const json fb{{"kind", "box_prompt"}, {"box", json_util::box_to_json(rig.f.scene->instruments[0].box)}};
    auto p = rig.client.Post("/v1/sessions/" + id + "/feedback", fb.dump(), "application/json");
    ASSERT_TRUE(p);
    EXPECT_EQ(p->status, 200);
    EXPECT_EQ(body_of(p)["pending_feedback"].size(), 1u);

    auto s = rig.client.Post("/v1/sessions/" + id + "/step", "", "application/json");
    ASSERT_TRUE(s);
    EXPECT_EQ(s->status, 200);
    EXPECT_EQ(body_of(s)["record"]["feedback_applied"], json::array({body_of(p)["feedback_id"]}));

    auto g = rig.client.Get("/v1/sessions/" + id);
    ASSERT_TRUE(g);
    EXPECT_EQ(body_of(g), json_util::session_to_json(rig.svc.get(id)->session));

    auto m0 = rig.client.Get("/v1/sessions/" + id + "/mask/0");
    ASSERT_TRUE(m0);
    EXPECT_EQ(m0->body, rle_encode(rig.svc.mask(id, "0")));

    auto fin = rig.client.Post("/v1/sessions/" + id + "/finalize", "", "application/json");
    ASSERT_TRUE(fin);
    EXPECT_EQ(fin->status, 200);
    auto mf = rig.client.Get("/v1/sessions/" + id + "/mask/final");
    EXPECT_EQ(mf->body, body_of(fin)["mask_irle"].get<std::string>());
    EXPECT_EQ(rle_decode(mf->body), rig.svc.mask(id, "final"));
}

TEST(Api, ErrorShapes) {
    ApiRig rig;
    auto bad = rig.client.Post("/v1/sessions", "{}", "application/json");
    EXPECT_EQ(bad->status, 400);
    EXPECT_EQ(body_of(bad)["field"], "image_png_b64");
    auto notjson = rig.client.Post("/v1/sessions", "nope", "application/json");
    EXPECT_EQ(notjson->status, 400);
    const json noquery{{"image_png_b64", base64_encode(rig.f.png)}};
    EXPECT_EQ(body_of(rig.client.Post("/v1/sessions", noquery.dump(), "application/json"))["field"], "query");
    auto missing = rig.client.Get("/v1/sessions/sess-424242");
    EXPECT_EQ(missing->status, 404);
    EXPECT_EQ(body_of(missing)["session_id"], "sess-424242");

    const std::string id = rig.svc.create(rig.f.png, {"surgical instrument"})->session.id;
    rig.svc.finalize(id);
    auto conflict = rig.client.Post("/v1/sessions/" + id + "/step", "", "application/json");
    EXPECT_EQ(conflict->status, 409);
    auto badfb = rig.client.Post("/v1/sessions/" + id + "/feedback", R"({"kind":"wave"})", "application/json");
    EXPECT_EQ(badfb->status, 400);
    EXPECT_EQ(body_of(badfb)["field"], "feedback");
}

TEST(Api, BackendOutageIs503AndResumable) {
    TempDir dir("api_outage");
    Fixture f;
    auto flaky = std::make_shared<CountingSegmenter>(f.seg);
    flaky->fail_text = true;
    SessionService svc(flaky, f.det, {dir.path(), {}});
    ApiServer api(svc);
    httplib::Client client("127.0.0.1", api.start_background("127.0.0.1"));
    const json req{{"image_png_b64", base64_encode(f.png)}, {"query", "forceps"}};
    auto r = client.Post("/v1/sessions", req.dump(), "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 503);
    const std::string id = body_of(r)["session_id"];
    flaky->fail_text = false;
    auto s = client.Post("/v1/sessions/" + id + "/step", "", "application/json");
    EXPECT_EQ(s->status, 200) << s->body;
    EXPECT_FALSE(svc.get(id)->session.history.empty());
}

TEST(Api, MatchesLibraryBitForBit) {
    ApiRig rig;
    Fixture f;
    const RefinementAgent agent(f.seg, f.det, {});
    auto session = agent.run_initial(std::make_shared<const RgbImage>(f.scene->image), {"surgical instrument"});
    const json req{{"image_png_b64", base64_encode(f.png)}, {"query", "surgical instrument"}};
    const std::string id = body_of(rig.client.Post("/v1/sessions", req.dump(), "application/json"))["id"];
    const auto fb = BoxPrompt{f.scene->instruments[1].box};
    agent.apply_feedback(session, {0, fb, session.history.back().t});
    rig.client.Post("/v1/sessions/" + id + "/feedback",
                    json{{"kind", "box_prompt"}, {"box", json_util::box_to_json(fb.box)}}.dump(), "application/json");
    while (!session.terminal()) {
        const auto lib = agent.step(session);
        auto r = rig.client.Post("/v1/sessions/" + id + "/step", "", "application/json");
        ASSERT_EQ(r->status, 200);
        EXPECT_EQ(body_of(r)["record"], json_util::record_to_json(lib, true));
    }
    EXPECT_EQ(rig.client.Get("/v1/sessions/" + id + "/mask/final")->body, rle_encode(*session.final_mask));
}
