// irsis: command-line entry points for refinement runs, evaluation, corpus
// tooling, the session service and mock model backends.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "irsis/agent.hpp"
#include "irsis/dataset.hpp"
#include "irsis/eval.hpp"
#include "irsis/http_api.hpp"
#include "irsis/oracle.hpp"
#include "irsis/remote.hpp"
#include "irsis/rng.hpp"
#include "irsis/scene.hpp"
#include "irsis/serialize.hpp"
#include "irsis/service.hpp"
#include "irsis/train_math.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace irsis;

namespace {

constexpr int kExitError = 1;
constexpr int kExitBackend = 3;

struct BackendFlags {
    std::string segmenter_url;
    std::string detector_url;
    std::string backend_url;
    bool mock = false;
    std::optional<std::uint64_t> seed;
    int instruments = 3;
    int width = 160;
    int height = 128;
    double p_drop = 0.5;
    int morph_min = 1;
    int morph_max = 2;
    int salt_min = 0;
    int salt_max = 3;
    double gain = 4.0;
    int jitter = 0;
    int suppress = 0;
    bool exact = false;
};

struct AgentFlags {
    double tau_c = 0.85;
    double tau_o = 0.50;
    int max_iters = 3;
    int kernel = 5;
    std::string detection_prompt{kDefaultDetectionPrompt};

    AgentConfig config() const {
        AgentConfig c;
        c.thresholds = {tau_c, tau_o};
        c.max_iterations = max_iters;
        c.kernel = StructuringElement::square(kernel);
        c.detection_prompt = detection_prompt;
        c.validate();
        return c;
    }
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f, bool with_remote) {
    CLI::Option* mock = cmd->add_flag("--mock", f.mock, "Use seeded synthetic scene and oracle backends");
    cmd->add_option("--seed", f.seed, "Seed for the mock scene and backends (required with --mock)");
    cmd->add_option("--instruments", f.instruments, "Mock scene instrument count")->check(CLI::Range(0, 4));
    cmd->add_option("--width", f.width, "Mock scene width")->check(CLI::Range(32, 4096));
    cmd->add_option("--height", f.height, "Mock scene height")->check(CLI::Range(32, 4096));
    cmd->add_option("--p-drop", f.p_drop, "Noisy segmenter component drop probability")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--morph-min", f.morph_min, "Noisy segmenter minimum dilate/erode steps")->check(CLI::NonNegativeNumber);
    cmd->add_option("--morph-max", f.morph_max, "Noisy segmenter maximum dilate/erode steps")->check(CLI::NonNegativeNumber);
    cmd->add_option("--salt-min", f.salt_min, "Noisy segmenter minimum salt blobs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--salt-max", f.salt_max, "Noisy segmenter maximum salt blobs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--fidelity-gain", f.gain, "Corruption divisor for box-prompted calls")->check(CLI::Range(1.0, 1e6));
    cmd->add_option("--jitter", f.jitter, "Mock detector per-edge jitter in pixels")->check(CLI::NonNegativeNumber);
    cmd->add_option("--suppress", f.suppress, "Instruments the mock detector misses")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--exact", f.exact, "Mock segmenter returns ground truth (no corruption)");
    if (with_remote) {
        auto* s = cmd->add_option("--segmenter-url", f.segmenter_url, "Segmenter backend base URL");
        auto* d = cmd->add_option("--detector-url", f.detector_url, "Detector backend base URL");
        auto* b = cmd->add_option("--backend-url", f.backend_url, "Base URL serving both backends");
        mock->excludes(s)->excludes(d)->excludes(b);
    }
}

void add_agent_flags(CLI::App* cmd, AgentFlags& f) {
    cmd->add_option("--tau-c", f.tau_c, "Coverage threshold")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--tau-o", f.tau_o, "Box overlap threshold")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--max-iters", f.max_iters, "Maximum refinement iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--kernel", f.kernel, "Morphology kernel side (odd)")->check(CLI::PositiveNumber);
    cmd->add_option("--detection-prompt", f.detection_prompt, "Prompt sent to the detector");
}

struct MockWorld {
    std::shared_ptr<const RenderedScene> scene;
    std::shared_ptr<Segmenter> segmenter;
    std::shared_ptr<OracleDetector> detector;
};

MockWorld make_mock(const BackendFlags& f, std::uint64_t seed) {
    SceneOptions so;
    so.width = f.width;
    so.height = f.height;
    so.instruments = f.instruments;
    MockWorld w;
    w.scene = std::make_shared<const RenderedScene>(render_scene(random_scene(seed, so)));
    if (f.exact) {
        w.segmenter = std::make_shared<OracleSegmenter>(w.scene);
    } else {
        CorruptionModel m;
        m.seed = mix_seed(seed, 11);
        m.p_drop_component = f.p_drop;
        m.min_morph_steps = f.morph_min;
        m.max_morph_steps = std::max(f.morph_min, f.morph_max);
        m.min_salt_blobs = f.salt_min;
        m.max_salt_blobs = std::max(f.salt_min, f.salt_max);
        m.box_prompt_fidelity_gain = f.gain;
        w.segmenter = std::make_shared<NoisySegmenter>(w.scene, m);
    }
    w.detector = std::make_shared<OracleDetector>(w.scene, DetectorNoise{mix_seed(seed, 13), f.jitter, f.suppress});
    return w;
}

std::pair<std::shared_ptr<Segmenter>, std::shared_ptr<Detector>> make_remote(const BackendFlags& f) {
    const std::string seg = !f.segmenter_url.empty() ? f.segmenter_url : f.backend_url;
    const std::string det = !f.detector_url.empty() ? f.detector_url : f.backend_url;
    if (seg.empty() || det.empty()) {
        throw InvalidArgument("give --mock --seed N, or backend URLs (--backend-url or --segmenter-url and --detector-url)");
    }
    return {std::make_shared<RemoteSegmenter>(seg), std::make_shared<RemoteDetector>(det)};
}

void require_seed(const BackendFlags& f) {
    if (f.mock && !f.seed) throw InvalidArgument("--mock requires --seed");
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Mask tinted green over the image, detection boxes in red, refined boxes in
// yellow.
RgbImage overlay(const RgbImage& image, const BinaryMask& mask, const std::vector<Detection>& detections,
                 const std::vector<BoundingBox>& refined) {
    RgbImage out = image;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (!mask.get(x, y)) continue;
            const Rgb c = image.at(x, y);
            out.put(x, y, {static_cast<std::uint8_t>(c.r / 2), static_cast<std::uint8_t>((c.g + 255) / 2),
                           static_cast<std::uint8_t>(c.b / 2)});
        }
    }
    auto outline = [&](const BoundingBox& b, Rgb c) {
        for (int x = b.x0; x < b.x1; ++x) {
            out.put(x, b.y0, c);
            out.put(x, b.y1 - 1, c);
        }
        for (int y = b.y0; y < b.y1; ++y) {
            out.put(b.x0, y, c);
            out.put(b.x1 - 1, y, c);
        }
    };
    for (const auto& d : detections) outline(d.box, {230, 40, 40});
    for (const auto& b : refined) outline(b, {240, 220, 40});
    return out;
}

std::vector<ClinicianFeedback> load_feedback_script(const fs::path& path) {
    std::vector<ClinicianFeedback> out;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json_util::feedback_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

int refinement_rounds(const RefinementSession& s) {
    int n = 0;
    for (const auto& r : s.history) n += r.strategy == Strategy::MultiInstrument ? 1 : 0;
    return n;
}

// Writes final.irle, final.png, masks/, iterations/ and summary.json.
json write_run(const fs::path& out, const RefinementSession& s, const AgentConfig& cfg, const json& extra) {
    const BinaryMask& final_mask = *s.final_mask;
    write_file(out / "final.irle", rle_encode(final_mask));
    std::vector<BoundingBox> refined;
    for (const auto& r : s.history) {
        for (const auto& g : r.refined) refined.push_back(g.box);
    }
    write_file(out / "final.png", encode_png(overlay(*s.image, final_mask, s.detections, refined)));
    json records = json::array();
    for (const auto& r : s.history) {
        char name[32];
        std::snprintf(name, sizeof name, "iter_%03d", r.t);
        write_file(out / "masks" / (std::string(name) + "_in.irle"), rle_encode(r.mask_in));
        if (r.mask_out) write_file(out / "masks" / (std::string(name) + "_out.irle"), rle_encode(*r.mask_out));
        const json rj = json_util::record_to_json(r, false);
        write_file(out / "iterations" / (std::string(name) + ".json"), rj.dump(2) + "\n");
        records.push_back(rj);
    }
    json dets = json::array();
    for (const auto& d : s.detections) dets.push_back(json_util::detection_to_json(d));
    json summary{{"query", s.query.text},
                 {"effective_query", s.effective_query()},
                 {"level", s.query.level ? json(*s.query.level) : json(nullptr)},
                 {"image", {{"width", s.image->width()}, {"height", s.image->height()}}},
                 {"state", to_string(s.state)},
                 {"refinement_iterations", refinement_rounds(s)},
                 {"history_length", s.history.size()},
                 {"config", json_util::config_to_json(cfg)},
                 {"detections", dets},
                 {"iterations", records},
                 {"final_mask", "final.irle"},
                 {"final_area", final_mask.area()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) summary[it.key()] = it.value();
    write_file(out / "summary.json", summary.dump(2) + "\n");
    return summary;
}

// ---------------------------------------------------------------- run

struct RunArgs {
    BackendFlags backend;
    AgentFlags agent;
    std::string image;
    std::string query = "surgical instrument";
    std::optional<int> level;
    std::string out;
    std::string feedback;
    bool json_out = false;
};

int cmd_run(const RunArgs& a) {
    require_seed(a.backend);
    const AgentConfig cfg = a.agent.config();
    std::shared_ptr<const RgbImage> image;
    std::shared_ptr<Segmenter> seg;
    std::shared_ptr<Detector> det;
    json extra = json::object();
    std::optional<MockWorld> world;
    if (a.backend.mock) {
        world = make_mock(a.backend, *a.backend.seed);
        image = std::make_shared<const RgbImage>(world->scene->image);
        seg = world->segmenter;
        det = world->detector;
    } else {
        if (a.image.empty()) throw InvalidArgument("--image is required without --mock");
        if (!fs::is_regular_file(a.image)) throw Error("image not found: '" + a.image + "'");
        image = std::make_shared<const RgbImage>(decode_png(read_file(a.image)));
        std::tie(seg, det) = make_remote(a.backend);
    }
    std::vector<ClinicianFeedback> script;
    if (!a.feedback.empty()) script = load_feedback_script(a.feedback);

    RefinementAgent agent(seg, det, cfg);
    RefinementSession s;
    try {
        s = agent.run_to_completion(image, Query{a.query, a.level}, script);
    } catch (const AgentFault& f) {
        std::cerr << "irsis run: backend failure: " << f.what() << "\n";
        return kExitBackend;
    }
    const fs::path out(a.out);
    if (world) {
        const BinaryMask truth = truth_for_query(*world->scene, a.query);
        write_file(out / "image.png", encode_png(world->scene->image));
        write_file(out / "ground_truth.irle", rle_encode(truth));
        extra["mock"] = {{"seed", *a.backend.seed},
                         {"instruments", world->scene->instruments.size()},
                         {"initial_iou", iou(s.history.front().mask_in, truth)},
                         {"final_iou", iou(*s.final_mask, truth)}};
    }
    const json summary = write_run(out, s, cfg, extra);
    if (a.json_out) {
        emit(summary);
    } else {
        std::cerr << "state " << summary["state"].get<std::string>() << ", " << refinement_rounds(s)
                  << " refinement iteration(s), final area " << s.final_mask->area() << "\n";
        if (world) {
            std::cerr << "IoU vs ground truth: initial " << fmt(extra["mock"]["initial_iou"].get<double>()) << ", final "
                      << fmt(extra["mock"]["final_iou"].get<double>()) << "\n";
        }
        std::cerr << "wrote " << (out / "summary.json").string() << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- batch

struct BatchArgs {
    BackendFlags backend;
    AgentFlags agent;
    std::string images_dir;
    std::string query = "surgical instrument";
    std::string out;
    int count = 10;
    int jobs = 1;
    bool json_out = false;
};

int cmd_batch(const BatchArgs& a) {
    require_seed(a.backend);
    const AgentConfig cfg = a.agent.config();
    const fs::path out(a.out);
    struct Item {
        std::string name;
        fs::path image;
        std::uint64_t seed = 0;
    };
    std::vector<Item> items;
    if (a.backend.mock) {
        for (int i = 0; i < a.count; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "scene_%04d", i);
            items.push_back({name, {}, *a.backend.seed + static_cast<std::uint64_t>(i)});
        }
    } else {
        if (a.images_dir.empty()) throw InvalidArgument("--images is required without --mock");
        if (!fs::is_directory(a.images_dir)) throw Error("not a directory: '" + a.images_dir + "'");
        for (const auto& e : fs::directory_iterator(a.images_dir)) {
            if (e.is_regular_file() && e.path().extension() == ".png") items.push_back({e.path().stem().string(), e.path(), 0});
        }
        std::sort(items.begin(), items.end(), [](const Item& x, const Item& y) { return x.name < y.name; });
    }
    std::shared_ptr<Segmenter> remote_seg;
    std::shared_ptr<Detector> remote_det;
    if (!a.backend.mock) std::tie(remote_seg, remote_det) = make_remote(a.backend);

    std::vector<json> rows(items.size());
    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            const Item& it = items[i];
            json row{{"name", it.name}};
            try {
                std::shared_ptr<const RgbImage> image;
                std::shared_ptr<Segmenter> seg = remote_seg;
                std::shared_ptr<Detector> det = remote_det;
                std::optional<MockWorld> world;
                if (a.backend.mock) {
                    world = make_mock(a.backend, it.seed);
                    image = std::make_shared<const RgbImage>(world->scene->image);
                    seg = world->segmenter;
                    det = world->detector;
                } else {
                    image = std::make_shared<const RgbImage>(decode_png(read_file(it.image)));
                }
                const auto s = RefinementAgent(seg, det, cfg).run_to_completion(image, Query{a.query, std::nullopt});
                write_file(out / "pred" / (it.name + ".irle"), rle_encode(*s.final_mask));
                row["state"] = to_string(s.state);
                row["refinement_iterations"] = refinement_rounds(s);
                if (world) {
                    const BinaryMask truth = truth_for_query(*world->scene, a.query);
                    write_file(out / "gt" / (it.name + ".irle"), rle_encode(truth));
                    row["seed"] = it.seed;
                    row["initial_iou"] = iou(s.history.front().mask_in, truth);
                    row["final_iou"] = iou(*s.final_mask, truth);
                }
            } catch (const std::exception& e) {
                row["error"] = e.what();
                ++failures;
            }
            rows[i] = std::move(row);
        }
    };
    std::vector<std::thread> pool;
    for (int j = 1; j < std::max(1, a.jobs); ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    json summary{{"count", items.size()}, {"failures", failures.load()}, {"images", rows}};
    if (a.backend.mock) {
        double si = 0, sf = 0;
        std::size_t n = 0;
        for (const auto& r : rows) {
            if (!r.contains("final_iou")) continue;
            si += r["initial_iou"].get<double>();
            sf += r["final_iou"].get<double>();
            ++n;
        }
        summary["mean_initial_iou"] = n ? si / n : 0.0;
        summary["mean_final_iou"] = n ? sf / n : 0.0;
    }
    write_file(out / "batch_summary.json", summary.dump(2) + "\n");
    if (a.json_out) {
        emit(summary);
    } else {
        std::cerr << items.size() << " image(s), " << failures.load() << " failure(s)";
        if (a.backend.mock) {
            std::cerr << ", mean IoU initial " << fmt(summary["mean_initial_iou"].get<double>()) << " final "
                      << fmt(summary["mean_final_iou"].get<double>());
        }
        std::cerr << "\n";
    }
    return failures.load() == 0 ? 0 : kExitError;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& labels, bool json_out) {
    std::optional<std::map<std::string, std::string>> lab;
    if (!labels.empty()) lab = load_class_labels(labels);
    const EvalReport r = batch_eval(pred, gt, lab);
    if (json_out) {
        std::cout << r.to_json() << std::endl;
    } else {
        std::cerr << "images " << r.n_images << "  mean Dice " << fmt(r.mean_dice) << "  mean IoU " << fmt(r.mean_iou)
                  << "  mean class IoU " << fmt(r.mean_class_iou) << "\n";
        for (const auto& c : r.per_class) std::cerr << "  " << c.label << ": IoU " << fmt(c.iou) << " (n=" << c.n << ")\n";
        for (const auto& u : r.unmatched) std::cerr << "  unmatched " << u << "\n";
        for (const auto& e : r.errors) std::cerr << "  error " << e.file << ": " << e.message << "\n";
    }
    return r.errors.empty() && r.unmatched.empty() ? 0 : kExitError;
}

// ---------------------------------------------------------------- corpus

int cmd_expand(const std::string& corpus, const std::string& out, bool json_out) {
    LoadedCorpus c = load_corpus(corpus);
    ExpandResult ex = expand(c.annotations);
    const std::string body = expanded_jsonl(ex.samples);
    if (!out.empty()) write_file(out, body);
    json errs = json::array();
    for (const auto& e : c.errors) errs.push_back({{"line", e.line}, {"message", e.message}});
    for (const auto& e : ex.errors) {
        errs.push_back({{"line", c.annotation_lines.at(e.line - 1)}, {"message", e.message}});
    }
    if (json_out) {
        emit(json{{"annotations", c.annotations.size()}, {"samples", ex.samples.size()}, {"errors", errs}});
    } else {
        if (out.empty()) std::cout << body;
        std::cerr << c.annotations.size() << " annotation(s) -> " << ex.samples.size() << " sample(s)";
        if (!errs.empty()) std::cerr << ", " << errs.size() << " error(s)";
        std::cerr << "\n";
        for (const auto& e : errs) std::cerr << "  line " << e["line"] << ": " << e["message"].get<std::string>() << "\n";
    }
    return errs.empty() ? 0 : kExitError;
}

int cmd_validate(const std::string& corpus, bool check_files, bool json_out) {
    const CorpusStats st = validate_corpus(corpus, check_files);
    json vocab = json::array();
    for (const auto& level : st.vocabulary) vocab.push_back(level);
    json errs = json::array();
    for (const auto& e : st.errors) errs.push_back({{"line", e.line}, {"message", e.message}});
    if (json_out) {
        emit(json{{"images", st.images},
                  {"annotations", st.annotations},
                  {"expanded", st.expanded},
                  {"expanded_records", st.expanded_records},
                  {"divisible_by_3", st.divisible_by_3},
                  {"vocabulary", vocab},
                  {"errors", errs},
                  {"ok", st.ok()}});
    } else {
        std::cerr << "images " << st.images << "  annotations " << st.annotations << "  expanded " << st.expanded
                  << (st.divisible_by_3 ? "" : " (not a multiple of 3)") << "\n";
        for (int l = 0; l < 3; ++l) std::cerr << "  L" << l << " vocabulary: " << st.vocabulary[l].size() << " queries\n";
        for (const auto& e : st.errors) std::cerr << "  line " << e.line << ": " << e.message << "\n";
        std::cerr << (st.ok() ? "corpus OK" : "corpus has errors") << "\n";
    }
    return st.ok() ? 0 : kExitError;
}

// ---------------------------------------------------------------- servers

std::atomic<bool> g_stop{false};

void wait_for_signal() {
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

struct ServeArgs {
    BackendFlags backend;
    AgentFlags agent;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string root = "irsis-sessions";
    bool json_out = false;
};

int cmd_serve(const ServeArgs& a) {
    require_seed(a.backend);
    std::shared_ptr<Segmenter> seg;
    std::shared_ptr<Detector> det;
    json info{{"root", a.root}};
    if (a.backend.mock) {
        MockWorld w = make_mock(a.backend, *a.backend.seed);
        seg = w.segmenter;
        det = w.detector;
        const fs::path scene_png = fs::path(a.root) / "mock_scene.png";
        write_file(scene_png, encode_png(w.scene->image));
        info["mock_scene_image"] = scene_png.string();
    } else {
        std::tie(seg, det) = make_remote(a.backend);
    }
    SessionService service(seg, det, ServiceOptions{a.root, a.agent.config()});
    ApiServer server(service);
    const int port = server.start_background(a.host, a.port);
    info["host"] = a.host;
    info["port"] = port;
    if (a.json_out) {
        emit(info);
    } else {
        std::cerr << "irsis service listening on http://" << a.host << ":" << port << " (sessions in " << a.root << ")\n";
    }
    wait_for_signal();
    server.stop();
    return 0;
}

struct MockBackendArgs {
    BackendFlags backend;
    std::string host = "127.0.0.1";
    int port = 8090;
    std::string write_image;
    bool json_out = false;
};

int cmd_mock_backend(const MockBackendArgs& a) {
    if (!a.backend.seed) throw InvalidArgument("mock-backend requires --seed");
    MockWorld w = make_mock(a.backend, *a.backend.seed);
    if (!a.write_image.empty()) write_file(a.write_image, encode_png(w.scene->image));
    BackendServer server(w.segmenter, w.detector, w.segmenter->kind());
    const int port = server.start_background(a.host, a.port);
    if (a.json_out) {
        emit(json{{"host", a.host}, {"port", port}, {"backend_kind", w.segmenter->kind()},
                  {"instruments", w.scene->instruments.size()}});
    } else {
        std::cerr << "mock backend (" << w.segmenter->kind() << ") listening on http://" << a.host << ":" << port << "\n";
    }
    wait_for_signal();
    server.stop();
    return 0;
}

// ---------------------------------------------------------------- training config

struct TrainArgs {
    std::string preset = "standard";
    int backbone_layers = 4;
    std::string out;
    bool json_out = false;
};

int cmd_emit_train_config(const TrainArgs& a) {
    const LossWeights w = a.preset == "normalized" ? LossWeights::normalized() : LossWeights::standard();
    const FocalParams fp;
    const MatchSpec ms;
    const LrSchedule lr;
    const auto groups = default_param_groups(a.backbone_layers);
    const auto table = emit_schedule(lr, groups);
    json gj = json::array();
    for (const auto& g : groups) {
        gj.push_back({{"name", g.name},
                      {"kind", g.kind == GroupKind::Decoder ? "decoder" : g.kind == GroupKind::Backbone ? "backbone" : "text"},
                      {"depth", g.depth},
                      {"peak_lr", lr.peak(g)}});
    }
    const json cfg{
        {"loss_weights", {{"mask", w.mask}, {"dice", w.dice}, {"ce", w.ce}, {"presence", w.presence}}},
        {"focal", {{"alpha", fp.alpha}, {"gamma", fp.gamma}}},
        {"dice_smooth", 1.0},
        {"matching", {{"topk", ms.topk}, {"one_to_many_weight", ms.one_to_many_weight}}},
        {"schedule",
         {{"decoder_lr", lr.decoder_lr},
          {"backbone_lr", lr.backbone_lr},
          {"layer_decay", lr.layer_decay},
          {"text_encoder", "frozen"},
          {"warmup_epochs", lr.warmup_epochs},
          {"decay_epochs", lr.decay_epochs},
          {"cooldown_epochs", lr.cooldown_epochs},
          {"final_fraction", lr.final_fraction},
          {"groups", gj}}},
        {"augmentation",
         {{"gamma_range", {0.8, 1.2}}, {"p_specular", 0.3}, {"p_shadow", 0.3}}}};
    if (!a.out.empty()) {
        write_file(fs::path(a.out) / "train_config.json", cfg.dump(2) + "\n");
        write_file(fs::path(a.out) / "lr_schedule.csv", schedule_csv(table));
    }
    if (a.json_out || a.out.empty()) {
        emit(cfg);
    } else {
        std::cerr << "wrote train_config.json and lr_schedule.csv (" << table.size() << " rows) to " << a.out << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"irsis: quality-gated iterative refinement for language-prompted surgical segmentation"};
    app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags take precedence");
    app.require_subcommand(1);
    app.set_version_flag("--version", "irsis 1.0.0");

    RunArgs run;
    auto* c_run = app.add_subcommand("run", "Segment one image (or a mock scene) and refine it");
    c_run->add_option("--image", run.image, "Input PNG");
    c_run->add_option("--query", run.query, "Text query");
    c_run->add_option("--level", run.level, "Query level (0 general, 1 category, 2 specific)")->check(CLI::Range(0, 2));
    c_run->add_option("--out", run.out, "Output directory")->required();
    c_run->add_option("--feedback", run.feedback, "JSONL clinician feedback script")->check(CLI::ExistingFile);
    c_run->add_flag("--json", run.json_out, "Print the summary as JSON on stdout");
    add_backend_flags(c_run, run.backend, true);
    add_agent_flags(c_run, run.agent);

    BatchArgs batch;
    auto* c_batch = app.add_subcommand("batch", "Run every PNG in a directory (or N mock scenes)");
    c_batch->add_option("--images", batch.images_dir, "Directory of PNG images");
    c_batch->add_option("--query", batch.query, "Text query");
    c_batch->add_option("--count", batch.count, "Mock scene count")->check(CLI::PositiveNumber);
    c_batch->add_option("--jobs", batch.jobs, "Parallel workers")->check(CLI::PositiveNumber);
    c_batch->add_option("--out", batch.out, "Output directory")->required();
    c_batch->add_flag("--json", batch.json_out, "Print the summary as JSON on stdout");
    add_backend_flags(c_batch, batch.backend, true);
    add_agent_flags(c_batch, batch.agent);

    std::string pred_dir, gt_dir, labels;
    bool eval_json = false;
    auto* c_eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
    c_eval->add_option("--pred", pred_dir, "Directory of predicted .irle masks")->required();
    c_eval->add_option("--gt", gt_dir, "Directory of ground-truth .irle masks")->required();
    c_eval->add_option("--labels", labels, "File mapping mask names to class labels")->check(CLI::ExistingFile);
    c_eval->add_flag("--json", eval_json, "Print the report as JSON on stdout");

    std::string exp_corpus, exp_out;
    bool exp_json = false;
    auto* c_exp = app.add_subcommand("expand-prompts", "Expand annotations into one sample per label level");
    c_exp->add_option("--corpus", exp_corpus, "Annotation corpus (JSONL)")->required()->check(CLI::ExistingFile);
    c_exp->add_option("--out", exp_out, "Expanded JSONL output (stdout if omitted)");
    c_exp->add_flag("--json", exp_json, "Print counts as JSON on stdout");

    std::string val_corpus;
    bool val_files = false, val_json = false;
    auto* c_val = app.add_subcommand("validate-corpus", "Check a corpus and report its statistics");
    c_val->add_option("--corpus", val_corpus, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
    c_val->add_flag("--check-files", val_files, "Decode every referenced image and mask");
    c_val->add_flag("--json", val_json, "Print statistics as JSON on stdout");

    ServeArgs serve;
    auto* c_serve = app.add_subcommand("serve", "Run the session service");
    c_serve->add_option("--host", serve.host, "Bind address");
    c_serve->add_option("--port", serve.port, "Port (0 picks a free one)");
    c_serve->add_option("--root", serve.root, "Session storage directory");
    c_serve->add_flag("--json", serve.json_out, "Print the bound address as JSON on stdout");
    add_backend_flags(c_serve, serve.backend, true);
    add_agent_flags(c_serve, serve.agent);

    MockBackendArgs mock;
    auto* c_mock = app.add_subcommand("mock-backend", "Serve oracle segmenter/detector backends for a seeded scene");
    c_mock->add_option("--host", mock.host, "Bind address");
    c_mock->add_option("--port", mock.port, "Port (0 picks a free one)");
    c_mock->add_option("--write-image", mock.write_image, "Also write the scene image to this PNG path");
    c_mock->add_flag("--json", mock.json_out, "Print the bound address as JSON on stdout");
    add_backend_flags(c_mock, mock.backend, false);

    TrainArgs train;
    auto* c_train = app.add_subcommand("emit-train-config", "Write loss, matching and learning-rate settings");
    c_train->add_option("--preset", train.preset, "Loss weight preset")->check(CLI::IsMember({"standard", "normalized"}));
    c_train->add_option("--backbone-layers", train.backbone_layers, "Backbone layer groups")->check(CLI::Range(1, 256));
    c_train->add_option("--out", train.out, "Output directory for train_config.json and lr_schedule.csv");
    c_train->add_flag("--json", train.json_out, "Print the configuration as JSON on stdout");

    SyntheticCorpusOptions synth;
    std::string synth_out;
    bool synth_no_files = false, synth_json = false;
    auto* c_synth = app.add_subcommand("synth-corpus", "Write a synthetic multi-level annotation corpus");
    c_synth->add_option("--out", synth_out, "Output directory")->required();
    c_synth->add_option("--images", synth.images, "Image count");
    c_synth->add_option("--annotations", synth.annotations, "Instrument annotation count");
    c_synth->add_option("--seed", synth.seed, "Seed");
    c_synth->add_flag("--no-files", synth_no_files, "Write records only, without images and masks");
    c_synth->add_flag("--json", synth_json, "Print the corpus path as JSON on stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_run->parsed()) return cmd_run(run);
        if (c_batch->parsed()) return cmd_batch(batch);
        if (c_eval->parsed()) return cmd_eval(pred_dir, gt_dir, labels, eval_json);
        if (c_exp->parsed()) return cmd_expand(exp_corpus, exp_out, exp_json);
        if (c_val->parsed()) return cmd_validate(val_corpus, val_files, val_json);
        if (c_serve->parsed()) return cmd_serve(serve);
        if (c_mock->parsed()) return cmd_mock_backend(mock);
        if (c_train->parsed()) return cmd_emit_train_config(train);
        if (c_synth->parsed()) {
            synth.write_files = !synth_no_files;
            const fs::path p = write_synthetic_corpus(synth_out, synth);
            if (synth_json) {
                emit(json{{"corpus", p.string()}, {"images", synth.images}, {"annotations", synth.annotations}});
            } else {
                std::cerr << "wrote " << p.string() << "\n";
            }
            return 0;
        }
    } catch (const BackendError& e) {
        std::cerr << "irsis: backend " << to_string(e.kind()) << ": " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "irsis: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
