#include "irsis/oracle.hpp"

#include <algorithm>
#include <numeric>

#include "irsis/quality.hpp"
#include "irsis/rng.hpp"

namespace irsis {

void CorruptionModel::validate() const {
    if (!(p_drop_component >= 0.0 && p_drop_component <= 1.0)) {
        throw InvalidArgument("p_drop_component must lie in [0,1]");
    }
    if (min_morph_steps < 0 || max_morph_steps < min_morph_steps) {
        throw InvalidArgument("morph step range must satisfy 0 <= min <= max");
    }
    if (min_salt_blobs < 0 || max_salt_blobs < min_salt_blobs) {
        throw InvalidArgument("salt blob range must satisfy 0 <= min <= max");
    }
    if (!(box_prompt_fidelity_gain >= 1.0)) throw InvalidArgument("fidelity gain must be >= 1");
}

bool CorruptionModel::disabled() const {
    return p_drop_component == 0.0 && max_morph_steps == 0 && max_salt_blobs == 0;
}

BinaryMask corrupt(const BinaryMask& truth, const CorruptionModel& model, bool box_prompted,
                   std::size_t min_components_kept) {
    model.validate();
    const double gain = box_prompted ? model.box_prompt_fidelity_gain : 1.0;
    Rng rng(mix_seed(model.seed, truth.hash() ^ (box_prompted ? 0xb0c5ull : 0x7e47ull)));

    auto comps = connected_components(truth);
    std::vector<bool> keep(comps.size());
    std::size_t kept = 0;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        keep[i] = !rng.bernoulli(model.p_drop_component / gain);
        kept += keep[i];
    }
    const std::size_t want = std::min(min_components_kept, comps.size());
    for (std::size_t i = 0; i < comps.size() && kept < want; ++i) {
        if (!keep[i]) {
            keep[i] = true;
            ++kept;
        }
    }
    BinaryMask out(truth.width(), truth.height());
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (keep[i]) out |= comps[i].mask;
    }

    const int steps = static_cast<int>(rng.uniform_int(model.min_morph_steps, model.max_morph_steps));
    const bool grow = rng.bernoulli(0.5);
    const int eff_steps = static_cast<int>(steps / gain);
    const auto k3 = StructuringElement::square(3);
    for (int s = 0; s < eff_steps; ++s) out = grow ? dilate(out, k3) : erode(out, k3);

    const int salt = static_cast<int>(rng.uniform_int(model.min_salt_blobs, model.max_salt_blobs));
    const int eff_salt = static_cast<int>(salt / gain);
    for (int s = 0; s < eff_salt; ++s) {
        const int cx = static_cast<int>(rng.uniform_int(0, truth.width() - 1));
        const int cy = static_cast<int>(rng.uniform_int(0, truth.height() - 1));
        BoundingBox b;
        b.x0 = std::max(0, cx - 1);
        b.y0 = std::max(0, cy - 1);
        b.x1 = std::min(truth.width(), cx + 2);
        b.y1 = std::min(truth.height(), cy + 2);
        out.fill_box(b, true);
    }
    return out;
}

BinaryMask truth_for_query(const RenderedScene& scene, std::string_view query) {
    const auto wanted = query_tokens(query);
    BinaryMask out(scene.image.width(), scene.image.height());
    for (const auto& inst : scene.instruments) {
        std::vector<std::string> words;
        for (const auto* l : {&inst.labels.l0, &inst.labels.l1, &inst.labels.l2}) {
            auto t = query_tokens(*l);
            words.insert(words.end(), t.begin(), t.end());
        }
        const bool match = std::all_of(wanted.begin(), wanted.end(), [&](const std::string& w) {
            return std::find(words.begin(), words.end(), w) != words.end();
        });
        if (match) out |= inst.mask;
    }
    return out;
}

BinaryMask truth_for_box(const RenderedScene& scene, const BoundingBox& box) {
    BinaryMask out(scene.image.width(), scene.image.height());
    require_fits(box, out.width(), out.height());
    std::int64_t best_inside = 0;
    std::size_t best = scene.instruments.size();
    bool any_majority = false;
    for (std::size_t i = 0; i < scene.instruments.size(); ++i) {
        const auto& inst = scene.instruments[i];
        const std::int64_t inside = area_in_box(inst.mask, box);
        if (2 * inside >= inst.mask.area()) {
            out |= inst.mask;
            any_majority = true;
        }
        if (inside > best_inside) {
            best_inside = inside;
            best = i;
        }
    }
    if (!any_majority && best < scene.instruments.size()) out |= scene.instruments[best].mask;
    return out;
}

OracleSegmenter::OracleSegmenter(std::shared_ptr<const RenderedScene> scene) : scene_(std::move(scene)) {
    if (!scene_) throw InvalidArgument("oracle segmenter needs a scene");
}

BinaryMask OracleSegmenter::truth(const SegmentRequest& request) const {
    request.validate();
    if (request.image->width() != scene_->image.width() || request.image->height() != scene_->image.height()) {
        throw BackendError(BackendError::Kind::Rejected, "image size does not match the oracle scene");
    }
    if (request.box_prompt) return truth_for_box(*scene_, *request.box_prompt);
    return truth_for_query(*scene_, *request.text_query);
}

SegmentResult OracleSegmenter::segment(const SegmentRequest& request) {
    BinaryMask m = truth(request);
    return {std::move(m), 1.0};
}

NoisySegmenter::NoisySegmenter(std::shared_ptr<const RenderedScene> scene, CorruptionModel model)
    : OracleSegmenter(std::move(scene)), model_(model) {
    model_.validate();
}

SegmentResult NoisySegmenter::segment(const SegmentRequest& request) {
    const BinaryMask gt = truth(request);
    std::uint64_t salt = 0;
    if (request.box_prompt) {
        const auto& b = *request.box_prompt;
        salt = mix_seed(mix_seed(std::uint64_t(b.x0), std::uint64_t(b.y0)),
                        mix_seed(std::uint64_t(b.x1), std::uint64_t(b.y1)));
    } else {
        for (char c : *request.text_query) salt = mix_seed(salt, static_cast<unsigned char>(c));
    }
    CorruptionModel m = model_;
    m.seed = mix_seed(model_.seed, salt);
    const bool boxed = request.box_prompt.has_value();
    BinaryMask out = corrupt(gt, m, boxed, 1);
    const double score = gt.none() && out.none() ? 1.0 : 0.5;
    return {std::move(out), score};
}

OracleDetector::OracleDetector(std::shared_ptr<const RenderedScene> scene, DetectorNoise noise)
    : scene_(std::move(scene)), noise_(noise) {
    if (!scene_) throw InvalidArgument("oracle detector needs a scene");
    if (noise_.jitter_px < 0 || noise_.suppress_count < 0) throw InvalidArgument("detector noise must be >= 0");
}

std::vector<std::size_t> OracleDetector::suppressed() const {
    std::vector<std::size_t> order(scene_->instruments.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(noise_.seed, 0x5u));
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
    }
    const std::size_t n = std::min<std::size_t>(order.size(), std::size_t(noise_.suppress_count));
    std::vector<std::size_t> out(order.begin(), order.begin() + n);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Detection> OracleDetector::detect(const RgbImage& image, std::string_view) {
    if (image.width() != scene_->image.width() || image.height() != scene_->image.height()) {
        throw BackendError(BackendError::Kind::Rejected, "image size does not match the oracle scene");
    }
    const auto skip = suppressed();
    Rng rng(mix_seed(noise_.seed, 0x7u));
    std::vector<Detection> out;
    for (std::size_t i = 0; i < scene_->instruments.size(); ++i) {
        const auto& inst = scene_->instruments[i];
        BoundingBox b = inst.box;
        if (noise_.jitter_px > 0) {
            const int j = noise_.jitter_px;
            const int w = image.width(), h = image.height();
            b.x0 = std::clamp(b.x0 + static_cast<int>(rng.uniform_int(-j, j)), 0, w - 1);
            b.y0 = std::clamp(b.y0 + static_cast<int>(rng.uniform_int(-j, j)), 0, h - 1);
            b.x1 = std::clamp(b.x1 + static_cast<int>(rng.uniform_int(-j, j)), b.x0 + 1, w);
            b.y1 = std::clamp(b.y1 + static_cast<int>(rng.uniform_int(-j, j)), b.y0 + 1, h);
        }
        if (std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
        const double confidence = noise_.jitter_px > 0 ? 0.9 : 1.0;
        b.confidence = confidence;
        out.push_back({b, inst.labels.l2, confidence});
    }
    return out;
}

}  // namespace irsis
