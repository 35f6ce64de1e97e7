// oracle.hpp
//
// Deterministic stand-ins for the segmentation and detection models, built on
// a rendered synthetic scene. Every output is a pure function of the seed and
// the request.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "irsis/backends.hpp"
#include "irsis/scene.hpp"

namespace irsis {

// Controllable segmentation errors. Each call drops whole components,
// dilates or erodes by a number of 3x3 steps, and sprinkles small blobs.
// With a box prompt every magnitude is divided by the fidelity gain.
struct CorruptionModel {
    std::uint64_t seed = 0;
    double p_drop_component = 0.0;
    int min_morph_steps = 0;  ///< steps drawn from [min, max], direction random
    int max_morph_steps = 0;
    int min_salt_blobs = 0;
    int max_salt_blobs = 0;
    double box_prompt_fidelity_gain = 4.0;

    void validate() const;
    bool disabled() const;
};

// When `min_components_kept` > 0 and every component would be dropped, the
// largest ones are kept instead.
BinaryMask corrupt(const BinaryMask& truth, const CorruptionModel& model, bool box_prompted,
                   std::size_t min_components_kept = 0);

// Instruments whose labels cover every significant word of the query. A query
// made only of generic words ("surgical instrument") selects all instruments.
BinaryMask truth_for_query(const RenderedScene& scene, std::string_view query);

// Instruments with at least half their pixels inside the box; otherwise the
// instrument with the most pixels inside it; otherwise empty. Masks are not
// clipped to the box.
BinaryMask truth_for_box(const RenderedScene& scene, const BoundingBox& box);

class OracleSegmenter : public Segmenter {
public:
    explicit OracleSegmenter(std::shared_ptr<const RenderedScene> scene);
    SegmentResult segment(const SegmentRequest& request) override;
    std::string kind() const override { return "oracle"; }

protected:
    BinaryMask truth(const SegmentRequest& request) const;
    std::shared_ptr<const RenderedScene> scene_;
};

// Oracle truth passed through `corrupt`. Results keep at least one component
// when the truth is nonempty.
class NoisySegmenter : public OracleSegmenter {
public:
    NoisySegmenter(std::shared_ptr<const RenderedScene> scene, CorruptionModel model);
    SegmentResult segment(const SegmentRequest& request) override;
    std::string kind() const override { return "noisy"; }

    const CorruptionModel& model() const { return model_; }

private:
    CorruptionModel model_;
};

struct DetectorNoise {
    std::uint64_t seed = 0;
    int jitter_px = 0;         ///< each edge moves uniformly in [-jitter, jitter]
    int suppress_count = 0;    ///< instruments silently missed, chosen by seed
};

// Tight ground-truth boxes, optionally jittered and with misses.
class OracleDetector : public Detector {
public:
    explicit OracleDetector(std::shared_ptr<const RenderedScene> scene, DetectorNoise noise = {});
    std::vector<Detection> detect(const RgbImage& image, std::string_view prompt) override;
    std::string kind() const override { return noise_.jitter_px > 0 || noise_.suppress_count > 0 ? "noisy" : "oracle"; }

    // Instrument indices the detector drops.
    std::vector<std::size_t> suppressed() const;

private:
    std::shared_ptr<const RenderedScene> scene_;
    DetectorNoise noise_;
};

}  // namespace irsis
