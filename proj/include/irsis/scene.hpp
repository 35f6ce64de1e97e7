// scene.hpp
//
// Seeded synthetic surgical scenes: instrument geometry is rasterized into
// exact ground-truth masks, then photometric perturbations (gamma, specular
// highlights, shadow bands) are applied to the image only.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "irsis/image.hpp"
#include "irsis/mask.hpp"

namespace irsis {

enum class ShapeKind { Capsule, Wedge, PolylineBand };

const char* to_string(ShapeKind kind);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct InstrumentLabels {
    std::string l0 = "surgical instrument";
    std::string l1;
    std::string l2;

    const std::string& at_level(int level) const;
};

// A band of varying radius swept along a polyline. Capsules are two-point
// paths of constant radius, wedges two-point paths whose radius tapers, and
// polyline bands paths with three or more points.
struct InstrumentSpec {
    ShapeKind shape = ShapeKind::Capsule;
    std::vector<Point2> path;
    double radius_start = 5.0;
    double radius_end = 5.0;
    InstrumentLabels labels;
};

struct PerturbationSpec {
    double p_gamma = 0.5;
    double gamma_min = 0.8;
    double gamma_max = 1.2;
    std::optional<double> gamma;  ///< forces gamma on, with this exponent
    double p_specular = 0.3;
    int max_specular_blobs = 3;
    double p_shadow = 0.3;
};

struct SpecularBlob {
    double cx, cy, sigma;
};

struct ShadowBand {
    double px, py, angle, half_width;
};

struct Photometrics {
    double gamma = 1.0;
    std::vector<SpecularBlob> speculars;
    std::vector<ShadowBand> shadows;
};

struct SceneSpec {
    std::uint64_t seed = 0;
    int width = 160;
    int height = 128;
    std::vector<InstrumentSpec> instruments;
    PerturbationSpec perturbations;
};

struct GroundTruthInstrument {
    BinaryMask mask;
    BoundingBox box;  ///< tight box of `mask`, labelled with labels.l2
    InstrumentLabels labels;
};

struct RenderedScene {
    RgbImage image;
    std::vector<GroundTruthInstrument> instruments;
    Photometrics photometrics;

    BinaryMask union_mask() const;
};

// Throws InvalidArgument for malformed specs: non-positive canvas, paths with
// fewer than two points, points outside the canvas, non-positive radii, or an
// instrument that rasterizes to no pixels.
RenderedScene render_scene(const SceneSpec& spec);

BinaryMask rasterize(const InstrumentSpec& instrument, int width, int height);

// out = round(255 * (in / 255)^gamma) per channel.
RgbImage apply_gamma(const RgbImage& image, double gamma);

struct SceneOptions {
    int width = 160;
    int height = 128;
    int instruments = 3;  ///< 0..4
    double min_radius = 4.0;
    double max_radius = 7.0;
    bool allow_wedges = true;
    bool allow_polylines = true;
    PerturbationSpec perturbations;
};

// Instruments placed one per 2x2 grid cell (no two touch) and laid out
// axis-aligned, polylines with a slight bend, so each instrument fills most of
// its tight box.
SceneSpec random_scene(std::uint64_t seed, const SceneOptions& options = {});

}  // namespace irsis
