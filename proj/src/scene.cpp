#include "irsis/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "irsis/rng.hpp"

namespace irsis {

const char* to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Capsule: return "capsule";
        case ShapeKind::Wedge: return "wedge";
        case ShapeKind::PolylineBand: return "polyline-band";
    }
    return "?";
}

const std::string& InstrumentLabels::at_level(int level) const {
    switch (level) {
        case 0: return l0;
        case 1: return l1;
        case 2: return l2;
    }
    throw InvalidArgument("prompt level must be 0, 1 or 2, got " + std::to_string(level));
}

BinaryMask RenderedScene::union_mask() const {
    BinaryMask out(image.width(), image.height());
    for (const auto& inst : instruments) out |= inst.mask;
    return out;
}

namespace {

struct Nearest {
    double dist;
    double u;  // arc-length parameter in [0, 1]
};

Nearest nearest_on_path(const std::vector<Point2>& path, double px, double py) {
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        total += std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
    }
    Nearest best{std::numeric_limits<double>::infinity(), 0.0};
    double acc = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const double ax = path[i - 1].x, ay = path[i - 1].y;
        const double dx = path[i].x - ax, dy = path[i].y - ay;
        const double len2 = dx * dx + dy * dy;
        double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double d = std::hypot(px - (ax + t * dx), py - (ay + t * dy));
        const double len = std::sqrt(len2);
        if (d < best.dist) best = {d, total > 0 ? (acc + t * len) / total : 0.0};
        acc += len;
    }
    return best;
}

void validate_instrument(const InstrumentSpec& inst, int width, int height) {
    if (inst.path.size() < 2) throw InvalidArgument("instrument path needs at least two points");
    if (!(inst.radius_start > 0) || !(inst.radius_end > 0)) {
        throw InvalidArgument("instrument radii must be positive");
    }
    for (const auto& p : inst.path) {
        if (!(p.x >= 0 && p.x <= width && p.y >= 0 && p.y <= height)) {
            throw InvalidArgument("instrument path point outside the canvas");
        }
    }
}

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct Taxon {
    const char* l1;
    const char* l2;
};

constexpr std::array<Taxon, 7> kTaxonomy = {{
    {"forceps", "bipolar forceps"},
    {"forceps", "prograsp forceps"},
    {"needle driver", "large needle driver"},
    {"suction", "suction instrument"},
    {"clip applier", "medium-large clip applier"},
    {"scissors", "monopolar curved scissors"},
    {"probe", "ultrasound probe"},
}};

}  // namespace

BinaryMask rasterize(const InstrumentSpec& inst, int width, int height) {
    validate_instrument(inst, width, height);
    const double rmax = std::max(inst.radius_start, inst.radius_end);
    double lox = width, loy = height, hix = 0, hiy = 0;
    for (const auto& p : inst.path) {
        lox = std::min(lox, p.x);
        loy = std::min(loy, p.y);
        hix = std::max(hix, p.x);
        hiy = std::max(hiy, p.y);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(lox - rmax)) - 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(loy - rmax)) - 1);
    const int x1 = std::min(width, static_cast<int>(std::ceil(hix + rmax)) + 1);
    const int y1 = std::min(height, static_cast<int>(std::ceil(hiy + rmax)) + 1);

    BinaryMask m(width, height);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const auto n = nearest_on_path(inst.path, x + 0.5, y + 0.5);
            const double r = inst.radius_start + n.u * (inst.radius_end - inst.radius_start);
            if (n.dist <= r) m.set(x, y);
        }
    }
    if (m.none()) throw InvalidArgument("instrument rasterizes to no pixels");
    return m;
}

RgbImage apply_gamma(const RgbImage& image, double gamma) {
    if (!(gamma > 0)) throw InvalidArgument("gamma must be positive");
    std::array<std::uint8_t, 256> lut;
    for (int v = 0; v < 256; ++v) lut[v] = clamp_u8(255.0 * std::pow(v / 255.0, gamma));
    RgbImage out = image;
    for (auto& b : out.bytes()) b = lut[b];
    return out;
}

RenderedScene render_scene(const SceneSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0) throw InvalidArgument("scene canvas must be positive");
    const int w = spec.width;
    const int h = spec.height;

    RenderedScene scene{RgbImage(w, h), {}, {}};
    for (const auto& inst : spec.instruments) {
        BinaryMask m = rasterize(inst, w, h);
        BoundingBox box = *m.tight_box();
        box.label = inst.labels.l2;
        scene.instruments.push_back({std::move(m), box, inst.labels});
    }

    // Background tissue: smooth variation plus per-pixel noise.
    Rng rng(mix_seed(spec.seed, 1));
    const double ph1 = rng.uniform(0, 2 * std::numbers::pi);
    const double ph2 = rng.uniform(0, 2 * std::numbers::pi);
    RgbImage& img = scene.image;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double wave = 22.0 * std::sin(0.07 * x + ph1) * std::cos(0.05 * y + ph2);
            const double noise = rng.uniform(-6.0, 6.0);
            img.put(x, y, {clamp_u8(172 + wave + noise), clamp_u8(68 + 0.5 * wave + noise),
                           clamp_u8(70 + 0.4 * wave + noise)});
        }
    }

    // Instruments: metallic gray, brighter along the axis.
    for (std::size_t i = 0; i < spec.instruments.size(); ++i) {
        const auto& inst = spec.instruments[i];
        const double base = 140.0 + 60.0 * Rng(mix_seed(spec.seed, 100 + i)).uniform();
        const auto box = scene.instruments[i].box;
        for (int y = box.y0; y < box.y1; ++y) {
            for (int x = box.x0; x < box.x1; ++x) {
                if (!scene.instruments[i].mask.get(x, y)) continue;
                const auto n = nearest_on_path(inst.path, x + 0.5, y + 0.5);
                const double r = inst.radius_start + n.u * (inst.radius_end - inst.radius_start);
                const double g = base * (0.8 + 0.2 * std::max(0.0, 1.0 - n.dist / r));
                img.put(x, y, {clamp_u8(g), clamp_u8(g), clamp_u8(g + 8)});
            }
        }
    }

    // Photometric perturbations, drawn from their own stream.
    const auto& ps = spec.perturbations;
    Rng prng(mix_seed(spec.seed, 2));
    Photometrics& ph = scene.photometrics;
    if (prng.bernoulli(ps.p_specular)) {
        const int n = static_cast<int>(prng.uniform_int(1, std::max(1, ps.max_specular_blobs)));
        for (int k = 0; k < n; ++k) {
            ph.speculars.push_back({prng.uniform(0, w), prng.uniform(0, h), prng.uniform(1.5, 4.0)});
        }
    }
    if (prng.bernoulli(ps.p_shadow)) {
        ph.shadows.push_back({prng.uniform(0, w), prng.uniform(0, h), prng.uniform(0, std::numbers::pi),
                              prng.uniform(6.0, 18.0)});
    }
    const bool gamma_on = prng.bernoulli(ps.p_gamma);
    const double drawn_gamma = prng.uniform(ps.gamma_min, ps.gamma_max);
    ph.gamma = ps.gamma ? *ps.gamma : (gamma_on ? drawn_gamma : 1.0);

    for (const auto& s : ph.speculars) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double d2 = (x + 0.5 - s.cx) * (x + 0.5 - s.cx) + (y + 0.5 - s.cy) * (y + 0.5 - s.cy);
                const double a = 0.9 * std::exp(-d2 / (2 * s.sigma * s.sigma));
                if (a < 1e-3) continue;
                const Rgb c = img.at(x, y);
                img.put(x, y, {clamp_u8(c.r + (255 - c.r) * a), clamp_u8(c.g + (255 - c.g) * a),
                               clamp_u8(c.b + (255 - c.b) * a)});
            }
        }
    }
    for (const auto& s : ph.shadows) {
        const double nx = -std::sin(s.angle), ny = std::cos(s.angle);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double d = std::abs((x + 0.5 - s.px) * nx + (y + 0.5 - s.py) * ny);
                const double k = std::clamp(1.0 - d / s.half_width, 0.0, 1.0);
                if (k <= 0) continue;
                const double f = 1.0 - 0.45 * k;
                const Rgb c = img.at(x, y);
                img.put(x, y, {clamp_u8(c.r * f), clamp_u8(c.g * f), clamp_u8(c.b * f)});
            }
        }
    }
    if (ph.gamma != 1.0) img = apply_gamma(img, ph.gamma);
    return scene;
}

SceneSpec random_scene(std::uint64_t seed, const SceneOptions& opt) {
    if (opt.instruments < 0 || opt.instruments > 4) {
        throw InvalidArgument("random_scene supports 0..4 instruments");
    }
    SceneSpec spec;
    spec.seed = seed;
    spec.width = opt.width;
    spec.height = opt.height;
    spec.perturbations = opt.perturbations;

    Rng rng(mix_seed(seed, 3));
    // 2x2 grid; cells visited in a seeded order.
    std::array<int, 4> cells = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(cells[i], cells[rng.uniform_int(0, i)]);
    const double cw = opt.width / 2.0;
    const double ch = opt.height / 2.0;
    const double margin = 3.0;

    for (int k = 0; k < opt.instruments; ++k) {
        const double cx0 = (cells[k] % 2) * cw;
        const double cy0 = (cells[k] / 2) * ch;
        const double r = rng.uniform(opt.min_radius, opt.max_radius);
        const double room_h = cw - 2 * r - 2 * margin;
        const double room_v = ch - 2 * r - 2 * margin;
        bool horizontal = rng.bernoulli(0.5);
        if (room_h < 4 * r) horizontal = false;
        if (room_v < 4 * r) horizontal = true;
        const double room = horizontal ? room_h : room_v;
        if (room < 2 * r) throw InvalidArgument("canvas too small for the requested instruments");
        const double len = room * rng.uniform(0.6, 1.0);

        // Center such that the swept band stays inside the cell.
        const double along_lo = (horizontal ? cx0 : cy0) + margin + r + len / 2;
        const double along_hi = (horizontal ? cx0 + cw : cy0 + ch) - margin - r - len / 2;
        const double across_lo = (horizontal ? cy0 : cx0) + margin + r;
        const double across_hi = (horizontal ? cy0 + ch : cx0 + cw) - margin - r;
        const double a = rng.uniform(along_lo, std::max(along_lo, along_hi));
        const double c = rng.uniform(across_lo, std::max(across_lo, across_hi));
        auto pt = [&](double along, double across) {
            return horizontal ? Point2{along, across} : Point2{across, along};
        };

        InstrumentSpec inst;
        std::vector<ShapeKind> kinds = {ShapeKind::Capsule};
        if (opt.allow_wedges) kinds.push_back(ShapeKind::Wedge);
        if (opt.allow_polylines) kinds.push_back(ShapeKind::PolylineBand);
        inst.shape = kinds[rng.uniform_int(0, static_cast<std::int64_t>(kinds.size()) - 1)];
        inst.radius_start = r;
        inst.radius_end = r;
        switch (inst.shape) {
            case ShapeKind::Capsule:
                inst.path = {pt(a - len / 2, c), pt(a + len / 2, c)};
                break;
            case ShapeKind::Wedge:
                inst.path = {pt(a - len / 2, c), pt(a + len / 2, c)};
                inst.radius_end = r * rng.uniform(0.85, 0.95);
                break;
            case ShapeKind::PolylineBand: {
                const double bend = rng.uniform(-0.2 * r, 0.2 * r);
                const double cc = std::clamp(c + bend, across_lo, std::max(across_lo, across_hi));
                inst.path = {pt(a - len / 2, c), pt(a, cc), pt(a + len / 2, c)};
                break;
            }
        }
        const auto& taxon = kTaxonomy[rng.uniform_int(0, kTaxonomy.size() - 1)];
        inst.labels.l1 = taxon.l1;
        inst.labels.l2 = taxon.l2;
        spec.instruments.push_back(std::move(inst));
    }
    return spec;
}

}  // namespace irsis
