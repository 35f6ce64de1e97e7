#include "irsis/mask.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <limits>

namespace irsis {

namespace {

using Word = BinaryMask::Word;

// out[x] = in[x + d] with zero fill, over a row of `n` words.
void shift_row(std::span<const Word> in, std::span<Word> out, int d) {
    const int n = static_cast<int>(in.size());
    if (d == 0) {
        std::copy(in.begin(), in.end(), out.begin());
        return;
    }
    const int e = d > 0 ? d : -d;
    const int q = e / BinaryMask::kWordBits;
    const int s = e % BinaryMask::kWordBits;
    auto at = [&](int i) -> Word { return (i >= 0 && i < n) ? in[i] : Word{0}; };
    for (int i = 0; i < n; ++i) {
        Word w = 0;
        if (d > 0) {
            w = at(i + q) >> s;
            if (s != 0) w |= at(i + q + 1) << (BinaryMask::kWordBits - s);
        } else {
            w = at(i - q) << s;
            if (s != 0) w |= at(i - q - 1) >> (BinaryMask::kWordBits - s);
        }
        out[i] = w;
    }
}

BinaryMask dilate_rows(const BinaryMask& m, int r) {
    BinaryMask out(m.width(), m.height());
    std::vector<Word> tmp(m.words_per_row());
    // Bits shifted past the last column must not land in the row padding.
    const int tail = m.width() % BinaryMask::kWordBits;
    for (int y = 0; y < m.height(); ++y) {
        auto dst = out.row(y);
        for (int d = -r; d <= r; ++d) {
            shift_row(m.row(y), tmp, d);
            for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] |= tmp[i];
        }
        if (tail != 0) dst.back() &= (Word{1} << tail) - 1;
    }
    return out;
}

BinaryMask dilate_cols(const BinaryMask& m, int r) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        auto dst = out.row(y);
        const int lo = std::max(0, y - r);
        const int hi = std::min(m.height() - 1, y + r);
        for (int yy = lo; yy <= hi; ++yy) {
            auto src = m.row(yy);
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] |= src[i];
        }
    }
    return out;
}

}  // namespace

void require_fits(const BoundingBox& box, int width, int height) {
    if (!box.fits(width, height)) {
        throw OutOfBounds("box (" + std::to_string(box.x0) + "," + std::to_string(box.y0) + "," +
                          std::to_string(box.x1) + "," + std::to_string(box.y1) +
                          ") does not fit a " + std::to_string(width) + "x" +
                          std::to_string(height) + " raster");
    }
}

StructuringElement StructuringElement::square(int side) {
    if (side < 1 || side % 2 == 0) {
        throw InvalidArgument("structuring element side must be odd and >= 1, got " +
                              std::to_string(side));
    }
    return StructuringElement{side};
}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height), stride_(0) {
    if (width <= 0 || height <= 0) {
        throw InvalidArgument("mask dimensions must be positive, got " + std::to_string(width) +
                              "x" + std::to_string(height));
    }
    stride_ = (width + kWordBits - 1) / kWordBits;
    words_.assign(std::size_t(stride_) * height, 0);
}

BinaryMask BinaryMask::filled(int width, int height) {
    BinaryMask m(width, height);
    std::fill(m.words_.begin(), m.words_.end(), ~Word{0});
    m.clear_padding();
    return m;
}

BinaryMask BinaryMask::from_box(int width, int height, const BoundingBox& box) {
    BinaryMask m(width, height);
    m.fill_box(box, true);
    return m;
}

BinaryMask::Word BinaryMask::tail_mask() const {
    const int used = width_ % kWordBits;
    return used == 0 ? ~Word{0} : ((Word{1} << used) - 1);
}

void BinaryMask::clear_padding() {
    const Word tail = tail_mask();
    for (int y = 0; y < height_; ++y) words_[std::size_t(y) * stride_ + stride_ - 1] &= tail;
}

bool BinaryMask::get(int x, int y) const {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) {
        throw OutOfBounds("pixel (" + std::to_string(x) + "," + std::to_string(y) + ") outside mask");
    }
    const Word w = words_[std::size_t(y) * stride_ + x / kWordBits];
    return (w >> (x % kWordBits)) & 1u;
}

void BinaryMask::set(int x, int y, bool value) {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) {
        throw OutOfBounds("pixel (" + std::to_string(x) + "," + std::to_string(y) + ") outside mask");
    }
    Word& w = words_[std::size_t(y) * stride_ + x / kWordBits];
    const Word bit = Word{1} << (x % kWordBits);
    w = value ? (w | bit) : (w & ~bit);
}

void BinaryMask::fill_box(const BoundingBox& box, bool value) {
    require_fits(box, width_, height_);
    for (int y = box.y0; y < box.y1; ++y) {
        auto r = row(y);
        for (int wi = box.x0 / kWordBits; wi <= (box.x1 - 1) / kWordBits; ++wi) {
            const int lo = std::max(box.x0 - wi * kWordBits, 0);
            const int hi = std::min(box.x1 - wi * kWordBits, kWordBits);  // exclusive
            const Word upper = hi == kWordBits ? ~Word{0} : ((Word{1} << hi) - 1);
            const Word lower = (Word{1} << lo) - 1;
            const Word bits = upper & ~lower;
            r[wi] = value ? (r[wi] | bits) : (r[wi] & ~bits);
        }
    }
}

std::int64_t BinaryMask::area() const {
    std::int64_t n = 0;
    for (Word w : words_) n += std::popcount(w);
    return n;
}

bool BinaryMask::none() const {
    return std::all_of(words_.begin(), words_.end(), [](Word w) { return w == 0; });
}

std::optional<BoundingBox> BinaryMask::tight_box() const {
    int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
    for (int y = 0; y < height_; ++y) {
        auto r = row(y);
        for (int wi = 0; wi < stride_; ++wi) {
            if (r[wi] == 0) continue;
            const int lo = wi * kWordBits + std::countr_zero(r[wi]);
            const int hi = wi * kWordBits + (kWordBits - 1 - std::countl_zero(r[wi]));
            x0 = std::min(x0, lo);
            x1 = std::max(x1, hi);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) return std::nullopt;
    BoundingBox b;
    b.x0 = x0;
    b.y0 = y0;
    b.x1 = x1 + 1;
    b.y1 = y1 + 1;
    return b;
}

std::uint64_t BinaryMask::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    mix(std::uint64_t(width_));
    mix(std::uint64_t(height_));
    for (Word w : words_) mix(w);
    return h;
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& o) {
    require_same_size(*this, o);
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    return *this;
}

BinaryMask& BinaryMask::operator&=(const BinaryMask& o) {
    require_same_size(*this, o);
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
    return *this;
}

void require_same_size(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw DimensionMismatch("mask sizes differ: " + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                                "x" + std::to_string(b.height()));
    }
}

BinaryMask unite(const BinaryMask& a, const BinaryMask& b) {
    BinaryMask out = a;
    out |= b;
    return out;
}

BinaryMask intersect(const BinaryMask& a, const BinaryMask& b) {
    BinaryMask out = a;
    out &= b;
    return out;
}

BinaryMask subtract(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y) {
        auto ra = a.row(y);
        auto rb = b.row(y);
        auto ro = out.row(y);
        for (std::size_t i = 0; i < ra.size(); ++i) ro[i] = ra[i] & ~rb[i];
    }
    return out;
}

BinaryMask complement(const BinaryMask& m) {
    return subtract(BinaryMask::filled(m.width(), m.height()), m);
}

bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
    require_same_size(inner, outer);
    auto a = inner.words();
    auto b = outer.words();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] & ~b[i]) return false;
    }
    return true;
}

std::int64_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    auto wa = a.words();
    auto wb = b.words();
    std::int64_t n = 0;
    for (std::size_t i = 0; i < wa.size(); ++i) n += std::popcount(wa[i] & wb[i]);
    return n;
}

BinaryMask intersect_mask_box(const BinaryMask& m, const BoundingBox& box) {
    require_fits(box, m.width(), m.height());
    return intersect(m, BinaryMask::from_box(m.width(), m.height(), box));
}

BinaryMask subtract_box(const BinaryMask& m, const BoundingBox& box) {
    BinaryMask out = m;
    out.fill_box(box, false);
    return out;
}

std::int64_t area_in_box(const BinaryMask& m, const BoundingBox& box) {
    return intersect_mask_box(m, box).area();
}

BinaryMask box_union(std::span<const BoundingBox> boxes, int width, int height) {
    BinaryMask out(width, height);
    for (const auto& b : boxes) out.fill_box(b, true);
    return out;
}

BinaryMask dilate(const BinaryMask& m, StructuringElement k) {
    const int r = StructuringElement::square(k.side).radius();
    if (r == 0) return m;
    return dilate_cols(dilate_rows(m, r), r);
}

BinaryMask erode(const BinaryMask& m, StructuringElement k) {
    // Duality with dilation: outside pixels become foreground under the
    // complement, which is exactly the neutral erosion border.
    return complement(dilate(complement(m), k));
}

BinaryMask morph_open(const BinaryMask& m, StructuringElement k) { return dilate(erode(m, k), k); }

BinaryMask morph_close(const BinaryMask& m, StructuringElement k) { return erode(dilate(m, k), k); }

BinaryMask morph_clean(const BinaryMask& m, StructuringElement k) {
    return morph_close(morph_open(m, k), k);
}

std::vector<Component> connected_components(const BinaryMask& m) {
    const int w = m.width();
    const int h = m.height();
    std::vector<int> label(std::size_t(w) * h, -1);
    struct Seed {
        std::int64_t first_pixel;
        std::int64_t area;
        int id;
    };
    std::vector<Seed> seeds;
    std::vector<int> stack;
    int next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int idx = y * w + x;
            if (label[idx] >= 0 || !m.get(x, y)) continue;
            std::int64_t area = 0;
            label[idx] = next;
            stack.push_back(idx);
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                ++area;
                const int px = p % w;
                const int py = p / w;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = px + dx;
                        const int ny = py + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const int q = ny * w + nx;
                        if (label[q] >= 0 || !m.get(nx, ny)) continue;
                        label[q] = next;
                        stack.push_back(q);
                    }
                }
            }
            seeds.push_back({idx, area, next});
            ++next;
        }
    }

    std::vector<BinaryMask> masks(seeds.size(), BinaryMask(w, h));
    for (int i = 0; i < w * h; ++i) {
        if (label[i] >= 0) masks[label[i]].set(i % w, i / w);
    }
    std::stable_sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) {
        if (a.area != b.area) return a.area > b.area;
        return a.first_pixel < b.first_pixel;
    });
    std::vector<Component> out;
    out.reserve(seeds.size());
    for (const auto& s : seeds) out.push_back({std::move(masks[s.id]), s.area});
    return out;
}

std::string rle_encode(const BinaryMask& m) {
    std::string out = "IRLE1 " + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n";
    bool current = false;
    std::int64_t run = 0;
    bool first = true;
    auto flush = [&] {
        if (!first) out.push_back(',');
        out += std::to_string(run);
        first = false;
    };
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            const bool v = m.get(x, y);
            if (v != current) {
                flush();
                current = v;
                run = 0;
            }
            ++run;
        }
    }
    flush();
    out.push_back('\n');
    return out;
}

namespace {

std::int64_t parse_count(std::string_view s, const char* what) {
    if (s.empty()) throw FormatError(std::string("IRLE: empty ") + what);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 0 || s[0] == '+' || s[0] == '-') {
        throw FormatError(std::string("IRLE: invalid ") + what + " '" + std::string(s) + "'");
    }
    return v;
}

}  // namespace

BinaryMask rle_decode(std::string_view bytes) {
    constexpr std::string_view magic = "IRLE1 ";
    if (bytes.substr(0, magic.size()) != magic) throw FormatError("IRLE: missing 'IRLE1 ' header");
    const auto header_end = bytes.find('\n');
    if (header_end == std::string_view::npos) throw FormatError("IRLE: unterminated header");
    std::string_view dims = bytes.substr(magic.size(), header_end - magic.size());
    const auto sp = dims.find(' ');
    if (sp == std::string_view::npos) throw FormatError("IRLE: header needs width and height");
    const std::int64_t w = parse_count(dims.substr(0, sp), "width");
    const std::int64_t h = parse_count(dims.substr(sp + 1), "height");
    if (w <= 0 || h <= 0 || w > std::numeric_limits<int>::max() || h > std::numeric_limits<int>::max()) {
        throw FormatError("IRLE: dimensions must be positive");
    }

    std::string_view body = bytes.substr(header_end + 1);
    if (body.empty() || body.back() != '\n') throw FormatError("IRLE: run line must end with newline");
    body.remove_suffix(1);
    if (body.find('\n') != std::string_view::npos) throw FormatError("IRLE: trailing data after runs");

    BinaryMask m(static_cast<int>(w), static_cast<int>(h));
    const std::int64_t total = w * h;
    std::int64_t pos = 0;
    bool value = false;
    bool first = true;
    while (true) {
        const auto comma = body.find(',');
        const std::int64_t run = parse_count(body.substr(0, comma), "run length");
        if (run == 0 && !first) throw FormatError("IRLE: zero-length run after the first");
        if (run > total - pos) throw FormatError("IRLE: run lengths exceed width*height");
        if (value) {
            for (std::int64_t p = pos; p < pos + run; ++p) m.set(int(p % w), int(p / w));
        }
        pos += run;
        value = !value;
        first = false;
        if (comma == std::string_view::npos) break;
        body.remove_prefix(comma + 1);
    }
    if (pos != total) {
        throw FormatError("IRLE: run lengths sum to " + std::to_string(pos) + ", expected " +
                          std::to_string(total));
    }
    return m;
}

}  // namespace irsis
