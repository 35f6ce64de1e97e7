// mask.hpp
//
// Bit-packed binary raster with exact set algebra, box restriction,
// square-kernel morphology, 8-connected components and the IRLE v1 codec.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irsis/error.hpp"

namespace irsis {

// Half-open pixel rectangle: (x, y) is inside iff x0 <= x < x1 and y0 <= y < y1.
struct BoundingBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;
    std::string label;
    std::optional<double> confidence;

    std::int64_t area() const { return std::int64_t(x1 - x0) * (y1 - y0); }
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(int x, int y) const { return x0 <= x && x < x1 && y0 <= y && y < y1; }
    bool same_extent(const BoundingBox& o) const {
        return x0 == o.x0 && y0 == o.y0 && x1 == o.x1 && y1 == o.y1;
    }
    bool fits(int width, int height) const {
        return 0 <= x0 && x0 < x1 && x1 <= width && 0 <= y0 && y0 < y1 && y1 <= height;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Throws OutOfBounds unless the box is non-degenerate and inside width x height.
void require_fits(const BoundingBox& box, int width, int height);

// Square structuring element with the anchor at its center pixel.
struct StructuringElement {
    int side = 5;

    static StructuringElement square(int side);
    int radius() const { return side / 2; }
};

class BinaryMask {
public:
    using Word = std::uint64_t;
    static constexpr int kWordBits = 64;

    // 0x0 placeholder; every operation except assignment and comparison
    // treats it as a size mismatch.
    BinaryMask() = default;
    BinaryMask(int width, int height);
    static BinaryMask filled(int width, int height);
    static BinaryMask from_box(int width, int height, const BoundingBox& box);

    int width() const { return width_; }
    int height() const { return height_; }
    std::int64_t pixel_count() const { return std::int64_t(width_) * height_; }
    int words_per_row() const { return stride_; }

    bool get(int x, int y) const;
    void set(int x, int y, bool value = true);
    void fill_box(const BoundingBox& box, bool value);

    std::int64_t area() const;
    bool none() const;

    std::span<const Word> row(int y) const {
        return {words_.data() + std::size_t(y) * stride_, std::size_t(stride_)};
    }
    std::span<Word> row(int y) {
        return {words_.data() + std::size_t(y) * stride_, std::size_t(stride_)};
    }
    std::span<const Word> words() const { return words_; }

    // Smallest box containing every foreground pixel; nullopt when empty.
    std::optional<BoundingBox> tight_box() const;

    // FNV-1a over dimensions and packed words.
    std::uint64_t hash() const;

    BinaryMask& operator|=(const BinaryMask& o);
    BinaryMask& operator&=(const BinaryMask& o);

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    void clear_padding();
    Word tail_mask() const;

    int width_ = 0;
    int height_ = 0;
    int stride_ = 0;
    std::vector<Word> words_;
};

void require_same_size(const BinaryMask& a, const BinaryMask& b);

BinaryMask unite(const BinaryMask& a, const BinaryMask& b);
BinaryMask intersect(const BinaryMask& a, const BinaryMask& b);
BinaryMask subtract(const BinaryMask& a, const BinaryMask& b);
BinaryMask complement(const BinaryMask& m);
bool is_subset(const BinaryMask& inner, const BinaryMask& outer);
std::int64_t intersection_area(const BinaryMask& a, const BinaryMask& b);

BinaryMask intersect_mask_box(const BinaryMask& m, const BoundingBox& box);
BinaryMask subtract_box(const BinaryMask& m, const BoundingBox& box);
std::int64_t area_in_box(const BinaryMask& m, const BoundingBox& box);

// Pixel union of boxes as a mask of the given size.
BinaryMask box_union(std::span<const BoundingBox> boxes, int width, int height);

// Pixels outside the image do not contribute to dilation and do not veto
// erosion, so (erode, dilate) form an adjunction on the image domain.
BinaryMask dilate(const BinaryMask& m, StructuringElement k);
BinaryMask erode(const BinaryMask& m, StructuringElement k);
BinaryMask morph_open(const BinaryMask& m, StructuringElement k);
BinaryMask morph_close(const BinaryMask& m, StructuringElement k);
// Opening followed by closing.
BinaryMask morph_clean(const BinaryMask& m, StructuringElement k);

struct Component {
    BinaryMask mask;
    std::int64_t area;
};

// 8-connected components sorted by area descending, ties by first pixel in
// raster order.
std::vector<Component> connected_components(const BinaryMask& m);

// IRLE v1: "IRLE1 <w> <h>\n" then comma-separated run lengths and "\n".
std::string rle_encode(const BinaryMask& m);
BinaryMask rle_decode(std::string_view bytes);

}  // namespace irsis
