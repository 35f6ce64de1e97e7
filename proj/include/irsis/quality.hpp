// quality.hpp
//
// Mask coverage over the union of detected boxes, per-box mask-box overlap,
// and the strict-threshold quality gate that selects the refinement strategy.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "irsis/mask.hpp"

namespace irsis {

struct QualityThresholds {
    double coverage = 0.85;  ///< tau_c
    double overlap = 0.50;   ///< tau_o

    // Throws InvalidArgument unless both lie strictly inside (0, 1).
    void validate() const;
};

struct BoxOverlap {
    std::size_t box_index = 0;
    double overlap = 0.0;

    friend bool operator==(const BoxOverlap&, const BoxOverlap&) = default;
};

struct QualityReport {
    double coverage = 0.0;
    std::vector<BoxOverlap> per_box_overlap;
    bool gate = false;
    std::vector<std::size_t> low_boxes;  ///< boxes with overlap <= tau_o
    std::int64_t box_union_area = 0;

    double min_overlap() const;

    friend bool operator==(const QualityReport&, const QualityReport&) = default;
};

// |m ∩ ∪b| / |∪b| with the union taken as a pixel set. Throws InvalidArgument
// on an empty box list.
double coverage(const BinaryMask& m, std::span<const BoundingBox> boxes);

// |m ∩ b| / |b|.
double box_overlap(const BinaryMask& m, const BoundingBox& box);

// gate = coverage > tau_c and every overlap > tau_o. Box indices in the report
// are positions in `boxes`.
QualityReport evaluate(const BinaryMask& m, std::span<const BoundingBox> boxes,
                       const QualityThresholds& th);

// Indices of the boxes that enter the gate for `query`: those whose label
// shares a word with the query (case-insensitive), or all boxes when none do.
std::vector<std::size_t> select_target_boxes(std::span<const BoundingBox> boxes,
                                             std::string_view query);

// Lower-cased alphanumeric words of length >= 3, minus generic words such as
// "surgical" and "instrument".
std::vector<std::string> query_tokens(std::string_view text);

}  // namespace irsis
