#include "irsis/quality.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <string>

namespace irsis {

void QualityThresholds::validate() const {
    auto inside = [](double v) { return v > 0.0 && v < 1.0; };
    if (!inside(coverage) || !inside(overlap)) {
        throw InvalidArgument("quality thresholds must lie in (0,1), got tau_c=" +
                              std::to_string(coverage) + " tau_o=" + std::to_string(overlap));
    }
}

double QualityReport::min_overlap() const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& o : per_box_overlap) lo = std::min(lo, o.overlap);
    return lo;
}

double coverage(const BinaryMask& m, std::span<const BoundingBox> boxes) {
    if (boxes.empty()) throw InvalidArgument("coverage needs at least one box");
    const BinaryMask region = box_union(boxes, m.width(), m.height());
    const std::int64_t denom = region.area();
    return static_cast<double>(intersection_area(m, region)) / static_cast<double>(denom);
}

double box_overlap(const BinaryMask& m, const BoundingBox& box) {
    require_fits(box, m.width(), m.height());
    return static_cast<double>(area_in_box(m, box)) / static_cast<double>(box.area());
}

QualityReport evaluate(const BinaryMask& m, std::span<const BoundingBox> boxes,
                       const QualityThresholds& th) {
    th.validate();
    if (boxes.empty()) throw InvalidArgument("quality evaluation needs at least one box");

    QualityReport r;
    const BinaryMask region = box_union(boxes, m.width(), m.height());
    r.box_union_area = region.area();
    r.coverage = static_cast<double>(intersection_area(m, region)) /
                 static_cast<double>(r.box_union_area);

    bool all_above = true;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const double o = box_overlap(m, boxes[i]);
        r.per_box_overlap.push_back({i, o});
        if (!(o > th.overlap)) {
            all_above = false;
            r.low_boxes.push_back(i);
        }
    }
    r.gate = (r.coverage > th.coverage) && all_above;
    return r;
}

namespace {

// Words that name the general instrument class rather than a specific one.
constexpr std::string_view kGenericWords[] = {"surgical", "instrument", "instruments", "tool",
                                              "tools", "the", "and", "with", "object"};

bool is_generic(const std::string& w) {
    return std::find(std::begin(kGenericWords), std::end(kGenericWords), w) != std::end(kGenericWords);
}

}  // namespace

std::vector<std::string> query_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 3 && !is_generic(cur)) out.push_back(cur);
        cur.clear();
    };
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

std::vector<std::size_t> select_target_boxes(std::span<const BoundingBox> boxes,
                                             std::string_view query) {
    const auto q = query_tokens(query);
    std::vector<std::size_t> matched;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto words = query_tokens(boxes[i].label);
        const bool hit = std::any_of(q.begin(), q.end(), [&](const std::string& t) {
            return std::find(words.begin(), words.end(), t) != words.end();
        });
        if (hit) matched.push_back(i);
    }
    if (!matched.empty()) return matched;
    std::vector<std::size_t> all(boxes.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
}

}  // namespace irsis
