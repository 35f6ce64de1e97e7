// eval.hpp
//
// Dice / IoU scoring and a directory-level evaluation harness. Two empty
// masks count as perfect agreement (1.0).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irsis/mask.hpp"

namespace irsis {

struct ScorePair {
    double dice = 1.0;
    double iou = 1.0;
};

double dice(const BinaryMask& a, const BinaryMask& b);
double iou(const BinaryMask& a, const BinaryMask& b);
ScorePair score(const BinaryMask& a, const BinaryMask& b);

struct ClassScore {
    std::string label;
    double iou = 0.0;
    std::size_t n = 0;
};

struct EvalIssue {
    std::string file;
    std::string message;
};

struct EvalReport {
    std::size_t n_images = 0;
    double mean_dice = 0.0;
    double mean_iou = 0.0;
    std::vector<ClassScore> per_class;  ///< sorted by label
    double mean_class_iou = 0.0;
    std::vector<std::string> unmatched;  ///< present on only one side, as "pred/<name>" or "gt/<name>"
    std::vector<EvalIssue> errors;

    std::string to_json() const;
};

// Reads a "name<TAB or comma>label" file; one class per mask file name.
std::map<std::string, std::string> load_class_labels(const std::filesystem::path& path);

// Pairs *.irle files by name. Without labels every image belongs to class
// "all". Images whose masks fail to decode or differ in size are listed in
// `errors` and excluded from the means.
EvalReport batch_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                      const std::optional<std::map<std::string, std::string>>& labels = std::nullopt);

}  // namespace irsis
