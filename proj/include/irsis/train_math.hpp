// train_math.hpp
//
// Loss terms with analytic gradients, bipartite matching for set prediction,
// and the learning-rate table for the 90-epoch fine-tuning schedule.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irsis/error.hpp"

namespace irsis {

struct LossValue {
    double value = 0.0;
    std::vector<double> grad;  ///< d value / d input, same length as the input
};

struct FocalParams {
    double alpha = 0.25;
    double gamma = 2.0;

    void validate() const;
};

inline constexpr double kProbClamp = 1e-6;

// Mean over pixels of -a_t (1-p_t)^gamma log p_t, with p clamped to
// [1e-6, 1-1e-6]. Targets are 0/1. The gradient is zero where p was clamped.
LossValue focal_loss(std::span<const double> p, std::span<const double> y, const FocalParams& fp);

// 1 - (2 sum(p y) + 1) / (sum p + sum y + 1).
LossValue dice_loss(std::span<const double> p, std::span<const double> y);

struct ScalarLoss {
    double value = 0.0;
    double grad = 0.0;
};

// Binary cross-entropy on a logit, in the overflow-free form
// max(x,0) - x*y + log(1 + exp(-|x|)).
ScalarLoss presence_loss(double logit, bool exists);

struct LossWeights {
    double mask = 50.0;
    double dice = 10.0;
    double ce = 20.0;
    double presence = 20.0;

    static LossWeights standard() { return {}; }
    // Same ratios at one tenth the scale.
    static LossWeights normalized() { return {5.0, 1.0, 2.0, 2.0}; }
    void validate() const;
};

struct LossComponents {
    double mask = 0.0;
    double dice = 0.0;
    double ce = 0.0;
    double presence = 0.0;
};

double composite_loss(const LossComponents& c, const LossWeights& w);

// Row-major n_pred x n_gt cost matrix.
class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< (pred, gt), sorted by pred
    double cost = 0.0;
};

// Minimum-cost one-to-one assignment of min(n, m) pairs. Among optimal
// assignments the lexicographically smallest (by pred, then gt) is returned.
// Throws InvalidArgument on non-finite costs.
Assignment hungarian_match(const CostMatrix& cost);

struct WeightedPair {
    std::size_t pred = 0;
    std::size_t gt = 0;
    double weight = 1.0;

    friend bool operator==(const WeightedPair&, const WeightedPair&) = default;
};

struct MatchSpec {
    int topk = 4;
    double one_to_many_weight = 2.0;
};

// Hungarian pairs (weight 1) followed, for each gt in order, by its k
// lowest-cost predictions other than its Hungarian partner (weight `weight`,
// ties by pred index).
std::vector<WeightedPair> one_to_many_augment(const CostMatrix& cost, const Assignment& base, int topk,
                                              double weight);

enum class GroupKind { Decoder, Backbone, TextEncoder };

struct ParamGroup {
    std::string name;
    GroupKind kind = GroupKind::Decoder;
    int depth = 0;  ///< layers from the top, backbone only
};

struct LrSchedule {
    double decoder_lr = 8e-5;
    double backbone_lr = 2.5e-5;
    double layer_decay = 0.98;
    int warmup_epochs = 30;
    int decay_epochs = 30;
    int cooldown_epochs = 30;
    double final_fraction = 0.1;  ///< lr after decay, as a fraction of peak

    int total_epochs() const { return warmup_epochs + decay_epochs + cooldown_epochs; }
    double peak(const ParamGroup& g) const;
    // Epochs are 1-based.
    double lr(const ParamGroup& g, int epoch) const;
    void validate() const;
};

struct LrEntry {
    int epoch = 0;
    std::string group;
    double lr = 0.0;
};

std::vector<ParamGroup> default_param_groups(int backbone_layers = 4);
std::vector<LrEntry> emit_schedule(const LrSchedule& s, std::span<const ParamGroup> groups);
// "epoch,group,lr" header plus one row per entry, lr printed round-trippably.
std::string schedule_csv(std::span<const LrEntry> entries);

}  // namespace irsis
