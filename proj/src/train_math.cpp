#include "irsis/train_math.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

namespace irsis {

namespace {

void require_same_length(std::span<const double> p, std::span<const double> y) {
    if (p.size() != y.size()) {
        throw DimensionMismatch("prediction has " + std::to_string(p.size()) + " values, target has " +
                                std::to_string(y.size()));
    }
}

}  // namespace

void FocalParams::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("focal alpha must lie in (0,1)");
    if (!(gamma >= 0.0)) throw InvalidArgument("focal gamma must be >= 0");
}

LossValue focal_loss(std::span<const double> p, std::span<const double> y, const FocalParams& fp) {
    require_same_length(p, y);
    fp.validate();
    LossValue out;
    out.grad.resize(p.size(), 0.0);
    if (p.empty()) return out;
    const double n = static_cast<double>(p.size());
    const double a = fp.alpha, g = fp.gamma;
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool clamped = p[i] < kProbClamp || p[i] > 1.0 - kProbClamp;
        const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
        double li, di;
        if (y[i] > 0.5) {
            li = -a * std::pow(1.0 - q, g) * std::log(q);
            di = a * g * std::pow(1.0 - q, g - 1.0) * std::log(q) - a * std::pow(1.0 - q, g) / q;
        } else {
            li = -(1.0 - a) * std::pow(q, g) * std::log(1.0 - q);
            di = -(1.0 - a) * (g * std::pow(q, g - 1.0) * std::log(1.0 - q) - std::pow(q, g) / (1.0 - q));
        }
        sum += li;
        out.grad[i] = clamped ? 0.0 : di / n;
    }
    out.value = sum / n;
    return out;
}

LossValue dice_loss(std::span<const double> p, std::span<const double> y) {
    require_same_length(p, y);
    constexpr double eps = 1.0;
    double spy = 0.0, sp = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        spy += p[i] * y[i];
        sp += p[i];
        sy += y[i];
    }
    const double num = 2.0 * spy + eps;
    const double den = sp + sy + eps;
    LossValue out;
    out.value = 1.0 - num / den;
    out.grad.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out.grad[i] = -(2.0 * y[i] * den - num) / (den * den);
    return out;
}

ScalarLoss presence_loss(double x, bool exists) {
    const double yv = exists ? 1.0 : 0.0;
    ScalarLoss out;
    out.value = std::max(x, 0.0) - x * yv + std::log1p(std::exp(-std::abs(x)));
    const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    out.grad = sig - yv;
    return out;
}

void LossWeights::validate() const {
    for (double w : {mask, dice, ce, presence}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("loss weights must be finite and >= 0");
    }
}

double composite_loss(const LossComponents& c, const LossWeights& w) {
    w.validate();
    for (double v : {c.mask, c.dice, c.ce, c.presence}) {
        if (!std::isfinite(v)) throw InvalidArgument("loss components must be finite");
    }
    return w.mask * c.mask + w.dice * c.dice + w.ce * c.ce + w.presence * c.presence;
}

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
    if (v_.size() != rows * cols) throw DimensionMismatch("cost matrix value count differs from rows*cols");
}

namespace {

// Lexicographically smallest perfect matching of the square bipartite graph
// `adj` (row -> sorted columns), given any perfect matching `row_to_col`.
class LexMatcher {
public:
    LexMatcher(const std::vector<std::vector<std::size_t>>& adj, std::vector<std::size_t> row_to_col)
        : adj_(adj), r2c_(std::move(row_to_col)), c2r_(adj.size()), fixed_row_(adj.size(), false),
          fixed_col_(adj.size(), false), seen_(adj.size()) {
        for (std::size_t r = 0; r < r2c_.size(); ++r) c2r_[r2c_[r]] = r;
    }

    std::vector<std::size_t> run() {
        const std::size_t n = adj_.size();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c : adj_[r]) {
                if (fixed_col_[c]) continue;
                if (r2c_[r] == c || reassign(r, c)) break;
            }
            fixed_row_[r] = true;
            fixed_col_[r2c_[r]] = true;
        }
        return r2c_;
    }

private:
    // Moves row r to column c by rematching c's current row along an
    // alternating path that ends at r's old column.
    bool reassign(std::size_t r, std::size_t c) {
        const std::size_t other = c2r_[c];
        const std::size_t freed = r2c_[r];
        std::fill(seen_.begin(), seen_.end(), false);
        seen_[c] = true;
        fixed_row_[r] = true;
        const bool ok = augment(other, freed);
        fixed_row_[r] = false;
        if (!ok) return false;
        r2c_[r] = c;
        c2r_[c] = r;
        return true;
    }

    bool augment(std::size_t row, std::size_t target) {
        for (std::size_t c : adj_[row]) {
            if (fixed_col_[c] || seen_[c]) continue;
            seen_[c] = true;
            if (c == target || (!fixed_row_[c2r_[c]] && augment(c2r_[c], target))) {
                r2c_[row] = c;
                c2r_[c] = row;
                return true;
            }
        }
        return false;
    }

    const std::vector<std::vector<std::size_t>>& adj_;
    std::vector<std::size_t> r2c_, c2r_;
    std::vector<bool> fixed_row_, fixed_col_, seen_;
};

}  // namespace

Assignment hungarian_match(const CostMatrix& cost) {
    Assignment out;
    if (cost.empty()) return out;
    const std::size_t rows = cost.rows(), cols = cost.cols();
    const std::size_t n = std::max(rows, cols);
    double scale = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (!std::isfinite(cost(r, c))) throw InvalidArgument("cost matrix has a non-finite entry");
            scale = std::max(scale, std::abs(cost(r, c)));
        }
    }
    auto a = [&](std::size_t r, std::size_t c) { return r < rows && c < cols ? cost(r, c) : 0.0; };

    // Shortest augmenting path with potentials; 1-based, index 0 is a sentinel.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> r2c(n);
    for (std::size_t j = 1; j <= n; ++j) r2c[p[j] - 1] = j - 1;

    // Every optimal assignment uses only edges that are tight under the
    // optimal potentials, so the lexicographic tie-break is a matching
    // problem on that subgraph.
    const double eps = 1e-9 * (1.0 + scale) * static_cast<double>(n);
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            if (c == r2c[r] || a(r, c) - u[r + 1] - v[c + 1] <= eps) adj[r].push_back(c);
        }
    }
    r2c = LexMatcher(adj, std::move(r2c)).run();

    for (std::size_t r = 0; r < rows; ++r) {
        if (r2c[r] < cols) {
            out.pairs.emplace_back(r, r2c[r]);
            out.cost += cost(r, r2c[r]);
        }
    }
    return out;
}

std::vector<WeightedPair> one_to_many_augment(const CostMatrix& cost, const Assignment& base, int topk,
                                              double weight) {
    if (topk < 0) throw InvalidArgument("topk must be >= 0");
    std::vector<WeightedPair> out;
    for (const auto& [pr, gt] : base.pairs) {
        if (pr >= cost.rows() || gt >= cost.cols()) throw OutOfBounds("assignment pair outside the cost matrix");
        out.push_back({pr, gt, 1.0});
    }
    std::vector<std::size_t> order(cost.rows());
    for (std::size_t g = 0; g < cost.cols(); ++g) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return cost(x, g) < cost(y, g); });
        int taken = 0;
        for (std::size_t pr : order) {
            if (taken >= topk) break;
            const bool base_pair = std::any_of(base.pairs.begin(), base.pairs.end(),
                                               [&](const auto& bp) { return bp.first == pr && bp.second == g; });
            if (base_pair) continue;
            out.push_back({pr, g, weight});
            ++taken;
        }
    }
    return out;
}

void LrSchedule::validate() const {
    if (warmup_epochs < 1 || decay_epochs < 1 || cooldown_epochs < 0) {
        throw InvalidArgument("schedule needs warmup >= 1, decay >= 1, cooldown >= 0 epochs");
    }
    if (!(decoder_lr >= 0) || !(backbone_lr >= 0) || !(layer_decay > 0) || !(final_fraction >= 0)) {
        throw InvalidArgument("schedule rates must be non-negative");
    }
}

double LrSchedule::peak(const ParamGroup& g) const {
    switch (g.kind) {
        case GroupKind::Decoder: return decoder_lr;
        case GroupKind::Backbone: return backbone_lr * std::pow(layer_decay, g.depth);
        case GroupKind::TextEncoder: return 0.0;
    }
    return 0.0;
}

double LrSchedule::lr(const ParamGroup& g, int epoch) const {
    if (epoch < 1 || epoch > total_epochs()) throw OutOfBounds("epoch " + std::to_string(epoch) + " outside schedule");
    const double pk = peak(g);
    if (epoch <= warmup_epochs) return pk * epoch / warmup_epochs;
    if (epoch <= warmup_epochs + decay_epochs) {
        const double progress = static_cast<double>(epoch - warmup_epochs) / decay_epochs;
        const double pi = std::acos(-1.0);
        return pk * (final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(pi * progress)));
    }
    return pk * final_fraction;
}

std::vector<ParamGroup> default_param_groups(int backbone_layers) {
    std::vector<ParamGroup> g{{"decoder", GroupKind::Decoder, 0}};
    for (int d = 0; d < backbone_layers; ++d) g.push_back({"backbone." + std::to_string(d), GroupKind::Backbone, d});
    g.push_back({"text_encoder", GroupKind::TextEncoder, 0});
    return g;
}

std::vector<LrEntry> emit_schedule(const LrSchedule& s, std::span<const ParamGroup> groups) {
    s.validate();
    std::vector<LrEntry> out;
    for (int e = 1; e <= s.total_epochs(); ++e) {
        for (const auto& g : groups) out.push_back({e, g.name, s.lr(g, e)});
    }
    return out;
}

std::string schedule_csv(std::span<const LrEntry> entries) {
    std::string out = "epoch,group,lr\n";
    char buf[64];
    for (const auto& e : entries) {
        const auto res = std::to_chars(buf, buf + sizeof buf, e.lr);
        out += std::to_string(e.epoch) + "," + e.group + "," + std::string(buf, res.ptr) + "\n";
    }
    return out;
}

}  // namespace irsis
