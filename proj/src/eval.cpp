#include "irsis/eval.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

#include "irsis/image.hpp"

namespace irsis {

ScorePair score(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    const std::int64_t inter = intersection_area(a, b);
    const std::int64_t sum = a.area() + b.area();
    if (sum == 0) return {1.0, 1.0};
    return {2.0 * static_cast<double>(inter) / static_cast<double>(sum),
            static_cast<double>(inter) / static_cast<double>(sum - inter)};
}

double dice(const BinaryMask& a, const BinaryMask& b) { return score(a, b).dice; }
double iou(const BinaryMask& a, const BinaryMask& b) { return score(a, b).iou; }

std::map<std::string, std::string> load_class_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read labels file '" + path.string() + "'");
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto sep = line.find_first_of("\t,");
        if (sep == std::string::npos || sep == 0 || sep + 1 == line.size()) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'name<TAB>label'");
        }
        out[line.substr(0, sep)] = line.substr(sep + 1);
    }
    return out;
}

namespace {

std::set<std::string> irle_names(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("not a directory: '" + dir.string() + "'");
    std::set<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".irle") out.insert(e.path().filename().string());
    }
    return out;
}

}  // namespace

EvalReport batch_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                      const std::optional<std::map<std::string, std::string>>& labels) {
    const auto preds = irle_names(pred_dir);
    const auto gts = irle_names(gt_dir);
    EvalReport r;
    for (const auto& n : preds) {
        if (!gts.count(n)) r.unmatched.push_back("pred/" + n);
    }
    for (const auto& n : gts) {
        if (!preds.count(n)) r.unmatched.push_back("gt/" + n);
    }

    std::map<std::string, std::pair<double, std::size_t>> classes;
    double sum_dice = 0.0, sum_iou = 0.0;
    for (const auto& n : preds) {
        if (!gts.count(n)) continue;
        ScorePair s;
        try {
            s = score(rle_decode(read_file(pred_dir / n)), rle_decode(read_file(gt_dir / n)));
        } catch (const Error& e) {
            r.errors.push_back({n, e.what()});
            continue;
        }
        std::string label = "all";
        if (labels) {
            auto it = labels->find(n);
            if (it == labels->end()) it = labels->find(std::filesystem::path(n).stem().string());
            if (it == labels->end()) {
                r.errors.push_back({n, "no class label"});
                continue;
            }
            label = it->second;
        }
        ++r.n_images;
        sum_dice += s.dice;
        sum_iou += s.iou;
        auto& c = classes[label];
        c.first += s.iou;
        ++c.second;
    }
    if (r.n_images > 0) {
        r.mean_dice = sum_dice / static_cast<double>(r.n_images);
        r.mean_iou = sum_iou / static_cast<double>(r.n_images);
    }
    double sum_class = 0.0;
    for (const auto& [label, acc] : classes) {
        r.per_class.push_back({label, acc.first / static_cast<double>(acc.second), acc.second});
        sum_class += r.per_class.back().iou;
    }
    if (!r.per_class.empty()) r.mean_class_iou = sum_class / static_cast<double>(r.per_class.size());
    return r;
}

std::string EvalReport::to_json() const {
    using nlohmann::json;
    json pc = json::array();
    for (const auto& c : per_class) pc.push_back({{"label", c.label}, {"iou", c.iou}, {"n", c.n}});
    json errs = json::array();
    for (const auto& e : errors) errs.push_back({{"file", e.file}, {"message", e.message}});
    return json{{"n_images", n_images},     {"mean_dice", mean_dice},   {"mean_iou", mean_iou},
                {"per_class", pc},          {"mean_class_iou", mean_class_iou},
                {"unmatched", unmatched},   {"errors", errs}}
        .dump(2);
}

}  // namespace irsis
