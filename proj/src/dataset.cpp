#include "irsis/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "irsis/error.hpp"
#include "irsis/image.hpp"
#include "irsis/mask.hpp"
#include "irsis/scene.hpp"

namespace irsis {

using nlohmann::json;

namespace {

std::string string_field(const json& j, const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

std::string optional_label(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    if (!j.at(key).is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

}  // namespace

ExpandResult expand(const std::vector<InstrumentAnnotation>& annotations) {
    ExpandResult out;
    std::vector<std::size_t> order(annotations.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = annotations[a];
        const auto& y = annotations[b];
        if (x.image_id != y.image_id) return x.image_id < y.image_id;
        return x.index < y.index;
    });
    for (std::size_t i : order) {
        const auto& a = annotations[i];
        const auto missing = std::find(a.labels.begin(), a.labels.end(), std::string{});
        if (missing != a.labels.end()) {
            out.errors.push_back({i + 1, "annotation " + std::to_string(a.index) + " of image '" + a.image_id +
                                             "' has no L" + std::to_string(missing - a.labels.begin()) + " label"});
            continue;
        }
        for (int level = 0; level < 3; ++level) out.samples.push_back({a.image_id, a.labels[level], level, a.mask_file});
    }
    return out;
}

LoadedCorpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read corpus '" + path.string() + "'");
    LoadedCorpus c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            if (!j.is_object()) throw FormatError("record is not an object");
            const std::string image_id = string_field(j, "image_id");
            if (image_id.empty()) throw FormatError("image_id is empty");
            if (j.contains("instruments")) {
                const std::string image_file = string_field(j, "image_file");
                const auto& list = j.at("instruments");
                if (!list.is_array()) throw FormatError("'instruments' must be an array");
                c.image_ids.insert(image_id);
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const auto& e = list[k];
                    if (!e.is_object()) throw FormatError("instrument " + std::to_string(k) + " is not an object");
                    InstrumentAnnotation a;
                    a.image_id = image_id;
                    a.image_file = image_file;
                    a.index = e.contains("index") ? e.at("index").get<int>() : static_cast<int>(k);
                    a.mask_file = string_field(e, "mask_file");
                    a.labels = {optional_label(e, "l0"), optional_label(e, "l1"), optional_label(e, "l2")};
                    c.annotations.push_back(std::move(a));
                    c.annotation_lines.push_back(lineno);
                }
            } else {
                ExpandedSample s;
                s.image_id = image_id;
                s.query = string_field(j, "query");
                if (!j.contains("level") || !j.at("level").is_number_integer()) {
                    throw FormatError("field 'level' must be an integer");
                }
                s.level = j.at("level").get<int>();
                if (s.level < 0 || s.level > 2) throw FormatError("level must be 0, 1 or 2");
                s.mask_file = string_field(j, "mask_file");
                c.expanded.push_back(std::move(s));
                c.expanded_lines.push_back(lineno);
            }
        } catch (const json::exception& e) {
            c.errors.push_back({lineno, e.what()});
        } catch (const Error& e) {
            c.errors.push_back({lineno, e.what()});
        }
    }
    return c;
}

CorpusStats validate_corpus(const std::filesystem::path& path, bool check_files) {
    LoadedCorpus c = load_corpus(path);
    CorpusStats st;
    st.errors = std::move(c.errors);

    std::map<std::pair<std::string, int>, std::size_t> seen;
    std::vector<InstrumentAnnotation> unique;
    for (std::size_t i = 0; i < c.annotations.size(); ++i) {
        const auto& a = c.annotations[i];
        const auto key = std::make_pair(a.image_id, a.index);
        if (auto it = seen.find(key); it != seen.end()) {
            st.errors.push_back({c.annotation_lines[i], "duplicate annotation (image '" + a.image_id + "', index " +
                                                            std::to_string(a.index) + "), first seen on line " +
                                                            std::to_string(it->second)});
            continue;
        }
        seen.emplace(key, c.annotation_lines[i]);
        unique.push_back(a);
    }
    ExpandResult ex = expand(unique);
    for (auto& e : ex.errors) {
        // expand reports positions in `unique`; map back to corpus lines
        const auto& a = unique[e.line - 1];
        e.line = seen.at({a.image_id, a.index});
        st.errors.push_back(std::move(e));
    }

    std::set<std::string> images = c.image_ids;
    for (const auto& s : c.expanded) images.insert(s.image_id);
    st.images = images.size();
    st.annotations = unique.size() - ex.errors.size();
    st.expanded_records = c.expanded.size();
    st.expanded = ex.samples.size() + c.expanded.size();
    st.divisible_by_3 = st.expanded % 3 == 0;
    if (!st.divisible_by_3) {
        st.errors.push_back({0, "expanded sample count " + std::to_string(st.expanded) + " is not a multiple of 3"});
    }
    for (const auto& s : ex.samples) ++st.vocabulary[s.level][s.query];
    for (const auto& s : c.expanded) ++st.vocabulary[s.level][s.query];

    if (check_files) {
        const auto base = path.parent_path();
        std::map<std::string, std::pair<int, int>> dims;
        for (std::size_t i = 0; i < c.annotations.size(); ++i) {
            const auto& a = c.annotations[i];
            const std::size_t line = c.annotation_lines[i];
            try {
                auto it = dims.find(a.image_file);
                if (it == dims.end()) {
                    const RgbImage img = decode_png(read_file(base / a.image_file));
                    it = dims.emplace(a.image_file, std::make_pair(img.width(), img.height())).first;
                }
                const BinaryMask m = rle_decode(read_file(base / a.mask_file));
                if (m.width() != it->second.first || m.height() != it->second.second) {
                    st.errors.push_back({line, "mask '" + a.mask_file + "' size differs from image '" + a.image_file + "'"});
                } else if (m.none()) {
                    st.errors.push_back({line, "mask '" + a.mask_file + "' is empty"});
                }
            } catch (const Error& e) {
                st.errors.push_back({line, e.what()});
            }
        }
        for (std::size_t i = 0; i < c.expanded.size(); ++i) {
            try {
                rle_decode(read_file(base / c.expanded[i].mask_file));
            } catch (const Error& e) {
                st.errors.push_back({c.expanded_lines[i], e.what()});
            }
        }
    }
    std::stable_sort(st.errors.begin(), st.errors.end(),
                     [](const CorpusIssue& a, const CorpusIssue& b) { return a.line < b.line; });
    return st;
}

std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpusOptions& o) {
    if (o.images == 0 && o.annotations > 0) throw InvalidArgument("annotations need at least one image");
    if (o.images > 0 && o.annotations > 4 * o.images) throw InvalidArgument("at most 4 instruments per image");
    std::filesystem::create_directories(dir);
    const auto corpus = dir / "corpus.jsonl";
    std::ostringstream out;
    const std::size_t base = o.images ? o.annotations / o.images : 0;
    const std::size_t extra = o.images ? o.annotations % o.images : 0;
    for (std::size_t i = 0; i < o.images; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "img_%05zu", i);
        SceneOptions so;
        so.instruments = static_cast<int>(base + (i < extra ? 1 : 0));
        const SceneSpec spec = random_scene(o.seed * 1000003ULL + i, so);
        const std::string image_file = std::string("images/") + id + ".png";
        json rec{{"image_id", id}, {"image_file", image_file}, {"instruments", json::array()}};
        std::optional<RenderedScene> scene;
        if (o.write_files) {
            scene = render_scene(spec);
            write_file(dir / image_file, encode_png(scene->image));
        }
        for (std::size_t k = 0; k < spec.instruments.size(); ++k) {
            const std::string mask_file = std::string("masks/") + id + "_" + std::to_string(k) + ".irle";
            if (scene) write_file(dir / mask_file, rle_encode(scene->instruments[k].mask));
            const auto& l = spec.instruments[k].labels;
            rec["instruments"].push_back({{"mask_file", mask_file}, {"l0", l.l0}, {"l1", l.l1}, {"l2", l.l2}});
        }
        out << rec.dump() << '\n';
    }
    write_file(corpus, out.str());
    return corpus;
}

std::string expanded_jsonl(const std::vector<ExpandedSample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += json{{"image_id", s.image_id}, {"query", s.query}, {"level", s.level}, {"mask_file", s.mask_file}}.dump();
        out += '\n';
    }
    return out;
}

}  // namespace irsis
