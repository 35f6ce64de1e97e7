// dataset.hpp
//
// Multi-level annotation corpus: every instrument carries a general (L0),
// category (L1) and specific (L2) label, and expands into one training sample
// per level.
//
// Corpus files hold one JSON record per line, either an annotation record
//   {"image_id", "image_file", "instruments": [{"mask_file", "l0", "l1", "l2", "index"?}]}
// or an expanded record
//   {"image_id", "query", "level", "mask_file"}.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace irsis {

struct InstrumentAnnotation {
    std::string image_id;
    std::string image_file;
    int index = 0;  ///< position within the image
    std::string mask_file;
    std::array<std::string, 3> labels;  ///< L0, L1, L2

    friend bool operator==(const InstrumentAnnotation&, const InstrumentAnnotation&) = default;
};

struct ExpandedSample {
    std::string image_id;
    std::string query;
    int level = 0;
    std::string mask_file;

    friend bool operator==(const ExpandedSample&, const ExpandedSample&) = default;
    friend auto operator<=>(const ExpandedSample&, const ExpandedSample&) = default;
};

struct CorpusIssue {
    std::size_t line = 0;  ///< 1-based; 0 when not tied to a line
    std::string message;

    friend bool operator==(const CorpusIssue&, const CorpusIssue&) = default;
};

struct ExpandResult {
    std::vector<ExpandedSample> samples;
    std::vector<CorpusIssue> errors;  ///< one per skipped annotation; line = position in the input
};

// Three samples per annotation ordered by (image_id, index, level).
// Annotations missing a label are skipped and reported.
ExpandResult expand(const std::vector<InstrumentAnnotation>& annotations);

struct LoadedCorpus {
    std::vector<InstrumentAnnotation> annotations;
    std::vector<std::size_t> annotation_lines;
    std::vector<ExpandedSample> expanded;
    std::vector<std::size_t> expanded_lines;
    std::set<std::string> image_ids;
    std::vector<CorpusIssue> errors;
};

LoadedCorpus load_corpus(const std::filesystem::path& path);

struct CorpusStats {
    std::size_t images = 0;
    std::size_t annotations = 0;
    std::size_t expanded = 0;  ///< 3 x annotations plus expanded records in the file
    std::size_t expanded_records = 0;
    bool divisible_by_3 = true;
    std::array<std::map<std::string, std::size_t>, 3> vocabulary;  ///< query -> count, per level
    std::vector<CorpusIssue> errors;

    bool ok() const { return errors.empty() && divisible_by_3; }
};

// With `check_files`, image and mask paths (relative to the corpus file's
// directory) must decode, and masks must be nonempty and match their image.
CorpusStats validate_corpus(const std::filesystem::path& path, bool check_files = false);

struct SyntheticCorpusOptions {
    std::size_t images = 10;
    std::size_t annotations = 20;  ///< spread as evenly as possible, at most 4 per image
    std::uint64_t seed = 1;
    bool write_files = true;  ///< render images and masks; otherwise records only
};

// Writes corpus.jsonl (plus images/ and masks/) under `dir`; returns the
// corpus file path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpusOptions& options);

std::string expanded_jsonl(const std::vector<ExpandedSample>& samples);

}  // namespace irsis
