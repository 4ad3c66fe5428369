#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stainlab/image.hpp"

namespace stainlab::patch {

enum class Split { train, val };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// A registered nonstained/stained whole-slide pair.
struct SlidePairRecord {
    std::string slide_id;
    std::filesystem::path nonstained_path;
    std::filesystem::path stained_path;
    Split split = Split::train;
};

enum class Normalization { unit_interval, signed_unit };

struct ExtractionConfig {
    int patch_size = 1024;
    int stride = 256;  // a quarter of the patch
    double tissue_threshold = 0.2;
    Normalization normalization = Normalization::unit_interval;

    /// Throws ConfigError unless 1 <= stride <= patch_size and threshold is in [0,1].
    void validate() const;
};

/// Co-located patches cut from the same window of both slides; samples in [0,1].
struct PatchPair {
    std::string slide_id;
    int x0 = 0;
    int y0 = 0;
    int size = 0;
    Image nonstained;
    Image stained;
};

struct Window {
    int x0 = 0;
    int y0 = 0;
    bool operator==(const Window&) const = default;
};

/// All top-left offsets of a full sliding window, row-major. Remainder pixels are not covered.
std::vector<Window> enumerate_windows(int image_width, int image_height, const ExtractionConfig& cfg);

/// Closed-form count floor((W-size)/stride)+1 per axis, multiplied.
std::uint64_t window_count(int image_width, int image_height, const ExtractionConfig& cfg);

inline constexpr double kWhitenessThreshold = 0.9;

/// Fraction of pixels that are not background (background: every channel > whiteness).
double tissue_fraction(const Image& patch, double whiteness = kWhitenessThreshold);

/// Grayscale Pearson CC between the two patches of a pair; used as a registration sanity check.
double alignment_cc(const PatchPair& pair);

/// Checks that both rasters exist, are 8-bit RGB and have identical dimensions.
/// Throws IoError (with slide_id) or DataError("unregistered pair").
void validate_record(const SlidePairRecord& record);

/// Streams every window whose stained tissue fraction reaches the threshold to `sink`.
/// At most `patch_size` rows of each slide are resident at any time.
/// Returns the number of pairs emitted.
std::size_t extract_pairs(const SlidePairRecord& record, const ExtractionConfig& cfg,
                          const std::function<void(PatchPair&&)>& sink);

/// Assigns splits per slide: `train_count` slides (chosen by a seeded shuffle) get train,
/// the rest val. Output preserves input order.
std::vector<SlidePairRecord> split_manifest(std::vector<SlidePairRecord> records, std::size_t train_count,
                                            std::uint64_t seed);

/// JSON-lines manifest. Relative paths are resolved against the manifest's directory.
std::vector<SlidePairRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<SlidePairRecord>& records);

/// One line of the on-disk patch index. PNG paths are relative to the index directory.
struct IndexEntry {
    std::string slide_id;
    int x0 = 0;
    int y0 = 0;
    std::string nonstained_png;
    std::string stained_png;
};

std::vector<IndexEntry> read_index(const std::filesystem::path& path);

/// A patch dataset on disk: <dir>/index.jsonl, <dir>/manifest.jsonl and the PNG pairs.
struct PatchDataset {
    std::filesystem::path root;
    std::vector<IndexEntry> entries;
    std::vector<SlidePairRecord> manifest;

    static PatchDataset open(const std::filesystem::path& dir);

    std::optional<Split> split_of(const std::string& slide_id) const;
    std::vector<IndexEntry> entries_in(Split s) const;
    PatchPair load(const IndexEntry& entry) const;
};

struct ExtractionSummary {
    std::size_t pairs = 0;
    std::vector<std::pair<std::string, std::size_t>> per_slide;
    std::size_t alignment_warnings = 0;
};

/// Extracts every slide of the manifest into `out_dir` as 8-bit PNG pairs plus index.jsonl,
/// and copies the manifest (absolute paths) next to the index.
ExtractionSummary write_patch_dataset(const std::vector<SlidePairRecord>& records, const ExtractionConfig& cfg,
                                      const std::filesystem::path& out_dir);

}  // namespace stainlab::patch
