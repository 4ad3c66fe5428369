#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stainlab/image.hpp"
#include "stainlab/patch_pipeline.hpp"

namespace stainlab::metrics {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Mean SSIM over the valid-region local map, computed per channel and averaged.
/// Inputs are in [0,1]. Throws ContractError on shape mismatch or images smaller than the window.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Pearson CC of the two images over all samples (same definition the CC loss uses).
double image_cc(const Image& a, const Image& b);

/// Mean over horizontal and vertical tile seams of |(out_l - out_r) - (ref_l - ref_r)|, i.e. the
/// jump across a seam in excess of the jump present in the reference. Seams lie at multiples
/// of `tile` pixels.
double seam_discontinuity(const Image& output, const Image& reference, int tile);

struct PatchScore {
    std::string slide_id;
    int x0 = 0;
    int y0 = 0;
    double ssim = 0.0;
    double cc = 0.0;
};

struct Aggregate {
    double mean_ssim = 0.0;
    double mean_cc = 0.0;
    std::size_t count = 0;
};

struct MetricsReport {
    std::vector<PatchScore> per_patch;
    Aggregate aggregate;
    /// Relative paths of generated patches that had no counterpart; excluded from aggregates.
    std::vector<std::string> missing;

    void recompute_aggregate();
    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
};

enum class TargetColumn { stained, nonstained };

/// Scores `generated_dir/<rel>` against `target_dir/<rel>` for every index entry, where <rel> is
/// the entry's path in the chosen column. The index is `target_dir/index.jsonl` unless given.
MetricsReport evaluate(const std::filesystem::path& generated_dir, const std::filesystem::path& target_dir,
                       const std::vector<patch::IndexEntry>& index, TargetColumn column = TargetColumn::stained);

}  // namespace stainlab::metrics
