#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stainlab/image.hpp"
#include "stainlab/metrics.hpp"
#include "stainlab/patch_pipeline.hpp"
#include "stainlab/wsi_inference.hpp"

namespace stainlab::synth {

using Rgb = std::array<float, 3>;

/// Tissue classes drawn by the renderer.
enum class Tissue : std::uint8_t { background, stroma, fiber, epithelium, lumen, nucleus };
inline constexpr int kTissueClasses = 6;

/// H&E-like colours per tissue class, indexed by Tissue.
struct Palette {
    std::array<Rgb, kTissueClasses> stained;

    static Palette he();
};

struct SynthConfig {
    std::uint64_t seed = 0;
    int slide_size = 512;
    int n_glands = 10;
    int n_nuclei_per_gland = 12;
    int n_stroma_fibers = 24;
    Palette palette = Palette::he();
    /// Contrast of the nonstained rendering relative to the stained one (paraffin translucency).
    float translucency = 0.35f;
};

struct SlidePair {
    Image nonstained;
    Image stained;
    /// Per-pixel tissue class, row-major.
    std::vector<Tissue> labels;
};

/// Colour of each class in the nonstained rendering: low-contrast near-gray on white.
std::array<Rgb, kTissueClasses> nonstained_palette(const SynthConfig& cfg);

/// Renders a registered pair; the same seed always yields the same bytes.
SlidePair generate_pair(const SynthConfig& cfg);

/// Writes `slides` pairs under `out_dir/slides/` and a split manifest `out_dir/manifest.jsonl`.
/// Slide i uses a seed derived from (seed, i).
std::vector<patch::SlidePairRecord> write_corpus(const std::filesystem::path& out_dir, const SynthConfig& base,
                                                 int slides, std::size_t train_count);

struct SlideScore {
    std::string slide_id;
    double ssim = 0.0;
    double cc = 0.0;
};

struct CycleReport {
    metrics::MetricsReport staining;
    metrics::MetricsReport cycle;
    std::vector<SlideScore> staining_slides;
    std::vector<SlideScore> cycle_slides;

    nlohmann::json to_json() const;
};

struct CycleModels {
    wsi::TileTranslator stainer;
    wsi::TileTranslator destainer;
    wsi::TileTranslator secondary_stainer;
};

/// (i) stainer on held-out nonstained patches vs stained ground truth; (ii) destainer followed by
/// the secondary stainer on stained patches vs the same ground truth. When `slide_plan` is given,
/// whole held-out slides are also stitched and scored.
CycleReport run_cycle_benchmark(const patch::PatchDataset& data, const CycleModels& models,
                                patch::Split split = patch::Split::val,
                                const std::optional<wsi::StitchPlan>& slide_plan = std::nullopt);

}  // namespace stainlab::synth
