#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stainlab/config.hpp"
#include "stainlab/image.hpp"
#include "stainlab/losses.hpp"
#include "stainlab/metrics.hpp"
#include "stainlab/networks.hpp"
#include "stainlab/patch_pipeline.hpp"
#include "stainlab/random.hpp"
#include "stainlab/wsi_inference.hpp"

namespace stainlab::train {

/// stain: nonstained -> stained; destain: stained -> nonstained.
enum class Direction { stain, destain };

std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

struct AdamParams {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
};

struct TrainConfig {
    Direction direction = Direction::stain;
    int epochs = 10;
    int batch_size = 1;
    AdamParams adam;
    losses::LossWeights weights;
    bool flip_augment = true;
    std::uint64_t seed = 0;
    /// Write an intermediate checkpoint every N steps; 0 disables.
    int checkpoint_every = 0;
    /// Cap on validation patches scored at each epoch end; 0 scores all.
    int val_max_patches = 0;
    nets::GeneratorSpec generator = nets::GeneratorSpec::for_size(1024);
    nets::DiscriminatorSpec discriminator{1024};

    void validate() const;

    /// Flat key-value form; every field round-trips through apply().
    config::KeyValues to_key_values() const;
    /// Overrides fields named in `kv`. Unknown keys are a ConfigError. Setting `input_size`
    /// resizes both networks (generator depth follows).
    void apply(const config::KeyValues& kv);
};

/// One oriented training example: `input` is fed to the generator, `target` is what it should produce.
struct Example {
    std::string slide_id;
    int x0 = 0;
    int y0 = 0;
    Image input;
    Image target;
};

Example orient(const patch::PatchPair& pair, Direction direction);

struct FlipChoice {
    bool horizontal = false;
    bool vertical = false;
};

/// Applies the same flips to both images of the pair.
patch::PatchPair apply_flips(patch::PatchPair pair, FlipChoice flips);
Example apply_flips(Example ex, FlipChoice flips);

/// Horizontal and vertical flips, each with probability 1/2, applied identically to both patches.
FlipChoice draw_flips(rng::Engine& engine);
patch::PatchPair augment(patch::PatchPair pair, rng::Engine& engine);

/// Random-access supply of training examples.
class ExampleSource {
public:
    virtual ~ExampleSource() = default;
    virtual std::size_t size() const = 0;
    virtual Example get(std::size_t i) const = 0;
};

/// Patches of one split of an on-disk dataset, oriented for a direction.
class PatchSource : public ExampleSource {
public:
    PatchSource(const patch::PatchDataset& data, patch::Split split, Direction direction);
    std::size_t size() const override { return entries_.size(); }
    Example get(std::size_t i) const override;

private:
    const patch::PatchDataset* data_;
    std::vector<patch::IndexEntry> entries_;
    Direction direction_;
};

class MemorySource : public ExampleSource {
public:
    explicit MemorySource(std::vector<Example> examples) : examples_(std::move(examples)) {}
    std::size_t size() const override { return examples_.size(); }
    Example get(std::size_t i) const override { return examples_.at(i); }

private:
    std::vector<Example> examples_;
};

struct TrainState {
    std::int64_t epoch = 0;  // completed epochs
    std::int64_t global_step = 0;
    std::int64_t d_updates = 0;
    std::int64_t g_updates = 0;
    std::deque<losses::LossBreakdown> history;  // most recent steps, bounded

    static constexpr std::size_t kHistory = 256;
};

struct EpochMetrics {
    std::int64_t epoch = 0;
    metrics::Aggregate val;
};

/// Owns one generator/discriminator pair and their optimisers for one model direction.
class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    /// Restores models, optimiser moments, counters and RNG state from a checkpoint.
    static Trainer resume(const std::filesystem::path& checkpoint);

    /// One discriminator update followed by one generator update on `batch`.
    losses::LossBreakdown step(const std::vector<Example>& batch);

    /// Runs the remaining epochs over `train`. Writes loss_log.jsonl, val_metrics.jsonl,
    /// periodic checkpoints under checkpoints/ and final.ckpt into `out_dir`.
    std::vector<EpochMetrics> fit(const ExampleSource& train, const ExampleSource* val,
                                  const std::filesystem::path& out_dir);

    /// Examples from these slides are refused by step().
    void set_holdout_slides(std::set<std::string> slides) { holdout_ = std::move(slides); }

    void save(const std::filesystem::path& path) const;

    const TrainConfig& config() const { return cfg_; }
    const TrainState& state() const { return state_; }
    nets::UNetGenerator& generator() { return generator_; }
    nets::PatchDiscriminator& discriminator() { return discriminator_; }

    /// Mean SSIM / CC of deterministic generation over `source`.
    metrics::Aggregate validate(const ExampleSource& source, std::size_t limit = 0);

private:
    Trainer(TrainConfig cfg, bool seed_models);

    TrainConfig cfg_;
    TrainState state_;
    nets::UNetGenerator generator_{nullptr};
    nets::PatchDiscriminator discriminator_{nullptr};
    std::unique_ptr<torch::optim::Adam> g_opt_;
    std::unique_ptr<torch::optim::Adam> d_opt_;
    torch::Tensor rng_state_;  // private dropout stream, swapped into the global generator per step
    std::set<std::string> holdout_;
};

/// Deterministic (dropout off) translation of a [0,1] image through `model`.
Image translate(nets::UNetGenerator& model, const Image& input, bool stochastic = false);

/// Wraps a generator as a tile translator for slide inference.
wsi::TileTranslator make_translator(nets::UNetGenerator model);

/// Loads the generator stored in a checkpoint written by Trainer::save.
nets::UNetGenerator load_generator(const std::filesystem::path& checkpoint);

/// Trains a fresh staining model whose inputs are the destainer's outputs on the stained patches
/// and whose targets are the stained patches themselves.
std::vector<EpochMetrics> train_secondary_stainer(nets::UNetGenerator& destainer, const patch::PatchDataset& data,
                                                  TrainConfig cfg, const std::filesystem::path& out_dir);

/// Convenience: trains on the train split of `data`, validates on its val split.
std::vector<EpochMetrics> train(const patch::PatchDataset& data, const TrainConfig& cfg,
                                const std::filesystem::path& out_dir,
                                const std::optional<std::filesystem::path>& resume_from = std::nullopt);

}  // namespace stainlab::train
