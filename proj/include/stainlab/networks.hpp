#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "stainlab/image.hpp"

namespace stainlab::nets {

/// U-Net generator shape contract. The encoder halves the resolution `depth` times, so the
/// bottleneck is 1x1 exactly when 2^depth == input_size.
struct GeneratorSpec {
    int input_size = 1024;
    int depth = 10;
    int base_channels = 64;
    int max_channels = 512;
    double dropout_rate = 0.5;
    int dropout_decoder_layers = 3;

    /// Spec for a square input with depth log2(input_size). Throws ConfigError if not a power of two.
    static GeneratorSpec for_size(int input_size);

    void validate() const;
    /// min(base * 2^level, max) for encoder level 0..depth-1.
    int channels_at(int level) const;

    nlohmann::json to_json() const;
    static GeneratorSpec from_json(const nlohmann::json& j);
    bool operator==(const GeneratorSpec&) const = default;
};

/// Trainable parameters of a generator built from `spec`. With c_k = channels_at(k), d = depth:
///   encoder: 16*3*c_0 + c_0                          (outermost conv, biased)
///          + sum_{k=1}^{d-2} (16*c_{k-1}*c_k + 2*c_k)  (conv + affine instance norm)
///          + 16*c_{d-2}*c_{d-1} + c_{d-1}             (bottleneck conv, biased)
///   decoder: 16*c_{d-1}*c_{d-2} + 2*c_{d-2}           (innermost transposed conv + norm)
///          + sum_{k=1}^{d-2} (32*c_k*c_{k-1} + 2*c_{k-1})
///          + 32*c_0*3 + 3                             (outermost transposed conv, biased)
std::int64_t generator_parameter_count(const GeneratorSpec& spec);

/// PatchGAN: `conv_layers` feature convolutions (all but the last stride 2) and a 1-channel
/// stride-1 output convolution, applied to the 6-channel (condition, candidate) stack.
struct DiscriminatorSpec {
    int input_size = 256;
    int conv_layers = 4;
    int base_channels = 64;
    int max_channels = 512;

    void validate() const;
    int channels_at(int layer) const;
    /// Side of the score map: input_size / 2^(conv_layers-1) - 2.
    int score_map_size() const;
    /// Receptive field of one score in input pixels (70 for the default ladder).
    int receptive_field() const;

    nlohmann::json to_json() const;
    static DiscriminatorSpec from_json(const nlohmann::json& j);
    bool operator==(const DiscriminatorSpec&) const = default;
};

class UNetGeneratorImpl : public torch::nn::Module {
public:
    explicit UNetGeneratorImpl(const GeneratorSpec& spec);

    /// x: [N,3,S,S] in [-1,1]. With stochastic=true dropout is active (the noise source); with
    /// stochastic=false the map is deterministic.
    torch::Tensor forward(const torch::Tensor& x, bool stochastic = true);

    /// Spatial side of the bottleneck activation for the last forward call.
    std::int64_t last_bottleneck_size() const { return last_bottleneck_; }

    /// Replaces the skip tensor of encoder level `level` (0..depth-2) by zeros. For ablations.
    void set_skip_enabled(int level, bool enabled);

    const GeneratorSpec& spec() const { return spec_; }

private:
    GeneratorSpec spec_;
    std::vector<torch::nn::Sequential> down_;
    std::vector<torch::nn::Sequential> up_;
    std::vector<bool> skip_enabled_;
    std::int64_t last_bottleneck_ = 0;
};
TORCH_MODULE(UNetGenerator);

class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    explicit PatchDiscriminatorImpl(const DiscriminatorSpec& spec);

    /// Probability map [N,1,M,M] in (0,1) for `candidate` being the real target of `condition`.
    torch::Tensor forward(const torch::Tensor& condition, const torch::Tensor& candidate);

    const DiscriminatorSpec& spec() const { return spec_; }

private:
    DiscriminatorSpec spec_;
    torch::nn::Sequential body_;
};
TORCH_MODULE(PatchDiscriminator);

UNetGenerator build_generator(const GeneratorSpec& spec);
PatchDiscriminator build_discriminator(const DiscriminatorSpec& spec);

/// Forward pass with an input shape check; see UNetGeneratorImpl::forward.
torch::Tensor generator_forward(UNetGenerator& model, const torch::Tensor& x, bool stochastic);

std::int64_t parameter_count(const torch::nn::Module& m);

/// [0,1] image to a [1,3,H,W] float tensor in [-1,1].
torch::Tensor to_model_input(const Image& img);
/// [1,3,H,W] (or [3,H,W]) tensor in [-1,1] back to a [0,1] image.
Image from_model_output(const torch::Tensor& t);

}  // namespace stainlab::nets
