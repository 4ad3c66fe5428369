#pragma once

#include <torch/torch.h>

#include <json.hpp>

#include "stainlab/pearson.hpp"

namespace stainlab::losses {

/// Weights of the combined generator objective: adversarial + lambda*L1 + gamma*(1 - CC).
struct LossWeights {
    double alpha = 1.0;       // weight of the fake-sample term in the discriminator loss
    double lambda_l1 = 100.0;
    double gamma_cc = 10.0;

    void validate() const;
};

struct LossBreakdown {
    double d_loss = 0.0;
    double g_adv = 0.0;
    double g_l1 = 0.0;
    double g_cc_penalty = 0.0;
    double g_total = 0.0;

    nlohmann::json to_json(std::int64_t step) const;
};

/// Scores are clamped to [eps, 1-eps] before any logarithm.
inline constexpr double kScoreEpsilon = 1e-7;

// Every loss below is a custom autograd function with a closed-form backward pass.

/// -mean(log d_real) - alpha * mean(log(1 - d_fake)); minimising it is the discriminator's max step.
torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake, double alpha);

/// Non-saturating generator term: -mean(log d_fake).
torch::Tensor generator_adv_loss(const torch::Tensor& d_fake);

/// Mean absolute difference.
torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& target);

/// Pearson CC over all elements of two tensors (computed in 64-bit).
PearsonResult pearson_cc(const torch::Tensor& a, const torch::Tensor& b);

/// 1 - pearson_cc(target, generated) over all elements jointly; in [0, 2]. Zero gradient when
/// either input is constant.
torch::Tensor cc_penalty(const torch::Tensor& generated, const torch::Tensor& target);

struct GeneratorObjective {
    torch::Tensor total;  // differentiable; equals breakdown.g_total
    LossBreakdown breakdown;
};

/// g_adv + lambda*l1 + gamma*cc_penalty. For 4-D batches the CC penalty is taken per sample
/// and averaged over the batch.
GeneratorObjective combined_generator_loss(const torch::Tensor& d_fake, const torch::Tensor& generated,
                                           const torch::Tensor& target, const LossWeights& w);

}  // namespace stainlab::losses
