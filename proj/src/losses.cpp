#include "stainlab/losses.hpp"

#include <cmath>

#include "stainlab/error.hpp"

namespace stainlab::losses {

using torch::Tensor;
using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

void LossWeights::validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(lambda_l1) || !std::isfinite(gamma_cc))
        throw ConfigError("loss weights must be finite");
    if (lambda_l1 < 0.0 || gamma_cc < 0.0) throw ConfigError("lambda_l1 and gamma_cc must be non-negative");
}

nlohmann::json LossBreakdown::to_json(std::int64_t step) const {
    return {{"step", step},       {"d_loss", d_loss},           {"g_adv", g_adv},
            {"g_l1", g_l1},       {"g_cc_penalty", g_cc_penalty}, {"g_total", g_total}};
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw ContractError(std::string(what) + ": shape mismatch");
}

Tensor clamp_scores(const Tensor& d) { return d.clamp(kScoreEpsilon, 1.0 - kScoreEpsilon); }

// d/dd of clamp: 1 inside the open interval, 0 where the clamp is active.
Tensor clamp_mask(const Tensor& d) { return ((d > kScoreEpsilon) & (d < 1.0 - kScoreEpsilon)).to(d.scalar_type()); }

struct DiscriminatorLossFn : torch::autograd::Function<DiscriminatorLossFn> {
    static Tensor forward(AutogradContext* ctx, Tensor d_real, Tensor d_fake, double alpha) {
        ctx->save_for_backward({d_real, d_fake});
        ctx->saved_data["alpha"] = alpha;
        return -torch::log(clamp_scores(d_real)).mean() - alpha * torch::log1p(-clamp_scores(d_fake)).mean();
    }

    static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
        const auto saved = ctx->get_saved_variables();
        const Tensor& d_real = saved[0];
        const Tensor& d_fake = saved[1];
        const double alpha = ctx->saved_data["alpha"].toDouble();
        const Tensor g = grad_out[0];
        const Tensor grad_real = -clamp_mask(d_real) / (clamp_scores(d_real) * double(d_real.numel())) * g;
        const Tensor grad_fake =
            alpha * clamp_mask(d_fake) / ((1.0 - clamp_scores(d_fake)) * double(d_fake.numel())) * g;
        return {grad_real, grad_fake, Tensor()};
    }
};

struct GeneratorAdvFn : torch::autograd::Function<GeneratorAdvFn> {
    static Tensor forward(AutogradContext* ctx, Tensor d_fake) {
        ctx->save_for_backward({d_fake});
        return -torch::log(clamp_scores(d_fake)).mean();
    }

    static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
        const Tensor d = ctx->get_saved_variables()[0];
        return {-clamp_mask(d) / (clamp_scores(d) * double(d.numel())) * grad_out[0]};
    }
};

struct L1Fn : torch::autograd::Function<L1Fn> {
    static Tensor forward(AutogradContext* ctx, Tensor generated, Tensor target) {
        ctx->save_for_backward({generated, target});
        return (generated - target).abs().mean();
    }

    static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
        const auto saved = ctx->get_saved_variables();
        const Tensor grad = torch::sign(saved[0] - saved[1]) / double(saved[0].numel()) * grad_out[0];
        return {grad, -grad};
    }
};

// d(1 - r)/db where r = <a',b'>/(|a'||b'|) and a', b' are the centred inputs:
//   dr/db = a'/(|a'||b'|) - r b'/|b'|^2   (centring terms cancel because sum(a') = sum(b') = 0)
struct CcPenaltyFn : torch::autograd::Function<CcPenaltyFn> {
    static Tensor forward(AutogradContext* ctx, Tensor generated, Tensor target) {
        const PearsonResult r = pearson_cc(target, generated);
        ctx->save_for_backward({generated, target});
        ctx->saved_data["r"] = r.value;
        ctx->saved_data["degenerate"] = r.degenerate;
        return torch::full({}, 1.0 - r.value, generated.options());
    }

    static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
        const auto saved = ctx->get_saved_variables();
        const Tensor& generated = saved[0];
        const Tensor& target = saved[1];
        if (ctx->saved_data["degenerate"].toBool())
            return {torch::zeros_like(generated), torch::zeros_like(target)};
        const double r = ctx->saved_data["r"].toDouble();
        const Tensor b = generated.to(torch::kFloat64);
        const Tensor a = target.to(torch::kFloat64);
        const Tensor bc = b - b.mean();
        const Tensor ac = a - a.mean();
        const double nb = bc.norm().item<double>();
        const double na = ac.norm().item<double>();
        const Tensor g = grad_out[0].to(torch::kFloat64);
        const Tensor dr_db = ac / (na * nb) - r * bc / (nb * nb);
        const Tensor dr_da = bc / (na * nb) - r * ac / (na * na);
        return {(-dr_db * g).to(generated.scalar_type()), (-dr_da * g).to(target.scalar_type())};
    }
};

}  // namespace

Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake, double alpha) {
    require_same_shape(d_real, d_fake, "discriminator_loss");
    return DiscriminatorLossFn::apply(d_real, d_fake, alpha);
}

Tensor generator_adv_loss(const Tensor& d_fake) {
    if (d_fake.numel() == 0) throw ContractError("generator_adv_loss: empty score map");
    return GeneratorAdvFn::apply(d_fake);
}

Tensor l1_loss(const Tensor& generated, const Tensor& target) {
    require_same_shape(generated, target, "l1_loss");
    return L1Fn::apply(generated, target);
}

PearsonResult pearson_cc(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "pearson_cc");
    const Tensor ad = a.detach().to(torch::kFloat64).contiguous().flatten();
    const Tensor bd = b.detach().to(torch::kFloat64).contiguous().flatten();
    return pearson_cc(std::span<const double>(ad.data_ptr<double>(), std::size_t(ad.numel())),
                      std::span<const double>(bd.data_ptr<double>(), std::size_t(bd.numel())));
}

Tensor cc_penalty(const Tensor& generated, const Tensor& target) {
    require_same_shape(generated, target, "cc_penalty");
    if (generated.numel() < 2) throw ContractError("cc_penalty: need at least two elements");
    return CcPenaltyFn::apply(generated, target);
}

GeneratorObjective combined_generator_loss(const Tensor& d_fake, const Tensor& generated, const Tensor& target,
                                           const LossWeights& w) {
    w.validate();
    const Tensor adv = generator_adv_loss(d_fake);
    const Tensor l1 = losses::l1_loss(generated, target);
    Tensor cc;
    if (generated.dim() == 4 && generated.size(0) > 1) {
        require_same_shape(generated, target, "cc_penalty");
        std::vector<Tensor> per_sample;
        for (std::int64_t i = 0; i < generated.size(0); ++i) per_sample.push_back(cc_penalty(generated[i], target[i]));
        cc = torch::stack(per_sample).mean();
    } else {
        cc = cc_penalty(generated, target);
    }
    GeneratorObjective out;
    out.total = adv + w.lambda_l1 * l1 + w.gamma_cc * cc;
    out.breakdown.g_adv = adv.item<double>();
    out.breakdown.g_l1 = l1.item<double>();
    out.breakdown.g_cc_penalty = cc.item<double>();
    out.breakdown.g_total = out.breakdown.g_adv + w.lambda_l1 * out.breakdown.g_l1 + w.gamma_cc * out.breakdown.g_cc_penalty;
    return out;
}

}  // namespace stainlab::losses
