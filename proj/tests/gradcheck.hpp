#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <functional>

namespace stainlab::testing {

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) between the autograd
/// gradient of `f` at `x` and central finite differences with step `h`. Everything in float64.
inline double gradient_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                      const torch::Tensor& x0, double h = 1e-5) {
    torch::Tensor x = x0.detach().to(torch::kFloat64).clone().requires_grad_(true);
    f(x).backward();
    const torch::Tensor analytic = x.grad().detach().clone();

    torch::NoGradGuard no_grad;
    torch::Tensor xp = x.detach().clone();
    torch::Tensor numeric = torch::zeros_like(xp);
    auto flat = xp.view({-1});
    auto num = numeric.view({-1});
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
        const double v = flat[i].item<double>();
        flat[i] = v + h;
        const double fp = f(xp).item<double>();
        flat[i] = v - h;
        const double fm = f(xp).item<double>();
        flat[i] = v;
        num[i] = (fp - fm) / (2.0 * h);
    }
    const double scale = std::max(analytic.norm().item<double>(), numeric.norm().item<double>());
    if (scale == 0.0) return 0.0;
    return (analytic - numeric).norm().item<double>() / scale;
}

}  // namespace stainlab::testing
