#pragma once

#include <span>

namespace stainlab::losses {

struct PearsonResult {
    double value = 0.0;
    /// True when either input has zero variance; value is then defined as 0.
    bool degenerate = false;
};

/// Pearson correlation over all elements jointly (all channels together).
/// Throws ContractError on size mismatch or fewer than two elements.
PearsonResult pearson_cc(std::span<const double> a, std::span<const double> b);
PearsonResult pearson_cc(std::span<const float> a, std::span<const float> b);

}  // namespace stainlab::losses
