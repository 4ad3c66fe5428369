#include "stainlab/pearson.hpp"

#include <algorithm>
#include <cmath>

#include "stainlab/error.hpp"

namespace stainlab::losses {

namespace {

template <class T>
PearsonResult pearson_impl(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw ContractError("pearson_cc: shape mismatch");
    if (a.size() < 2) throw ContractError("pearson_cc: need at least two elements");
    const double n = double(a.size());
    // exact constancy test: the centred sum of squares of a constant is not always exactly zero
    bool const_a = true, const_b = true;
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
        const_a = const_a && a[i] == a[0];
        const_b = const_b && b[i] == b[0];
    }
    if (const_a || const_b) return {0.0, true};
    mean_a /= n;
    mean_b /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = double(a[i]) - mean_a;
        const double db = double(b[i]) - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return {0.0, true};
    const double r = sab / (std::sqrt(saa) * std::sqrt(sbb));
    return {std::clamp(r, -1.0, 1.0), false};
}

}  // namespace

PearsonResult pearson_cc(std::span<const double> a, std::span<const double> b) { return pearson_impl(a, b); }
PearsonResult pearson_cc(std::span<const float> a, std::span<const float> b) { return pearson_impl(a, b); }

}  // namespace stainlab::losses
