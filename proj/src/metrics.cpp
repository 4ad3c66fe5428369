#include "stainlab/metrics.hpp"

#include <cmath>
#include <numeric>

#include "stainlab/error.hpp"
#include "stainlab/pearson.hpp"
#include "stainlab/png_io.hpp"

namespace stainlab::metrics {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) k[std::size_t(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    const double sum = std::accumulate(k.begin(), k.end(), 0.0);
    for (auto& v : k) v /= sum;
    return k;
}

// Separable "valid" correlation of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& k) {
    const int n = int(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(std::size_t(ow) * std::size_t(h));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * plane[std::size_t(y) * w + std::size_t(x + i)];
            tmp[std::size_t(y) * ow + std::size_t(x)] = s;
        }
    std::vector<double> out(std::size_t(ow) * std::size_t(oh));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * tmp[std::size_t(y + i) * ow + std::size_t(x)];
            out[std::size_t(y) * ow + std::size_t(x)] = s;
        }
    return out;
}

double ssim_channel(const Image& a, const Image& b, int c, const std::vector<double>& k, const SsimParams& p) {
    const int w = a.width(), h = a.height();
    const std::size_t n = std::size_t(w) * std::size_t(h);
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    auto xa = a.pixels(), xb = b.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        pa[i] = xa[3 * i + std::size_t(c)];
        pb[i] = xb[3 * i + std::size_t(c)];
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, w, h, k);
    const auto mu_b = filter_valid(pb, w, h, k);
    const auto e_aa = filter_valid(paa, w, h, k);
    const auto e_bb = filter_valid(pbb, w, h, k);
    const auto e_ab = filter_valid(pab, w, h, k);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double var_a = e_aa[i] - ma * ma;
        const double var_b = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    return total / double(mu_a.size());
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    if (a.width() != b.width() || a.height() != b.height()) throw ContractError("ssim: shape mismatch");
    if (a.width() < params.window || a.height() < params.window)
        throw ContractError("ssim: image smaller than the " + std::to_string(params.window) + "px window");
    const auto k = gaussian_kernel(params.window, params.sigma);
    double s = 0.0;
    for (int c = 0; c < Image::channels; ++c) s += ssim_channel(a, b, c, k, params);
    return s / Image::channels;
}

double image_cc(const Image& a, const Image& b) {
    if (a.width() != b.width() || a.height() != b.height()) throw ContractError("cc: shape mismatch");
    return losses::pearson_cc(a.pixels(), b.pixels()).value;
}

double seam_discontinuity(const Image& output, const Image& reference, int tile) {
    if (output.width() != reference.width() || output.height() != reference.height())
        throw ContractError("seam_discontinuity: shape mismatch");
    if (tile < 1) throw ContractError("seam_discontinuity: tile must be positive");
    double total = 0.0;
    std::size_t count = 0;
    for (int sx = tile; sx < output.width(); sx += tile)
        for (int y = 0; y < output.height(); ++y)
            for (int c = 0; c < Image::channels; ++c) {
                const double jump_out = double(output.at(sx - 1, y, c)) - output.at(sx, y, c);
                const double jump_ref = double(reference.at(sx - 1, y, c)) - reference.at(sx, y, c);
                total += std::abs(jump_out - jump_ref);
                ++count;
            }
    for (int sy = tile; sy < output.height(); sy += tile)
        for (int x = 0; x < output.width(); ++x)
            for (int c = 0; c < Image::channels; ++c) {
                const double jump_out = double(output.at(x, sy - 1, c)) - output.at(x, sy, c);
                const double jump_ref = double(reference.at(x, sy - 1, c)) - reference.at(x, sy, c);
                total += std::abs(jump_out - jump_ref);
                ++count;
            }
    return count ? total / double(count) : 0.0;
}

void MetricsReport::recompute_aggregate() {
    aggregate = {};
    for (const auto& p : per_patch) {
        aggregate.mean_ssim += p.ssim;
        aggregate.mean_cc += p.cc;
    }
    aggregate.count = per_patch.size();
    if (aggregate.count) {
        aggregate.mean_ssim /= double(aggregate.count);
        aggregate.mean_cc /= double(aggregate.count);
    }
}

json MetricsReport::to_json() const {
    json rows = json::array();
    for (const auto& p : per_patch)
        rows.push_back({{"slide_id", p.slide_id}, {"x0", p.x0}, {"y0", p.y0}, {"ssim", p.ssim}, {"cc", p.cc}});
    return {{"per_patch", rows},
            {"aggregate", {{"mean_ssim", aggregate.mean_ssim}, {"mean_cc", aggregate.mean_cc}, {"count", aggregate.count}}},
            {"missing", missing}};
}

MetricsReport MetricsReport::from_json(const json& j) {
    MetricsReport r;
    for (const auto& row : j.at("per_patch"))
        r.per_patch.push_back({row.at("slide_id").get<std::string>(), row.at("x0").get<int>(), row.at("y0").get<int>(),
                               row.at("ssim").get<double>(), row.at("cc").get<double>()});
    const auto& agg = j.at("aggregate");
    r.aggregate = {agg.at("mean_ssim").get<double>(), agg.at("mean_cc").get<double>(),
                   agg.at("count").get<std::size_t>()};
    if (j.contains("missing")) r.missing = j.at("missing").get<std::vector<std::string>>();
    return r;
}

MetricsReport evaluate(const fs::path& generated_dir, const fs::path& target_dir,
                       const std::vector<patch::IndexEntry>& index, TargetColumn column) {
    MetricsReport report;
    for (const auto& e : index) {
        const std::string rel = column == TargetColumn::stained ? e.stained_png : e.nonstained_png;
        const fs::path gen = generated_dir / rel;
        if (!fs::exists(gen)) {
            report.missing.push_back(rel);
            continue;
        }
        const Image g = png::read(gen);
        const Image t = png::read(target_dir / rel);
        report.per_patch.push_back({e.slide_id, e.x0, e.y0, ssim(g, t), image_cc(g, t)});
    }
    report.recompute_aggregate();
    return report;
}

}  // namespace stainlab::metrics
