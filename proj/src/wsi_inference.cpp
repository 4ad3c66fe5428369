#include "stainlab/wsi_inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "stainlab/error.hpp"

namespace stainlab::wsi {

namespace {

// 2^40 keeps ~12 decimal digits per sample and room for millions of overlapping tiles.
constexpr double kFixedScale = 1099511627776.0;

int reflect_index(int i, int n) {
    if (i < n) return i;
    return 2 * n - 2 - i;
}

}  // namespace

void StitchPlan::validate() const {
    if (tile_size < 1) throw ConfigError("tile_size must be positive");
    if (stride < 1 || stride > tile_size) throw ConfigError("stride must satisfy 1 <= stride <= tile_size");
}

int padded_extent(int extent, const StitchPlan& plan) {
    if (extent <= plan.tile_size) return plan.tile_size;
    const int steps = (extent - plan.tile_size + plan.stride - 1) / plan.stride;
    return plan.tile_size + steps * plan.stride;
}

std::vector<TileOrigin> plan_tiles(int width, int height, const StitchPlan& plan) {
    plan.validate();
    if (width < 1 || height < 1) throw DataError("empty slide");
    const int pw = padded_extent(width, plan);
    const int ph = padded_extent(height, plan);
    if (pw - width > width - 1 || ph - height > height - 1)
        throw DataError("slide " + std::to_string(width) + "x" + std::to_string(height) +
                        " is smaller than tile size " + std::to_string(plan.tile_size) + " after padding");
    std::vector<TileOrigin> tiles;
    for (int y = 0; y + plan.tile_size <= ph; y += plan.stride)
        for (int x = 0; x + plan.tile_size <= pw; x += plan.stride) tiles.push_back({x, y});
    return tiles;
}

Image pad_reflect(const Image& img, int width, int height) {
    if (width < img.width() || height < img.height()) throw ContractError("pad_reflect: target smaller than image");
    if (width - img.width() > img.width() - 1 || height - img.height() > img.height() - 1)
        throw DataError("pad_reflect: padding exceeds the image extent");
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = reflect_index(y, img.height());
        for (int x = 0; x < width; ++x) {
            const int sx = reflect_index(x, img.width());
            for (int c = 0; c < Image::channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    }
    return out;
}

std::vector<int> coverage_map(int width, int height, const StitchPlan& plan) {
    std::vector<int> cover(std::size_t(width) * std::size_t(height), 0);
    for (const auto& t : plan_tiles(width, height, plan)) {
        const int x1 = std::min(t.x0 + plan.tile_size, width);
        const int y1 = std::min(t.y0 + plan.tile_size, height);
        for (int y = t.y0; y < y1; ++y)
            for (int x = t.x0; x < x1; ++x) ++cover[std::size_t(y) * width + std::size_t(x)];
    }
    return cover;
}

Image stitch(const std::vector<TilePrediction>& tiles, int width, int height, const StitchPlan& plan) {
    plan.validate();
    const std::size_t npx = std::size_t(width) * std::size_t(height);
    Image out(width, height);

    if (plan.blend == Blend::average) {
        std::vector<std::int64_t> acc(npx * Image::channels, 0);
        std::vector<std::int64_t> count(npx, 0);
        // per-sample extremes: rounding of the fixed-point mean must not leave [min, max]
        std::vector<float> lo(npx * Image::channels, 1.0f), hi(npx * Image::channels, 0.0f);
        for (const auto& t : tiles) {
            if (t.pixels.width() != plan.tile_size || t.pixels.height() != plan.tile_size)
                throw ContractError("stitch: tile prediction has the wrong size");
            const int x1 = std::min(t.origin.x0 + plan.tile_size, width);
            const int y1 = std::min(t.origin.y0 + plan.tile_size, height);
            for (int y = t.origin.y0; y < y1; ++y)
                for (int x = t.origin.x0; x < x1; ++x) {
                    const std::size_t p = std::size_t(y) * width + std::size_t(x);
                    ++count[p];
                    for (int c = 0; c < Image::channels; ++c) {
                        const float v = std::clamp(t.pixels.at(x - t.origin.x0, y - t.origin.y0, c), 0.0f, 1.0f);
                        const std::size_t i = p * Image::channels + std::size_t(c);
                        acc[i] += std::llround(double(v) * kFixedScale);
                        lo[i] = std::min(lo[i], v);
                        hi[i] = std::max(hi[i], v);
                    }
                }
        }
        auto px = out.pixels();
        for (std::size_t p = 0; p < npx; ++p) {
            if (count[p] == 0) throw DataError("stitch: pixel not covered by any tile");
            for (int c = 0; c < Image::channels; ++c) {
                const std::size_t i = p * Image::channels + std::size_t(c);
                px[i] = std::clamp(float(double(acc[i]) / double(count[p]) / kFixedScale), lo[i], hi[i]);
            }
        }
        return out;
    }

    // center_crop: each pixel takes the tile whose centre is nearest (Chebyshev), ties to the
    // smallest (y0, x0).
    struct Best {
        long dist = std::numeric_limits<long>::max();
        int y0 = 0, x0 = 0;
        bool set = false;
    };
    std::vector<Best> best(npx);
    for (const auto& t : tiles) {
        if (t.pixels.width() != plan.tile_size || t.pixels.height() != plan.tile_size)
            throw ContractError("stitch: tile prediction has the wrong size");
        const int x1 = std::min(t.origin.x0 + plan.tile_size, width);
        const int y1 = std::min(t.origin.y0 + plan.tile_size, height);
        for (int y = t.origin.y0; y < y1; ++y)
            for (int x = t.origin.x0; x < x1; ++x) {
                // doubled coordinates keep the centre integral
                const long dx = std::labs(2L * (x - t.origin.x0) + 1 - plan.tile_size);
                const long dy = std::labs(2L * (y - t.origin.y0) + 1 - plan.tile_size);
                const long d = std::max(dx, dy);
                auto& b = best[std::size_t(y) * width + std::size_t(x)];
                const bool better = !b.set || d < b.dist ||
                                    (d == b.dist && std::tie(t.origin.y0, t.origin.x0) < std::tie(b.y0, b.x0));
                if (!better) continue;
                b = {d, t.origin.y0, t.origin.x0, true};
                for (int c = 0; c < Image::channels; ++c)
                    out.at(x, y, c) = std::clamp(t.pixels.at(x - t.origin.x0, y - t.origin.y0, c), 0.0f, 1.0f);
            }
    }
    for (const auto& b : best)
        if (!b.set) throw DataError("stitch: pixel not covered by any tile");
    return out;
}

Image infer_slide(const TileTranslator& model, const Image& slide, const StitchPlan& plan) {
    const auto origins = plan_tiles(slide.width(), slide.height(), plan);
    const Image padded =
        pad_reflect(slide, padded_extent(slide.width(), plan), padded_extent(slide.height(), plan));
    std::vector<TilePrediction> predictions;
    predictions.reserve(origins.size());
    for (const auto& o : origins) {
        Image pred = model(padded.crop(o.x0, o.y0, plan.tile_size, plan.tile_size));
        if (pred.width() != plan.tile_size || pred.height() != plan.tile_size)
            throw ContractError("model returned a tile of the wrong size");
        predictions.push_back({o, std::move(pred)});
    }
    return stitch(predictions, slide.width(), slide.height(), plan);
}

}  // namespace stainlab::wsi
