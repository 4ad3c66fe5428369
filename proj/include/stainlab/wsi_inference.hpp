#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stainlab/image.hpp"

namespace stainlab::wsi {

enum class Blend { average, center_crop };

struct StitchPlan {
    int tile_size = 1024;
    int stride = 512;
    Blend blend = Blend::average;

    void validate() const;
};

/// Maps one tile (samples in [0,1]) to a translated tile of the same size.
using TileTranslator = std::function<Image(const Image&)>;

struct TileOrigin {
    int x0 = 0;
    int y0 = 0;
};

struct TilePrediction {
    TileOrigin origin;
    Image pixels;
};

/// Size the slide is reflect-padded to so that the tile grid covers it completely.
int padded_extent(int extent, const StitchPlan& plan);

/// Tile origins over the padded raster, row-major. Throws DataError when reflection padding
/// cannot reach a full tile.
std::vector<TileOrigin> plan_tiles(int width, int height, const StitchPlan& plan);

/// Reflective (mirror without edge repeat) padding on the right and bottom.
Image pad_reflect(const Image& img, int width, int height);

/// Per-pixel count of covering tiles over the original width x height.
std::vector<int> coverage_map(int width, int height, const StitchPlan& plan);

/// Accumulates predictions into a width x height image. Accumulation is fixed point, so the
/// result does not depend on the order of `tiles`.
Image stitch(const std::vector<TilePrediction>& tiles, int width, int height, const StitchPlan& plan);

/// Pads, tiles, translates and stitches a whole slide; the output has the input's dimensions.
Image infer_slide(const TileTranslator& model, const Image& slide, const StitchPlan& plan);

}  // namespace stainlab::wsi
