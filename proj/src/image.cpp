#include "stainlab/image.hpp"

#include <algorithm>
#include <cmath>

#include "stainlab/error.hpp"

namespace stainlab {

Image::Image(int width, int height, float fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ContractError("negative image dimensions");
    data_.assign(std::size_t(width) * std::size_t(height) * channels, fill);
}

Image Image::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_)
        throw ContractError("crop window outside image");
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        auto src = row(y0 + y).subspan(std::size_t(x0) * channels, std::size_t(w) * channels);
        std::copy(src.begin(), src.end(), out.row(y).begin());
    }
    return out;
}

Image Image::flipped_horizontal() const {
    Image out(width_, height_);
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            for (int c = 0; c < channels; ++c) out.at(width_ - 1 - x, y, c) = at(x, y, c);
    return out;
}

Image Image::flipped_vertical() const {
    Image out(width_, height_);
    for (int y = 0; y < height_; ++y) {
        auto src = row(y);
        std::copy(src.begin(), src.end(), out.row(height_ - 1 - y).begin());
    }
    return out;
}

std::uint8_t to_u8(float v) noexcept {
    if (!(v > 0.0f)) return 0;
    if (v >= 1.0f) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

Image quantize_u8(const Image& img) {
    Image out = img;
    for (auto& v : out.pixels()) v = from_u8(to_u8(v));
    return out;
}

}  // namespace stainlab
