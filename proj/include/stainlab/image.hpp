#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stainlab {

/// Interleaved RGB raster with float samples. Storage range is [0,1].
class Image {
public:
    static constexpr int channels = 3;

    Image() = default;
    Image(int width, int height, float fill = 0.0f);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t size() const noexcept { return data_.size(); }

    float& at(int x, int y, int c) { return data_[index(x, y, c)]; }
    float at(int x, int y, int c) const { return data_[index(x, y, c)]; }

    std::span<float> pixels() noexcept { return data_; }
    std::span<const float> pixels() const noexcept { return data_; }

    std::span<float> row(int y) { return {data_.data() + index(0, y, 0), std::size_t(width_) * channels}; }
    std::span<const float> row(int y) const {
        return {data_.data() + index(0, y, 0), std::size_t(width_) * channels};
    }

    /// Copy of the window [x0, x0+w) x [y0, y0+h). The window must lie inside the image.
    Image crop(int x0, int y0, int w, int h) const;

    Image flipped_horizontal() const;
    Image flipped_vertical() const;

    bool operator==(const Image& other) const = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (std::size_t(y) * std::size_t(width_) + std::size_t(x)) * channels + std::size_t(c);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

/// 8-bit sample to the [0,1] storage range.
inline float from_u8(std::uint8_t v) noexcept { return float(v) / 255.0f; }

/// [0,1] sample to 8 bits, clamped and rounded to nearest.
std::uint8_t to_u8(float v) noexcept;

/// Round-trips an image through 8-bit quantization.
Image quantize_u8(const Image& img);

}  // namespace stainlab
