#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <vector>

#include "stainlab/image.hpp"

namespace stainlab::png {

struct Dimensions {
    int width = 0;
    int height = 0;
};

/// Reads only the header. Throws IoError if unreadable, DataError if not 8-bit RGB.
Dimensions probe(const std::filesystem::path& path);

Image read(const std::filesystem::path& path);

/// Writes 8-bit RGB; samples are clamped to [0,1] and rounded.
void write(const std::filesystem::path& path, const Image& img);

/// Sequential row reader for 8-bit, non-interlaced RGB PNGs. Only one row is decoded
/// at a time, so arbitrarily tall rasters can be streamed.
class RowReader {
public:
    explicit RowReader(const std::filesystem::path& path);
    ~RowReader();
    RowReader(const RowReader&) = delete;
    RowReader& operator=(const RowReader&) = delete;

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int rows_read() const noexcept { return next_row_; }

    /// Decodes the next row into `out` (width*3 samples in [0,1]).
    void read_row(std::span<float> out);
    /// Raw 8-bit variant.
    void read_row(std::span<std::uint8_t> out);

private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
    void* png_ = nullptr;
    void* info_ = nullptr;
    int width_ = 0;
    int height_ = 0;
    int next_row_ = 0;
    std::vector<std::uint8_t> buffer_;
};

}  // namespace stainlab::png
