#include "stainlab/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <vector>

#include "stainlab/error.hpp"

namespace stainlab::png {

namespace {

// libpng reports failures through longjmp; keep the message so it can be rethrown as a C++
// exception once control is back in a frame without live C++ objects.
struct ErrorSink {
    char message[256] = {};
};

void on_error(png_structp png, png_const_charp msg) {
    if (auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png))) {
        std::strncpy(sink->message, msg, sizeof(sink->message) - 1);
    }
    png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

}  // namespace

RowReader::RowReader(const std::filesystem::path& path) : path_(path) {
    file_ = std::fopen(path.c_str(), "rb");
    if (!file_) throw IoError("cannot open " + path.string());

    png_byte sig[8];
    if (std::fread(sig, 1, 8, file_) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        std::fclose(file_);
        file_ = nullptr;
        throw IoError("not a PNG file: " + path.string());
    }

    auto* sink = new ErrorSink;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, sink, on_error, on_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    png_ = png;
    info_ = info;
    if (!png || !info) {
        delete sink;
        throw IoError("libpng initialisation failed");
    }

    int bit_depth = 0, color_type = 0, interlace = 0;
    png_uint_32 w = 0, h = 0;
    bool failed = false;
    if (setjmp(png_jmpbuf(png))) {
        failed = true;
    } else {
        png_init_io(png, file_);
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, &interlace, nullptr, nullptr);
    }
    if (failed) {
        std::string msg = sink->message;
        throw IoError("cannot read PNG header of " + path.string() + ": " + msg);
    }
    if (color_type != PNG_COLOR_TYPE_RGB || bit_depth != 8)
        throw DataError(path.string() + " is not an 8-bit 3-channel RGB PNG");
    if (interlace != PNG_INTERLACE_NONE) throw DataError(path.string() + " is interlaced");
    width_ = int(w);
    height_ = int(h);
    buffer_.resize(std::size_t(width_) * 3);
}

RowReader::~RowReader() {
    if (png_) {
        auto* png = static_cast<png_structp>(png_);
        auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
        auto* info = static_cast<png_infop>(info_);
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        delete sink;
    }
    if (file_) std::fclose(file_);
}

void RowReader::read_row(std::span<float> out) {
    if (out.size() != buffer_.size()) throw ContractError("row buffer has wrong size");
    read_row(std::span<std::uint8_t>(buffer_));
    for (std::size_t i = 0; i < buffer_.size(); ++i) out[i] = from_u8(buffer_[i]);
}

void RowReader::read_row(std::span<std::uint8_t> out) {
    if (next_row_ >= height_) throw ContractError("read past last row of " + path_.string());
    if (out.size() != buffer_.size()) throw ContractError("row buffer has wrong size");
    auto* png = static_cast<png_structp>(png_);
    png_bytep row = out.data();
    bool failed = false;
    if (setjmp(png_jmpbuf(png))) {
        failed = true;
    } else {
        png_read_row(png, row, nullptr);
    }
    if (failed) {
        auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
        throw IoError("corrupt PNG data in " + path_.string() + ": " + sink->message);
    }
    ++next_row_;
}

Dimensions probe(const std::filesystem::path& path) {
    RowReader reader(path);
    return {reader.width(), reader.height()};
}

Image read(const std::filesystem::path& path) {
    RowReader reader(path);
    Image img(reader.width(), reader.height());
    for (int y = 0; y < reader.height(); ++y) reader.read_row(img.row(y));
    return img;
}

void write(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> bytes(img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_u8(px[i]);

    png_image out;
    std::memset(&out, 0, sizeof(out));
    out.version = PNG_IMAGE_VERSION;
    out.width = png_uint_32(img.width());
    out.height = png_uint_32(img.height());
    out.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        std::string msg = out.message;
        png_image_free(&out);
        throw IoError("cannot write " + path.string() + ": " + msg);
    }
}

}  // namespace stainlab::png
