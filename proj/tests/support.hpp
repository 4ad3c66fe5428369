#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "stainlab/image.hpp"
#include "stainlab/random.hpp"

namespace stainlab::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("stainlab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline Image random_image(rng::Engine& e, int w, int h) {
    Image img(w, h);
    for (auto& v : img.pixels()) v = float(rng::uniform01(e));
    return img;
}

/// Random image already on the 8-bit grid, so PNG round trips are exact.
inline Image random_u8_image(rng::Engine& e, int w, int h) {
    Image img(w, h);
    for (auto& v : img.pixels()) v = from_u8(std::uint8_t(rng::below(e, 256)));
    return img;
}

inline Image constant_image(int w, int h, float r, float g, float b) {
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    return img;
}

}  // namespace stainlab::testing
