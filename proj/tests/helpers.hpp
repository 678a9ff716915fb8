#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "sicnn/image.hpp"
#include "sicnn/random.hpp"
#include "sicnn/tensor.hpp"

namespace testing {

inline sicnn::Tensor random_tensor(sicnn::Shape shape, sicnn::Rng& rng, double scale = 1.0) {
    sicnn::Tensor t(std::move(shape));
    for (auto& v : t.storage()) {
        v = scale * rng.normal();
    }
    return t;
}

inline sicnn::Image random_image(std::size_t w, std::size_t h, std::size_t c, sicnn::Rng& rng) {
    sicnn::Image img(w, h, c);
    for (auto& v : img.pixels) {
        v = rng.uniform();
    }
    return img;
}

// Fresh scratch directory under the build tree, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("sicnn_test_" + name + "_" + std::to_string(::getpid()))) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace testing
