#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "sicnn/tensor.hpp"

namespace sicnn {

/// Planar (CHW) image with samples nominally in [0, 1].
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::size_t c = 1, double fill = 0.0)
        : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
    std::size_t size() const { return pixels.size(); }

    bool operator==(const Image&) const = default;
};

Image clamp01(const Image& img);
/// Snap samples to the nearest multiple of 1/65535 after clamping to [0, 1].
Image quantize16(const Image& img);

/// Stacks same-sized images into an [N, C, H, W] tensor.
Tensor to_batch(std::span<const Image> images);
Image from_batch(const Tensor& batch, std::size_t index);

// Binary PNM: P5 (grayscale) or P6 (RGB). Saved at maxval 65535; any maxval
// up to 65535 is accepted on load and scaled to [0, 1].
void save_image(const Image& img, const std::filesystem::path& path);
Image load_image(const std::filesystem::path& path);
Image decode_pnm(const std::string& bytes);
std::string encode_pnm(const Image& img);

}  // namespace sicnn
