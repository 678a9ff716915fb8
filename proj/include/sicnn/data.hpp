#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "sicnn/image.hpp"

namespace sicnn {

/// Identity-defining glyph geometry, each coordinate normalized to [0, 1].
/// Fields in order: head width, head height, eye spacing, eye size, eye
/// height, mouth width, mouth curvature, brow angle, skin tone, nose length.
struct SyntheticIdentitySpec {
    static constexpr std::size_t kParams = 10;
    std::size_t identity = 0;
    std::array<double, kParams> params{};
};

/// Per-sample nuisance; never affects the identity label.
struct Nuisance {
    double dx = 0.0;         // pixels
    double dy = 0.0;         // pixels
    double rotation = 0.0;   // radians
    double gain = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;
};

struct ImagePair {
    Image lr;
    Image hr;
    std::size_t identity = 0;
    std::size_t sample = 0;
};

struct DatasetSplit {
    std::vector<ImagePair> train;
    std::vector<ImagePair> test;
};

struct DatasetOptions {
    std::size_t channels = 1;
    double test_fraction = 0.2;
    double min_distance = 0.7;        // between identity parameter vectors
    std::size_t max_retries = 10000;  // rejection-sampling budget per identity
    double max_shift = 1.5;           // pixels at HR, at most 2
    double max_rotation_deg = 5.0;
    double gain_spread = 0.1;         // gain in [1 - spread, 1 + spread]
    double noise_sigma = 0.01;
};

/// Draws identity specs with pairwise parameter distance >= min_distance.
std::vector<SyntheticIdentitySpec> sample_identities(std::size_t count, std::uint64_t seed, double min_distance,
                                                     std::size_t max_retries);
Image render_face(const SyntheticIdentitySpec& spec, const Nuisance& nuisance, std::size_t width, std::size_t height,
                  std::size_t channels);

/// Deterministic identity-disjoint split. HR images are 16-bit quantized so
/// they survive a PNM round trip; LR is always bicubic(HR).
DatasetSplit generate_dataset(std::size_t num_identities, std::size_t samples_per_identity, std::size_t hr_width,
                              std::size_t hr_height, std::size_t factor, std::uint64_t seed,
                              const DatasetOptions& options = {});

/// Bicubic downscale by an integer factor; dimensions must divide evenly.
Image make_lr(const Image& hr, std::size_t factor);

/// Maps the sorted identity ids present in `pairs` onto 0..K-1.
std::map<std::size_t, std::size_t> identity_index(const std::vector<ImagePair>& pairs);

/// Writes hr/ and lr/ PNM images plus manifest.csv
/// (identity,sample,split,hr_path,lr_path with paths relative to `dir`).
void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir);
/// Reads a manifest; LR is recomputed from HR and checked against the file.
DatasetSplit load_dataset(const std::filesystem::path& dir);

}  // namespace sicnn
