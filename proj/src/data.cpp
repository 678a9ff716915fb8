#include "sicnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sicnn/eval.hpp"
#include "sicnn/random.hpp"

namespace sicnn {

namespace {

constexpr std::uint64_t kIdentityStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kSampleStreamBase = 1000;

constexpr double kBackground = 0.1;
constexpr double kFeatureDark = 0.06;

// Glyph geometry in normalized coordinates: u right, v down, both in [-1, 1].
struct Glyph {
    double head_a, head_b;
    double eye_x, eye_r, eye_y;
    double mouth_w, mouth_curve, mouth_y;
    double brow_angle;
    double tone;
    double nose_len;
};

Glyph glyph_from(const SyntheticIdentitySpec& spec) {
    const auto& p = spec.params;
    Glyph g{};
    g.head_a = 0.5 + 0.4 * p[0];
    g.head_b = 0.65 + 0.3 * p[1];
    g.eye_x = 0.18 + 0.22 * p[2];
    g.eye_r = 0.06 + 0.08 * p[3];
    g.eye_y = -0.4 + 0.3 * p[4];
    g.mouth_w = 0.15 + 0.3 * p[5];
    g.mouth_curve = -0.2 + 0.4 * p[6];
    g.mouth_y = 0.45;
    g.brow_angle = -0.5 + p[7];
    g.tone = 0.35 + 0.55 * p[8];
    g.nose_len = 0.1 + 0.25 * p[9];
    return g;
}

double segment_distance(double u, double v, double x0, double y0, double x1, double y1) {
    const double dx = x1 - x0, dy = y1 - y0;
    const double t = std::clamp(((u - x0) * dx + (v - y0) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    return std::hypot(u - (x0 + t * dx), v - (y0 + t * dy));
}

// Intensity at a normalized point, painted back to front. Returns a pair of
// (shade, is_skin) so RGB rendering can tint skin separately.
std::pair<double, bool> shade(const Glyph& g, double u, double v) {
    const double head = (u / g.head_a) * (u / g.head_a) + (v / g.head_b) * (v / g.head_b);
    if (head > 1.0) {
        return {kBackground, false};
    }
    for (double side : {-1.0, 1.0}) {
        if (std::hypot(u - side * g.eye_x, v - g.eye_y) <= g.eye_r) {
            return {kFeatureDark, false};
        }
        const double by = g.eye_y - g.eye_r - 0.1;
        const double half = g.eye_r + 0.06;
        const double tilt = side * g.brow_angle * half;
        if (segment_distance(u, v, side * g.eye_x - half, by + tilt, side * g.eye_x + half, by - tilt) <= 0.045) {
            return {kFeatureDark + 0.05, false};
        }
    }
    const double nose_top = g.eye_y + 0.05;
    if (segment_distance(u, v, 0.0, nose_top, 0.0, nose_top + g.nose_len) <= 0.05) {
        return {g.tone * 0.65, true};
    }
    if (std::abs(u) <= g.mouth_w) {
        const double r = u / g.mouth_w;
        const double curve = g.mouth_y + g.mouth_curve * (r * r - 0.5);
        if (std::abs(v - curve) <= 0.06) {
            return {kFeatureDark + 0.1, false};
        }
    }
    return {g.tone, true};
}

double parameter_distance(const SyntheticIdentitySpec& a, const SyntheticIdentitySpec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < SyntheticIdentitySpec::kParams; ++i) {
        const double d = a.params[i] - b.params[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

std::vector<SyntheticIdentitySpec> sample_identities(std::size_t count, std::uint64_t seed, double min_distance,
                                                     std::size_t max_retries) {
    Rng rng(derive_seed(seed, kIdentityStream));
    std::vector<SyntheticIdentitySpec> out;
    out.reserve(count);
    for (std::size_t id = 0; id < count; ++id) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt <= max_retries && !placed; ++attempt) {
            SyntheticIdentitySpec cand;
            cand.identity = id;
            for (auto& p : cand.params) {
                p = rng.uniform();
            }
            placed = std::all_of(out.begin(), out.end(), [&](const SyntheticIdentitySpec& other) {
                return parameter_distance(cand, other) >= min_distance;
            });
            if (placed) {
                out.push_back(cand);
            }
        }
        if (!placed) {
            throw std::runtime_error("could not place identity " + std::to_string(id) + " at minimum distance " +
                                     std::to_string(min_distance) + " after " + std::to_string(max_retries) +
                                     " retries; use fewer identities or a smaller minimum distance");
        }
    }
    return out;
}

Image render_face(const SyntheticIdentitySpec& spec, const Nuisance& nuisance, std::size_t width, std::size_t height,
                  std::size_t channels) {
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("render_face: channels must be 1 or 3");
    }
    const Glyph g = glyph_from(spec);
    static constexpr std::array<double, 3> kSkinTint{1.0, 0.85, 0.72};
    const double cx = 0.5 * static_cast<double>(width);
    const double cy = 0.5 * static_cast<double>(height);
    const double cr = std::cos(nuisance.rotation);
    const double sr = std::sin(nuisance.rotation);
    constexpr int kSuper = 3;

    Image img(width, height, channels);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            std::array<double, 3> acc{};
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = static_cast<double>(x) + (sx + 0.5) / kSuper - cx - nuisance.dx;
                    const double py = static_cast<double>(y) + (sy + 0.5) / kSuper - cy - nuisance.dy;
                    // inverse rotation maps the output pixel back into glyph space
                    const double u = (cr * px + sr * py) / cx;
                    const double v = (-sr * px + cr * py) / cy;
                    const auto [s, skin] = shade(g, u, v);
                    for (std::size_t c = 0; c < channels; ++c) {
                        acc[c] += (skin && channels == 3) ? s * kSkinTint[c] : s;
                    }
                }
            }
            for (std::size_t c = 0; c < channels; ++c) {
                img.at(c, y, x) = acc[c] / (kSuper * kSuper);
            }
        }
    }
    Rng noise(nuisance.noise_seed);
    for (auto& v : img.pixels) {
        v = v * nuisance.gain + nuisance.noise_sigma * noise.normal();
    }
    return quantize16(img);
}

Image make_lr(const Image& hr, std::size_t factor) {
    if (factor == 0 || hr.width % factor != 0 || hr.height % factor != 0) {
        throw std::invalid_argument("make_lr: " + std::to_string(hr.width) + "x" + std::to_string(hr.height) +
                                    " is not divisible by factor " + std::to_string(factor));
    }
    return bicubic_resample(hr, hr.width / factor, hr.height / factor);
}

DatasetSplit generate_dataset(std::size_t num_identities, std::size_t samples_per_identity, std::size_t hr_width,
                              std::size_t hr_height, std::size_t factor, std::uint64_t seed,
                              const DatasetOptions& options) {
    if (num_identities == 0 || samples_per_identity == 0) {
        throw std::invalid_argument("generate_dataset: need at least one identity and one sample");
    }
    if (factor == 0 || hr_width % factor != 0 || hr_height % factor != 0) {
        throw std::invalid_argument("generate_dataset: HR size must be divisible by the factor");
    }
    if (options.test_fraction < 0.0 || options.test_fraction >= 1.0) {
        throw std::invalid_argument("generate_dataset: test_fraction must lie in [0, 1)");
    }
    const auto specs = sample_identities(num_identities, seed, options.min_distance, options.max_retries);

    std::vector<std::size_t> order(num_identities);
    for (std::size_t i = 0; i < num_identities; ++i) {
        order[i] = i;
    }
    Rng split_rng(derive_seed(seed, kSplitStream));
    for (std::size_t i = num_identities; i > 1; --i) {
        std::swap(order[i - 1], order[split_rng.index(i)]);
    }
    const auto test_count = static_cast<std::size_t>(std::llround(options.test_fraction * num_identities));
    const std::set<std::size_t> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_count));

    const double max_rot = options.max_rotation_deg * std::numbers::pi / 180.0;
    DatasetSplit split;
    for (const auto& spec : specs) {
        for (std::size_t s = 0; s < samples_per_identity; ++s) {
            Rng rng(derive_seed(seed, kSampleStreamBase + spec.identity * samples_per_identity + s));
            Nuisance n;
            n.dx = rng.uniform(-options.max_shift, options.max_shift);
            n.dy = rng.uniform(-options.max_shift, options.max_shift);
            n.rotation = rng.uniform(-max_rot, max_rot);
            n.gain = rng.uniform(1.0 - options.gain_spread, 1.0 + options.gain_spread);
            n.noise_sigma = options.noise_sigma;
            n.noise_seed = rng.next();
            ImagePair pair;
            pair.hr = render_face(spec, n, hr_width, hr_height, options.channels);
            pair.lr = make_lr(pair.hr, factor);
            pair.identity = spec.identity;
            pair.sample = s;
            (test_ids.count(spec.identity) ? split.test : split.train).push_back(std::move(pair));
        }
    }
    return split;
}

std::map<std::size_t, std::size_t> identity_index(const std::vector<ImagePair>& pairs) {
    std::set<std::size_t> ids;
    for (const auto& p : pairs) {
        ids.insert(p.identity);
    }
    std::map<std::size_t, std::size_t> out;
    for (std::size_t id : ids) {
        out.emplace(id, out.size());
    }
    return out;
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "hr");
    std::filesystem::create_directories(dir / "lr");
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) {
        throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
    }
    manifest << "identity,sample,split,hr_path,lr_path\n";
    auto emit = [&](const std::vector<ImagePair>& pairs, const char* name) {
        for (const auto& p : pairs) {
            const std::string stem = "id" + std::to_string(p.identity) + "_s" + std::to_string(p.sample) +
                                     (p.hr.channels == 1 ? ".pgm" : ".ppm");
            save_image(p.hr, dir / "hr" / stem);
            save_image(p.lr, dir / "lr" / stem);
            manifest << p.identity << ',' << p.sample << ',' << name << ",hr/" << stem << ",lr/" << stem << '\n';
        }
    };
    emit(split.train, "train");
    emit(split.test, "test");
    if (!manifest) {
        throw std::runtime_error("write failed for manifest in '" + dir.string() + "'");
    }
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.csv");
    if (!manifest) {
        throw std::runtime_error("no dataset manifest at '" + (dir / "manifest.csv").string() + "'");
    }
    std::string line;
    std::getline(manifest, line);
    if (line != "identity,sample,split,hr_path,lr_path") {
        throw std::runtime_error("unexpected manifest header: '" + line + "'");
    }
    DatasetSplit split;
    std::size_t lineno = 1;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string col; std::getline(ss, col, ',');) {
            cols.push_back(col);
        }
        if (cols.size() != 5) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": expected 5 columns");
        }
        ImagePair p;
        try {
            p.identity = std::stoul(cols[0]);
            p.sample = std::stoul(cols[1]);
        } catch (const std::exception&) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": bad identity or sample");
        }
        p.hr = load_image(dir / cols[3]);
        const Image lr_file = load_image(dir / cols[4]);
        if (lr_file.width == 0 || p.hr.width % lr_file.width != 0 || p.hr.width / lr_file.width == 0) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": LR/HR size mismatch");
        }
        p.lr = make_lr(p.hr, p.hr.width / lr_file.width);
        if (p.lr.height != lr_file.height || p.lr.channels != lr_file.channels) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": LR/HR size mismatch");
        }
        const Image expected = clamp01(p.lr);
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (std::abs(expected.pixels[i] - lr_file.pixels[i]) > 1.0 / 65535.0) {
                throw std::runtime_error("manifest line " + std::to_string(lineno) + ": LR file '" + cols[4] +
                                         "' is not the bicubic downscale of its HR image");
            }
        }
        if (cols[2] == "train") {
            split.train.push_back(std::move(p));
        } else if (cols[2] == "test") {
            split.test.push_back(std::move(p));
        } else {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": unknown split '" + cols[2] + "'");
        }
    }
    return split;
}

}  // namespace sicnn
