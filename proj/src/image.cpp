#include "sicnn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace sicnn {

Image clamp01(const Image& img) {
    Image out = img;
    for (auto& v : out.pixels) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Image quantize16(const Image& img) {
    Image out = img;
    for (auto& v : out.pixels) {
        v = std::round(std::clamp(v, 0.0, 1.0) * 65535.0) / 65535.0;
    }
    return out;
}

Tensor to_batch(std::span<const Image> images) {
    if (images.empty()) {
        throw std::invalid_argument("to_batch: no images");
    }
    const Image& first = images[0];
    Tensor out({images.size(), first.channels, first.height, first.width});
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = images[n];
        if (img.width != first.width || img.height != first.height || img.channels != first.channels) {
            throw std::invalid_argument("to_batch: image " + std::to_string(n) + " differs in size");
        }
        std::copy(img.pixels.begin(), img.pixels.end(), out.data().begin() + static_cast<std::ptrdiff_t>(n * img.size()));
    }
    return out;
}

Image from_batch(const Tensor& batch, std::size_t index) {
    if (batch.rank() != 4 || index >= batch.shape()[0]) {
        throw std::invalid_argument("from_batch: bad batch shape or index");
    }
    Image img(batch.shape()[3], batch.shape()[2], batch.shape()[1]);
    const auto begin = batch.data().begin() + static_cast<std::ptrdiff_t>(index * img.size());
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(img.size()), img.pixels.begin());
    return img;
}

std::string encode_pnm(const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw std::invalid_argument("PNM supports 1 or 3 channels, got " + std::to_string(img.channels));
    }
    std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n65535\n";
    out.reserve(out.size() + img.size() * 2);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (std::size_t c = 0; c < img.channels; ++c) {
                const auto q = static_cast<unsigned>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * 65535.0));
                out.push_back(static_cast<char>(q >> 8));
                out.push_back(static_cast<char>(q & 0xFF));
            }
        }
    }
    return out;
}

namespace {

class HeaderParser {
public:
    explicit HeaderParser(const std::string& bytes) : bytes_(bytes) {}

    std::size_t number(const char* what) {
        skip_space_and_comments();
        std::size_t start = pos_;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            ++pos_;
        }
        if (start == pos_) {
            throw std::runtime_error(std::string("malformed PNM header: expected ") + what);
        }
        if (pos_ - start > 9) {
            throw std::runtime_error(std::string("malformed PNM header: ") + what + " too large");
        }
        return std::stoul(bytes_.substr(start, pos_ - start));
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw std::runtime_error("malformed PNM header: missing separator before raster");
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 2;
};

}  // namespace

Image decode_pnm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw std::runtime_error("malformed PNM header: expected P5 or P6 magic");
    }
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    HeaderParser header(bytes);
    const std::size_t width = header.number("width");
    const std::size_t height = header.number("height");
    const std::size_t maxval = header.number("maxval");
    if (width == 0 || height == 0) {
        throw std::runtime_error("malformed PNM header: zero dimension");
    }
    if (maxval == 0 || maxval > 65535) {
        throw std::runtime_error("PNM maxval " + std::to_string(maxval) + " outside [1, 65535]");
    }
    const std::size_t start = header.raster_start();
    const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
    const std::size_t need = width * height * channels * bytes_per_sample;
    if (bytes.size() - start < need) {
        throw std::runtime_error("truncated PNM payload: need " + std::to_string(need) + " bytes, have " +
                                 std::to_string(bytes.size() - start));
    }
    Image img(width, height, channels);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start);
    // Divide rather than multiply by 1/maxval so quantized values round-trip exactly.
    const auto denom = static_cast<double>(maxval);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                unsigned v = *p++;
                if (bytes_per_sample == 2) {
                    v = (v << 8) | *p++;
                }
                if (v > maxval) {
                    throw std::runtime_error("PNM sample exceeds maxval");
                }
                img.at(c, y, x) = static_cast<double>(v) / denom;
            }
        }
    }
    return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    const std::string bytes = encode_pnm(img);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw std::runtime_error("write failed for '" + path.string() + "'");
    }
}

Image load_image(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open image '" + path.string() + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return decode_pnm(bytes);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace sicnn
