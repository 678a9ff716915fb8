#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sicnn {

/// splitmix64 mixing; derives independent stream seeds from (base, stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// mt19937_64 with library-independent real/normal transforms so draws are
/// identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();                        // N(0, 1), Box-Muller
    std::size_t index(std::size_t n);       // [0, n)

    std::string serialize() const;
    void deserialize(const std::string& text);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace sicnn
