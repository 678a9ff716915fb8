#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sicnn/data.hpp"
#include "sicnn/training.hpp"

namespace sicnn {

struct DataConfig {
    std::size_t identities = 40;
    std::size_t samples = 25;
    std::uint64_t seed = 7;
    DatasetOptions options;
};

struct EvalConfig {
    std::size_t batch = 64;
    std::size_t save_images = 8;  // hallucinated test samples written by eval
};

/// Every tunable of a run. Text form: `section.key = value` lines with `#`
/// comments; `model.preset` is applied before any other key.
struct RunConfig {
    std::string preset = "desk";
    TrainConfig train = TrainConfig::desk();
    DataConfig data;
    EvalConfig eval;

    static RunConfig from_preset(const std::string& name);  // desk, paper, paper24

    /// Throws std::invalid_argument on an unknown key or unparsable value.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static std::vector<std::string> keys();

    /// Sorted canonical `key = value` lines.
    std::string canonical_text() const;
    /// 16 hex digits of FNV-1a over canonical_text().
    std::string hash() const;
    /// Same, restricted to model.* keys.
    std::string model_hash() const;

    void validate() const;
};

/// Raised for malformed or unknown config input; carries the source line.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

RunConfig parse_run_config(const std::string& text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies `key=value` overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& overrides);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace sicnn
