#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sicnn/autodiff.hpp"
#include "sicnn/param_store.hpp"

namespace sicnn {

/// One executed op, recorded when a trace is requested from forward().
struct OpRecord {
    std::string layer;
    std::string op;  // conv, deconv, prelu, pool, concat, add, flatten, fc
    Shape shape;
};

/// Per-layer output size, in the row granularity of an architecture table.
struct ShapeRow {
    std::string layer;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
};

struct ForwardTrace {
    std::vector<OpRecord> ops;
    std::vector<ShapeRow> rows;
};

struct HallucinationNetConfig {
    std::size_t input_width = 8;
    std::size_t input_height = 8;
    std::size_t channels = 1;
    std::size_t upscale_factor = 4;
    std::size_t dense_block_layers = 2;
    std::size_t growth_rate = 8;
    std::size_t mapping_channels = 16;

    std::size_t stages() const;
    std::size_t output_width() const { return input_width * upscale_factor; }
    std::size_t output_height() const { return input_height * upscale_factor; }
    void validate() const;

    static HallucinationNetConfig paper();  // 12x14 -> 96x112, RGB
    static HallucinationNetConfig paper24();  // 24x28 -> 96x112, RGB
    static HallucinationNetConfig desk();   // 8x8 -> 32x32, grayscale
};

struct RecognitionNetConfig {
    std::string preset = "desk";
    std::size_t input_width = 32;
    std::size_t input_height = 32;
    std::size_t channels = 1;
    std::array<std::size_t, 4> widths{8, 16, 32, 64};
    std::array<std::size_t, 4> blocks{1, 1, 1, 1};
    std::size_t feature_dim = 32;
    std::size_t conv_pad = 1;  // Conv1a/1b and stage convs; residual convs always pad 1

    void validate() const;

    static RecognitionNetConfig paper();
    static RecognitionNetConfig desk();
};

/// Table-granularity output sizes without building parameters. Throws when a
/// spatial extent underflows a kernel.
std::vector<ShapeRow> recognition_shape_trace(const RecognitionNetConfig& cfg);

/// Dense-block super-resolution network: per 2x stage, dense block -> 4x4
/// stride-2 deconvolution -> 1x1 mapping conv, then a 3x3 reconstruction conv.
class HallucinationNet {
public:
    HallucinationNet(HallucinationNetConfig cfg, std::uint64_t seed);

    const HallucinationNetConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    Var forward(const Var& lr_batch, ForwardTrace* trace = nullptr) const;
    HallucinationNet clone() const;

private:
    HallucinationNet(HallucinationNetConfig cfg, ParamStore params);

    HallucinationNetConfig cfg_;
    ParamStore params_;
};

/// Residual recognition network ending in the FC1 identity representation.
class RecognitionNet {
public:
    RecognitionNet(RecognitionNetConfig cfg, std::uint64_t seed);

    const RecognitionNetConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    Var forward(const Var& images, ForwardTrace* trace = nullptr) const;
    RecognitionNet clone() const;

private:
    RecognitionNet(RecognitionNetConfig cfg, ParamStore params);

    RecognitionNetConfig cfg_;
    ParamStore params_;
};

Var hallucinate(const HallucinationNet& net, const Var& lr_batch);
Tensor hallucinate(const HallucinationNet& net, const Tensor& lr_batch);
/// Un-normalized FC1 features.
Var extract_identity(const RecognitionNet& net, const Var& images);
Tensor extract_identity(const RecognitionNet& net, const Tensor& images);
/// Row-wise projection onto the unit hypersphere.
Var embed_on_hypersphere(const Var& features);
Tensor embed_on_hypersphere(const Tensor& features);

}  // namespace sicnn
