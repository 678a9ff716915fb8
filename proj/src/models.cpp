#include "sicnn/models.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "sicnn/random.hpp"

namespace sicnn {

namespace {

// He-style fan-in scaled Gaussian.
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) {
        v = std * rng.normal();
    }
    return t;
}

constexpr double kInitialSlope = 0.25;
constexpr double kReconInitScale = 0.1;

void add_conv(ParamStore& ps, Rng& rng, const std::string& name, std::size_t out_c, std::size_t in_c,
              std::size_t k, bool with_slope) {
    ps.add(name + ".weight", he_normal({out_c, in_c, k, k}, in_c * k * k, rng));
    ps.add(name + ".bias", Tensor({out_c}, 0.0));
    if (with_slope) {
        ps.add(name + ".slope", Tensor({out_c}, kInitialSlope));
    }
}

class Recorder {
public:
    explicit Recorder(ForwardTrace* trace) : trace_(trace) {}

    Var op(const std::string& layer, const char* kind, Var v) {
        if (trace_) {
            trace_->ops.push_back({layer, kind, v->shape()});
        }
        return v;
    }

    void row(const std::string& layer, const Var& v) {
        if (!trace_) {
            return;
        }
        const auto& s = v->shape();
        if (s.size() == 4) {
            trace_->rows.push_back({layer, s[1], s[2], s[3]});
        } else {
            trace_->rows.push_back({layer, s[1], 1, 1});
        }
    }

private:
    ForwardTrace* trace_;
};

void require_input(const Var& x, std::size_t c, std::size_t h, std::size_t w, const char* who) {
    const auto& s = x->shape();
    if (s.size() != 4 || s[1] != c || s[2] != h || s[3] != w) {
        throw std::invalid_argument(std::string(who) + ": expected input [N," + std::to_string(c) + "," +
                                    std::to_string(h) + "," + std::to_string(w) + "], got " + shape_string(s));
    }
}

}  // namespace

std::size_t HallucinationNetConfig::stages() const {
    return static_cast<std::size_t>(std::countr_zero(upscale_factor));
}

void HallucinationNetConfig::validate() const {
    if (upscale_factor != 2 && upscale_factor != 4 && upscale_factor != 8) {
        throw std::invalid_argument("upscale_factor must be 2, 4 or 8, got " + std::to_string(upscale_factor));
    }
    if (growth_rate == 0 || dense_block_layers == 0 || mapping_channels == 0 || channels == 0) {
        throw std::invalid_argument("growth_rate, dense_block_layers, mapping_channels and channels must be positive");
    }
    if (input_width == 0 || input_height == 0) {
        throw std::invalid_argument("hallucination input size must be positive");
    }
}

HallucinationNetConfig HallucinationNetConfig::paper() {
    HallucinationNetConfig c;
    c.input_width = 12;
    c.input_height = 14;
    c.channels = 3;
    c.upscale_factor = 8;
    c.dense_block_layers = 4;
    c.growth_rate = 32;
    c.mapping_channels = 64;
    return c;
}

HallucinationNetConfig HallucinationNetConfig::paper24() {
    HallucinationNetConfig c = paper();
    c.input_width = 24;
    c.input_height = 28;
    c.upscale_factor = 4;
    return c;
}

HallucinationNetConfig HallucinationNetConfig::desk() { return HallucinationNetConfig{}; }

void RecognitionNetConfig::validate() const {
    if (channels == 0 || feature_dim == 0 || input_width == 0 || input_height == 0) {
        throw std::invalid_argument("recognition config sizes must be positive");
    }
    for (auto w : widths) {
        if (w == 0) {
            throw std::invalid_argument("recognition stage widths must be positive");
        }
    }
}

RecognitionNetConfig RecognitionNetConfig::paper() {
    RecognitionNetConfig c;
    c.preset = "paper";
    c.input_width = 96;
    c.input_height = 112;
    c.channels = 3;
    c.widths = {64, 128, 256, 512};
    c.blocks = {1, 2, 5, 3};
    c.feature_dim = 512;
    c.conv_pad = 0;
    return c;
}

RecognitionNetConfig RecognitionNetConfig::desk() { return RecognitionNetConfig{}; }

std::vector<ShapeRow> recognition_shape_trace(const RecognitionNetConfig& cfg) {
    cfg.validate();
    std::vector<ShapeRow> rows;
    std::size_t c = cfg.channels;
    std::size_t h = cfg.input_height;
    std::size_t w = cfg.input_width;
    rows.push_back({"Input", c, h, w});
    auto conv = [&](const std::string& name, std::size_t out_c) {
        try {
            h = conv_extent(h, 3, 1, cfg.conv_pad);
            w = conv_extent(w, 3, 1, cfg.conv_pad);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("recognition shape trace underflows at " + name + ": " + e.what());
        }
        c = out_c;
        rows.push_back({name, c, h, w});
    };
    auto pool = [&](const std::string& name) {
        try {
            h = pooled_extent(h, 3, 2);
            w = pooled_extent(w, 3, 2);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("recognition shape trace underflows at " + name + ": " + e.what());
        }
        rows.push_back({name, c, h, w});
    };
    for (std::size_t s = 0; s < 4; ++s) {
        const std::string idx = std::to_string(s + 1);
        if (s == 0) {
            conv("Conv1a", cfg.widths[0]);
            conv("Conv1b", cfg.widths[0]);
        } else {
            conv("Conv" + idx, cfg.widths[s]);
        }
        pool("Avepool" + idx);
        if (cfg.blocks[s] > 0) {
            rows.push_back({"Residual_block" + idx, c, h, w});
        }
    }
    rows.push_back({"FC1", cfg.feature_dim, 1, 1});
    return rows;
}

// ---------------------------------------------------------------------------
// Hallucination network

HallucinationNet::HallucinationNet(HallucinationNetConfig cfg, std::uint64_t seed)
    : cfg_(cfg), params_(seed) {
    cfg_.validate();
    Rng rng(seed);
    std::size_t in_c = cfg_.channels;
    for (std::size_t s = 0; s < cfg_.stages(); ++s) {
        const std::string stage = "s" + std::to_string(s);
        std::size_t cat_c = in_c;
        for (std::size_t l = 0; l < cfg_.dense_block_layers; ++l) {
            add_conv(params_, rng, stage + ".dense" + std::to_string(l), cfg_.growth_rate, cat_c, 3, true);
            cat_c += cfg_.growth_rate;
        }
        // Each 4x4 stride-2 output pixel receives 2x2 taps per input channel.
        params_.add(stage + ".deconv.weight", he_normal({cat_c, cat_c, 4, 4}, cat_c * 4, rng));
        params_.add(stage + ".deconv.slope", Tensor({cat_c}, kInitialSlope));
        add_conv(params_, rng, stage + ".mapping", cfg_.mapping_channels, cat_c, 1, true);
        in_c = cfg_.mapping_channels;
    }
    add_conv(params_, rng, "recon", cfg_.channels, in_c, 3, false);
    // Start the linear output layer small; a full He draw puts the first
    // outputs far outside [0, 1] and the summed pixel loss then diverges.
    for (auto& v : params_.get("recon.weight")->value.data()) {
        v *= kReconInitScale;
    }
}

HallucinationNet::HallucinationNet(HallucinationNetConfig cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {}

HallucinationNet HallucinationNet::clone() const { return HallucinationNet(cfg_, params_.clone()); }

Var HallucinationNet::forward(const Var& lr_batch, ForwardTrace* trace) const {
    require_input(lr_batch, cfg_.channels, cfg_.input_height, cfg_.input_width, "hallucinate");
    Recorder rec(trace);
    const auto& p = params_;
    Var x = lr_batch;
    rec.row("Input", x);
    for (std::size_t s = 0; s < cfg_.stages(); ++s) {
        const std::string stage = "s" + std::to_string(s);
        std::vector<Var> feats{x};
        for (std::size_t l = 0; l < cfg_.dense_block_layers; ++l) {
            const std::string name = stage + ".dense" + std::to_string(l);
            Var in = feats.size() == 1 ? feats[0] : rec.op(name, "concat", ops::concat_channels(feats));
            Var y = rec.op(name, "conv", ops::conv2d(in, p.get(name + ".weight"), p.get(name + ".bias"), 1, 1));
            feats.push_back(rec.op(name, "prelu", ops::prelu(y, p.get(name + ".slope"))));
        }
        Var block = rec.op(stage + ".dense", "concat", ops::concat_channels(feats));
        rec.row("Stage" + std::to_string(s + 1) + ".dense_block", block);

        Var up = rec.op(stage + ".deconv", "deconv", ops::deconv2d(block, p.get(stage + ".deconv.weight"), 2, 1));
        up = rec.op(stage + ".deconv", "prelu", ops::prelu(up, p.get(stage + ".deconv.slope")));
        rec.row("Stage" + std::to_string(s + 1) + ".deconv", up);

        const std::string map = stage + ".mapping";
        x = rec.op(map, "conv", ops::conv2d(up, p.get(map + ".weight"), p.get(map + ".bias"), 1, 0));
        x = rec.op(map, "prelu", ops::prelu(x, p.get(map + ".slope")));
        rec.row("Stage" + std::to_string(s + 1) + ".mapping", x);
    }
    Var out = rec.op("recon", "conv", ops::conv2d(x, p.get("recon.weight"), p.get("recon.bias"), 1, 1));
    rec.row("Reconstruction", out);
    return out;
}

// ---------------------------------------------------------------------------
// Recognition network

RecognitionNet::RecognitionNet(RecognitionNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), params_(seed) {
    const auto rows = recognition_shape_trace(cfg_);
    Rng rng(seed);
    std::size_t in_c = cfg_.channels;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::string idx = std::to_string(s + 1);
        const std::size_t width = cfg_.widths[s];
        if (s == 0) {
            add_conv(params_, rng, "conv1a", width, in_c, 3, true);
            add_conv(params_, rng, "conv1b", width, width, 3, true);
        } else {
            add_conv(params_, rng, "conv" + idx, width, in_c, 3, true);
        }
        for (std::size_t b = 0; b < cfg_.blocks[s]; ++b) {
            const std::string block = "res" + idx + "." + std::to_string(b);
            add_conv(params_, rng, block + ".conv_a", width, width, 3, true);
            add_conv(params_, rng, block + ".conv_b", width, width, 3, true);
        }
        in_c = width;
    }
    const auto& last = rows[rows.size() - 2];
    const std::size_t fc_in = last.channels * last.height * last.width;
    params_.add("fc1.weight", he_normal({fc_in, cfg_.feature_dim}, fc_in, rng));
    params_.add("fc1.bias", Tensor({cfg_.feature_dim}, 0.0));
}

RecognitionNet::RecognitionNet(RecognitionNetConfig cfg, ParamStore params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {}

RecognitionNet RecognitionNet::clone() const { return RecognitionNet(cfg_, params_.clone()); }

Var RecognitionNet::forward(const Var& images, ForwardTrace* trace) const {
    require_input(images, cfg_.channels, cfg_.input_height, cfg_.input_width, "extract_identity");
    Recorder rec(trace);
    const auto& p = params_;
    const std::size_t pad = cfg_.conv_pad;
    auto conv_prelu = [&](const std::string& name, const Var& in, std::size_t conv_pad) {
        Var y = rec.op(name, "conv", ops::conv2d(in, p.get(name + ".weight"), p.get(name + ".bias"), 1, conv_pad));
        return rec.op(name, "prelu", ops::prelu(y, p.get(name + ".slope")));
    };
    Var x = images;
    rec.row("Input", x);
    for (std::size_t s = 0; s < 4; ++s) {
        const std::string idx = std::to_string(s + 1);
        if (s == 0) {
            x = conv_prelu("conv1a", x, pad);
            rec.row("Conv1a", x);
            x = conv_prelu("conv1b", x, pad);
            rec.row("Conv1b", x);
        } else {
            x = conv_prelu("conv" + idx, x, pad);
            rec.row("Conv" + idx, x);
        }
        x = rec.op("pool" + idx, "pool", ops::avg_pool(x, 3, 2));
        rec.row("Avepool" + idx, x);
        for (std::size_t b = 0; b < cfg_.blocks[s]; ++b) {
            const std::string block = "res" + idx + "." + std::to_string(b);
            Var y = conv_prelu(block + ".conv_a", x, 1);
            y = conv_prelu(block + ".conv_b", y, 1);
            x = rec.op(block, "add", ops::add(x, y));
        }
        if (cfg_.blocks[s] > 0) {
            rec.row("Residual_block" + idx, x);
        }
    }
    x = rec.op("fc1", "flatten", ops::flatten(x));
    x = rec.op("fc1", "fc", ops::fully_connected(x, p.get("fc1.weight"), p.get("fc1.bias")));
    rec.row("FC1", x);
    return x;
}

// ---------------------------------------------------------------------------

Var hallucinate(const HallucinationNet& net, const Var& lr_batch) { return net.forward(lr_batch); }

Tensor hallucinate(const HallucinationNet& net, const Tensor& lr_batch) {
    return net.forward(constant(lr_batch))->value;
}

Var extract_identity(const RecognitionNet& net, const Var& images) { return net.forward(images); }

Tensor extract_identity(const RecognitionNet& net, const Tensor& images) {
    return net.forward(constant(images))->value;
}

Var embed_on_hypersphere(const Var& features) { return ops::l2_normalize(features); }

Tensor embed_on_hypersphere(const Tensor& features) { return ops::l2_normalize(constant(features))->value; }

}  // namespace sicnn
