#include "sicnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "sicnn/losses.hpp"
#include "sicnn/models.hpp"
#include "sicnn/random.hpp"

namespace sicnn {

double gradient_relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

GradCheckResult check_gradients(const std::string& name, const std::vector<Var>& inputs,
                                const std::function<Var()>& build, const GradCheckOptions& options) {
    for (const auto& in : inputs) {
        if (!in->is_leaf() || !in->requires_grad) {
            throw std::invalid_argument("check_gradients(" + name + "): inputs must be trainable leaves");
        }
        in->zero_grad();
    }
    Rng rng(options.seed);
    const Var probe = build();
    Tensor weights(probe->shape());
    for (auto& w : weights.data()) {
        w = rng.normal();
    }
    backward(ops::weighted_sum(probe, weights));

    auto evaluate = [&] { return dot(build()->value, weights); };

    GradCheckResult result;
    result.name = name;
    result.tolerance = options.tolerance;
    for (const auto& in : inputs) {
        const Tensor analytic = in->grad.empty() ? Tensor(in->shape(), 0.0) : in->grad;
        std::vector<std::size_t> coords(in->value.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > options.max_coords) {
            for (std::size_t i = 0; i < options.max_coords; ++i) {
                std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
            }
            coords.resize(options.max_coords);
        }
        for (std::size_t idx : coords) {
            double& x = in->value.data()[idx];
            const double saved = x;
            const double h = 1e-6 * std::max(1.0, std::abs(saved));
            x = saved + h;
            const double f_plus = evaluate();
            x = saved - h;
            const double f_minus = evaluate();
            x = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            result.max_rel_error = std::max(result.max_rel_error, gradient_relative_error(analytic[idx], numeric));
            ++result.coordinates;
        }
    }
    result.passed = std::isfinite(result.max_rel_error) && result.max_rel_error <= options.tolerance;
    return result;
}

namespace {

Var random_leaf(const Shape& shape, Rng& rng, double scale = 1.0) {
    Tensor t(shape);
    for (auto& v : t.data()) {
        v = scale * rng.normal();
    }
    return make_leaf(std::move(t));
}

// Identity forward with a deliberately wrong backward (x1.5).
Var faulty_identity(const Var& x) {
    return make_node(x->value, "faulty", {x}, [](Node& self) {
        const auto& p = self.parents[0];
        if (!p->requires_grad) {
            return;
        }
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g.data()[i] += 1.5 * self.grad[i];
        }
    });
}

RecognitionNetConfig tiny_recognition() {
    RecognitionNetConfig cfg;
    cfg.preset = "tiny";
    cfg.input_width = 24;
    cfg.input_height = 24;
    cfg.widths = {2, 3, 3, 4};
    cfg.feature_dim = 5;
    return cfg;
}

HallucinationNetConfig tiny_hallucination() {
    HallucinationNetConfig cfg;
    cfg.input_width = 6;
    cfg.input_height = 6;
    cfg.upscale_factor = 4;
    cfg.dense_block_layers = 2;
    cfg.growth_rate = 2;
    cfg.mapping_channels = 3;
    return cfg;
}

// Parameters of a store as gradcheck inputs (they are trainable leaves).
std::vector<Var> leaves_of(const ParamStore& store) {
    std::vector<Var> out;
    for (const auto& p : store.entries()) {
        out.push_back(p.node);
    }
    return out;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, bool inject_fault) {
    std::vector<GradCheckResult> results;
    Rng rng(derive_seed(seed, 77));
    GradCheckOptions opt;
    auto next_opt = [&](double tol = 1e-5, std::size_t coords = 40) {
        opt.tolerance = tol;
        opt.max_coords = coords;
        opt.seed = rng.next();
        return opt;
    };

    {
        auto x = random_leaf({2, 3, 6, 5}, rng);
        auto w = random_leaf({4, 3, 3, 3}, rng, 0.5);
        auto b = random_leaf({4}, rng);
        results.push_back(check_gradients("conv2d", {x, w, b}, [&] {
            const Var y = ops::conv2d(x, w, b, 1, 1);
            return inject_fault ? faulty_identity(y) : y;
        }, next_opt()));
    }
    {
        auto x = random_leaf({2, 2, 7, 6}, rng);
        auto w = random_leaf({3, 2, 3, 2}, rng, 0.5);
        results.push_back(check_gradients("conv2d_stride2", {x, w}, [&] { return ops::conv2d(x, w, nullptr, 2, 0); },
                                          next_opt()));
    }
    {
        auto x = random_leaf({2, 3, 4, 3}, rng);
        auto w = random_leaf({3, 2, 4, 4}, rng, 0.5);
        results.push_back(check_gradients("deconv2d", {x, w}, [&] { return ops::deconv2d(x, w, 2, 1); }, next_opt()));
    }
    {
        auto x = random_leaf({2, 3, 4, 4}, rng);
        auto a = random_leaf({3}, rng, 0.3);
        results.push_back(check_gradients("prelu", {x, a}, [&] { return ops::prelu(x, a); }, next_opt()));
        auto s = random_leaf({1}, rng, 0.3);
        results.push_back(check_gradients("prelu_shared", {x, s}, [&] { return ops::prelu(x, s); }, next_opt()));
    }
    {
        auto x = random_leaf({2, 2, 8, 7}, rng);
        results.push_back(check_gradients("avg_pool", {x}, [&] { return ops::avg_pool(x, 3, 2); }, next_opt()));
    }
    {
        auto a = random_leaf({2, 2, 3, 3}, rng);
        auto b = random_leaf({2, 1, 3, 3}, rng);
        results.push_back(
            check_gradients("concat_channels", {a, b}, [&] { return ops::concat_channels(a, b); }, next_opt()));
    }
    {
        auto x = random_leaf({3, 5}, rng);
        auto w = random_leaf({5, 4}, rng, 0.5);
        auto b = random_leaf({4}, rng);
        results.push_back(check_gradients("fully_connected", {x, w, b},
                                          [&] { return ops::fully_connected(x, w, b); }, next_opt()));
    }
    {
        auto x = random_leaf({4, 6}, rng);
        results.push_back(check_gradients("l2_normalize", {x}, [&] { return ops::l2_normalize(x); }, next_opt()));
    }
    {
        auto sr = random_leaf({2, 1, 4, 4}, rng);
        auto hr = random_leaf({2, 1, 4, 4}, rng);
        results.push_back(check_gradients("loss_sr", {sr, hr}, [&] { return super_resolution_loss(sr, hr).node; },
                                          next_opt()));
    }
    {
        RecognitionNet rec(tiny_recognition(), rng.next());
        auto sr = random_leaf({2, 1, 24, 24}, rng, 0.5);
        auto hr = random_leaf({2, 1, 24, 24}, rng, 0.5);
        std::vector<Var> inputs{sr, hr};
        for (const auto& p : leaves_of(rec.params())) {
            inputs.push_back(p);
        }
        results.push_back(check_gradients("loss_si", inputs,
                                          [&] { return super_identity_loss(rec, sr, hr).node; }, next_opt(1e-5, 20)));
    }
    for (int m = 1; m <= 4; ++m) {
        for (double lambda : {0.0, 5.0}) {
            auto f = random_leaf({5, 4}, rng);
            auto w = random_leaf({3, 4}, rng);
            const std::vector<std::size_t> labels{0, 2, 1, 2, 0};
            const std::string name = "loss_asoftmax_m" + std::to_string(m) + (lambda == 0.0 ? "_l0" : "_l5");
            results.push_back(check_gradients(
                name, {f, w}, [&] { return a_softmax_loss(f, w, labels, m, lambda).node; }, next_opt()));
        }
    }
    {
        HallucinationNet h(tiny_hallucination(), rng.next());
        RecognitionNet rec(tiny_recognition(), rng.next());
        auto lr = random_leaf({2, 1, 6, 6}, rng, 0.5);
        std::vector<Var> inputs{lr};
        for (const auto& p : leaves_of(h.params())) {
            inputs.push_back(p);
        }
        for (const auto& p : leaves_of(rec.params())) {
            inputs.push_back(p);
        }
        results.push_back(check_gradients("composite_h_r", inputs,
                                          [&] { return rec.forward(h.forward(lr)); }, next_opt(1e-4, 12)));
    }
    return results;
}

void write_gradcheck_table(const std::vector<GradCheckResult>& results, std::ostream& os) {
    os << std::left << std::setw(24) << "op" << std::right << std::setw(14) << "max_rel_err" << std::setw(10)
       << "tol" << std::setw(8) << "coords" << "  result\n";
    for (const auto& r : results) {
        os << std::left << std::setw(24) << r.name << std::right << std::scientific << std::setprecision(3)
           << std::setw(14) << r.max_rel_error << std::setw(10) << std::setprecision(0) << r.tolerance
           << std::defaultfloat << std::setw(8) << r.coordinates << "  " << (r.passed ? "PASS" : "FAIL") << '\n';
    }
}

}  // namespace sicnn
