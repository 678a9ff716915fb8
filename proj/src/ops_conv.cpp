#include <algorithm>
#include <stdexcept>
#include <string>

#include "eigen_map.hpp"
#include "sicnn/autodiff.hpp"
#include "sicnn/parallel.hpp"

namespace sicnn {

namespace {

struct Geometry {
    std::size_t channels, height, width;  // image being sampled
    std::size_t kh, kw, stride, pad;
    std::size_t out_h, out_w;  // sliding-window grid

    std::size_t rows() const { return channels * kh * kw; }
    std::size_t cols() const { return out_h * out_w; }
};

// cols[(c*kh*kw + i*kw + j), (oh*out_w + ow)] = img[c, oh*stride - pad + i, ow*stride - pad + j]
void im2col(const double* img, const Geometry& g, double* cols) {
    const std::size_t ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
                    double* dst = row + oh * g.out_w;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(dst, dst + g.out_w, 0.0);
                        continue;
                    }
                    const double* src = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const auto iw =
                            static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                        dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0
                                                                                          : src[iw];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds columns back onto the image.
void col2im(const double* cols, const Geometry& g, double* img) {
    const std::size_t ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
                        continue;
                    }
                    double* dst = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
                    const double* src = row + oh * g.out_w;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const auto iw =
                            static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                        if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) {
                            dst[iw] += src[ow];
                        }
                    }
                }
            }
        }
    }
}

// Weight gradients are reduced in sample order in fixed-size chunks so the
// result does not depend on the worker count.
template <class PerSample>
void reduce_in_order(std::size_t batch, std::size_t len, double* target, PerSample&& per_sample) {
    const std::size_t chunk = std::max<std::size_t>(1, num_threads());
    std::vector<std::vector<double>> bufs(std::min(chunk, batch), std::vector<double>(len));
    for (std::size_t start = 0; start < batch; start += chunk) {
        const std::size_t stop = std::min(batch, start + chunk);
        parallel_for(start, stop, [&](std::size_t n) { per_sample(n, bufs[n - start].data()); });
        for (std::size_t n = start; n < stop; ++n) {
            const double* b = bufs[n - start].data();
            for (std::size_t i = 0; i < len; ++i) {
                target[i] += b[i];
            }
        }
    }
}

void require_rank4(const Var& v, const char* op, const char* what) {
    if (v->shape().size() != 4) {
        throw std::invalid_argument(std::string(op) + ": " + what + " must be rank 4, got " +
                                    shape_string(v->shape()));
    }
}

}  // namespace

std::size_t conv_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0) {
        throw std::invalid_argument("convolution stride must be >= 1");
    }
    if (kernel > extent + 2 * pad) {
        throw std::invalid_argument("kernel " + std::to_string(kernel) + " exceeds padded extent " +
                                    std::to_string(extent + 2 * pad));
    }
    return (extent + 2 * pad - kernel) / stride + 1;
}

std::size_t deconv_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0) {
        throw std::invalid_argument("deconvolution stride must be >= 1");
    }
    const auto out = static_cast<long long>((extent - 1) * stride + kernel) - 2 * static_cast<long long>(pad);
    if (out <= 0) {
        throw std::invalid_argument("deconvolution output extent is non-positive (" + std::to_string(out) + ")");
    }
    return static_cast<std::size_t>(out);
}

std::size_t pooled_extent(std::size_t extent, std::size_t kernel, std::size_t stride) {
    if (stride == 0 || kernel == 0) {
        throw std::invalid_argument("pooling kernel and stride must be >= 1");
    }
    if (kernel > extent) {
        throw std::invalid_argument("pooling kernel " + std::to_string(kernel) + " exceeds extent " +
                                    std::to_string(extent));
    }
    std::size_t out = (extent - kernel + stride - 1) / stride + 1;
    // The last window must start inside the input.
    if ((out - 1) * stride >= extent) {
        --out;
    }
    return out;
}

namespace ops {

Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t pad) {
    require_rank4(input, "conv2d", "input");
    require_rank4(weight, "conv2d", "weight");
    const auto& xs = input->shape();
    const auto& ws = weight->shape();
    if (xs[1] != ws[1]) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(xs[1]) + " channels but weight " +
                                    shape_string(ws) + " expects " + std::to_string(ws[1]));
    }
    if (bias && bias->value.size() != ws[0]) {
        throw std::invalid_argument("conv2d: bias length " + std::to_string(bias->value.size()) +
                                    " != output channels " + std::to_string(ws[0]));
    }
    const std::size_t batch = xs[0];
    const std::size_t out_c = ws[0];
    Geometry g{xs[1], xs[2], xs[3], ws[2], ws[3], stride, pad, 0, 0};
    g.out_h = conv_extent(g.height, g.kh, stride, pad);
    g.out_w = conv_extent(g.width, g.kw, stride, pad);

    const std::size_t in_len = g.channels * g.height * g.width;
    const std::size_t out_len = out_c * g.cols();
    const auto rows = static_cast<Eigen::Index>(g.rows());
    const auto ncols = static_cast<Eigen::Index>(g.cols());
    const auto k = static_cast<Eigen::Index>(out_c);

    Tensor out({batch, out_c, g.out_h, g.out_w});
    parallel_for(0, batch, [&](std::size_t n) {
        std::vector<double> cols(g.rows() * g.cols());
        im2col(input->value.data().data() + n * in_len, g, cols.data());
        auto y = detail::mat(out.data().data() + n * out_len, k, ncols);
        y.noalias() = detail::mat(weight->value.data().data(), k, rows) * detail::mat(cols.data(), rows, ncols);
        if (bias) {
            for (Eigen::Index c = 0; c < k; ++c) {
                y.row(c).array() += bias->value[static_cast<std::size_t>(c)];
            }
        }
    });

    std::vector<Var> parents{input, weight};
    if (bias) {
        parents.push_back(bias);
    }
    return make_node(std::move(out), "conv2d", std::move(parents), [=](Node& self) {
        const auto& x = self.parents[0];
        const auto& w = self.parents[1];
        const double* gy = self.grad.data().data();
        const auto wm = detail::mat(w->value.data().data(), k, rows);
        if (x->requires_grad) {
            double* gx = x->grad_buffer().data().data();
            parallel_for(0, batch, [&](std::size_t n) {
                std::vector<double> dcols(g.rows() * g.cols());
                detail::mat(dcols.data(), rows, ncols).noalias() =
                    wm.transpose() * detail::mat(gy + n * out_len, k, ncols);
                col2im(dcols.data(), g, gx + n * in_len);
            });
        }
        if (w->requires_grad) {
            reduce_in_order(batch, w->value.size(), w->grad_buffer().data().data(), [&](std::size_t n, double* buf) {
                std::vector<double> cols(g.rows() * g.cols());
                im2col(x->value.data().data() + n * in_len, g, cols.data());
                detail::mat(buf, k, rows).noalias() =
                    detail::mat(gy + n * out_len, k, ncols) * detail::mat(cols.data(), rows, ncols).transpose();
            });
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& gb = self.parents[2]->grad_buffer();
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t c = 0; c < out_c; ++c) {
                    const double* src = gy + n * out_len + c * g.cols();
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.cols(); ++i) {
                        s += src[i];
                    }
                    gb[c] += s;
                }
            }
        }
    });
}

Var deconv2d(const Var& input, const Var& weight, std::size_t stride, std::size_t pad) {
    require_rank4(input, "deconv2d", "input");
    require_rank4(weight, "deconv2d", "weight");
    const auto& xs = input->shape();
    const auto& ws = weight->shape();
    if (xs[1] != ws[0]) {
        throw std::invalid_argument("deconv2d: input has " + std::to_string(xs[1]) + " channels but weight " +
                                    shape_string(ws) + " expects " + std::to_string(ws[0]));
    }
    const std::size_t batch = xs[0];
    const std::size_t in_c = xs[1];
    const std::size_t in_h = xs[2];
    const std::size_t in_w = xs[3];
    // The output image plays the role of a convolution input whose window grid is the deconv input.
    Geometry g{ws[1], deconv_extent(in_h, ws[2], stride, pad), deconv_extent(in_w, ws[3], stride, pad),
               ws[2], ws[3], stride, pad, in_h, in_w};

    const std::size_t in_len = in_c * in_h * in_w;
    const std::size_t out_len = g.channels * g.height * g.width;
    const auto rows = static_cast<Eigen::Index>(g.rows());
    const auto ncols = static_cast<Eigen::Index>(g.cols());
    const auto c_in = static_cast<Eigen::Index>(in_c);

    Tensor out({batch, g.channels, g.height, g.width});
    parallel_for(0, batch, [&](std::size_t n) {
        std::vector<double> cols(g.rows() * g.cols());
        detail::mat(cols.data(), rows, ncols).noalias() =
            detail::mat(weight->value.data().data(), c_in, rows).transpose() *
            detail::mat(input->value.data().data() + n * in_len, c_in, ncols);
        col2im(cols.data(), g, out.data().data() + n * out_len);
    });

    return make_node(std::move(out), "deconv2d", {input, weight}, [=](Node& self) {
        const auto& x = self.parents[0];
        const auto& w = self.parents[1];
        const double* gy = self.grad.data().data();
        const auto wm = detail::mat(w->value.data().data(), c_in, rows);
        if (x->requires_grad) {
            double* gx = x->grad_buffer().data().data();
            parallel_for(0, batch, [&](std::size_t n) {
                std::vector<double> cols(g.rows() * g.cols());
                im2col(gy + n * out_len, g, cols.data());
                detail::mat(gx + n * in_len, c_in, ncols).noalias() += wm * detail::mat(cols.data(), rows, ncols);
            });
        }
        if (w->requires_grad) {
            reduce_in_order(batch, w->value.size(), w->grad_buffer().data().data(), [&](std::size_t n, double* buf) {
                std::vector<double> cols(g.rows() * g.cols());
                im2col(gy + n * out_len, g, cols.data());
                detail::mat(buf, c_in, rows).noalias() =
                    detail::mat(x->value.data().data() + n * in_len, c_in, ncols) *
                    detail::mat(cols.data(), rows, ncols).transpose();
            });
        }
    });
}

Var prelu(const Var& input, const Var& slope) {
    const auto& s = input->shape();
    const std::size_t ns = slope->value.size();
    std::size_t outer = 1;
    std::size_t channels = 1;
    std::size_t inner = input->value.size();
    if (ns != 1) {
        if (s.size() < 2 || s[1] != ns) {
            throw std::invalid_argument("prelu: slope length " + std::to_string(ns) +
                                        " does not match channel dimension of " + shape_string(s));
        }
        outer = s[0];
        channels = s[1];
        inner = input->value.size() / (outer * channels);
    }
    Tensor out(s);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double a = slope->value[ns == 1 ? 0 : c];
            const std::size_t base = (o * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const double v = input->value[base + i];
                out[base + i] = v > 0.0 ? v : a * v;
            }
        }
    }
    return make_node(std::move(out), "prelu", {input, slope}, [=](Node& self) {
        const auto& x = self.parents[0];
        const auto& a = self.parents[1];
        Tensor* gx = x->requires_grad ? &x->grad_buffer() : nullptr;
        Tensor* ga = a->requires_grad ? &a->grad_buffer() : nullptr;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t sc = ns == 1 ? 0 : c;
                const double av = a->value[sc];
                const std::size_t base = (o * channels + c) * inner;
                double acc = 0.0;
                for (std::size_t i = 0; i < inner; ++i) {
                    const double v = x->value[base + i];
                    const double gv = self.grad[base + i];
                    if (v > 0.0) {
                        if (gx) {
                            (*gx)[base + i] += gv;
                        }
                    } else {
                        if (gx) {
                            (*gx)[base + i] += av * gv;
                        }
                        acc += gv * v;
                    }
                }
                if (ga) {
                    (*ga)[sc] += acc;
                }
            }
        }
    });
}

Var avg_pool(const Var& input, std::size_t kernel, std::size_t stride) {
    require_rank4(input, "avg_pool", "input");
    const auto& s = input->shape();
    const std::size_t planes = s[0] * s[1];
    const std::size_t h = s[2];
    const std::size_t w = s[3];
    const std::size_t oh = pooled_extent(h, kernel, stride);
    const std::size_t ow = pooled_extent(w, kernel, stride);
    Tensor out({s[0], s[1], oh, ow});
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = input->value.data().data() + p * h * w;
        double* dst = out.data().data() + p * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const std::size_t y0 = y * stride;
            const std::size_t y1 = std::min(h, y0 + kernel);
            for (std::size_t x = 0; x < ow; ++x) {
                const std::size_t x0 = x * stride;
                const std::size_t x1 = std::min(w, x0 + kernel);
                double acc = 0.0;
                for (std::size_t yy = y0; yy < y1; ++yy) {
                    for (std::size_t xx = x0; xx < x1; ++xx) {
                        acc += src[yy * w + xx];
                    }
                }
                dst[y * ow + x] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
            }
        }
    }
    return make_node(std::move(out), "avg_pool", {input}, [=](Node& self) {
        double* gx = self.parents[0]->grad_buffer().data().data();
        for (std::size_t p = 0; p < planes; ++p) {
            const double* gy = self.grad.data().data() + p * oh * ow;
            double* dst = gx + p * h * w;
            for (std::size_t y = 0; y < oh; ++y) {
                const std::size_t y0 = y * stride;
                const std::size_t y1 = std::min(h, y0 + kernel);
                for (std::size_t x = 0; x < ow; ++x) {
                    const std::size_t x0 = x * stride;
                    const std::size_t x1 = std::min(w, x0 + kernel);
                    const double share = gy[y * ow + x] / static_cast<double>((y1 - y0) * (x1 - x0));
                    for (std::size_t yy = y0; yy < y1; ++yy) {
                        for (std::size_t xx = x0; xx < x1; ++xx) {
                            dst[yy * w + xx] += share;
                        }
                    }
                }
            }
        }
    });
}

Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_channels: no inputs");
    }
    const Shape& first = parts[0]->shape();
    if (first.size() < 2) {
        throw std::invalid_argument("concat_channels: inputs need a channel axis");
    }
    std::size_t channels = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        const Shape& s = p->shape();
        bool ok = s.size() == first.size() && s[0] == first[0];
        for (std::size_t a = 2; ok && a < s.size(); ++a) {
            ok = s[a] == first[a];
        }
        if (!ok) {
            throw std::invalid_argument("concat_channels: shape " + shape_string(s) + " incompatible with " +
                                        shape_string(first));
        }
        offsets.push_back(channels);
        channels += s[1];
    }
    const std::size_t batch = first[0];
    const std::size_t inner = parts[0]->value.size() / (first[0] * first[1]);
    Shape out_shape = first;
    out_shape[1] = channels;
    Tensor out(out_shape);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::size_t pc = parts[i]->shape()[1];
        for (std::size_t n = 0; n < batch; ++n) {
            const double* src = parts[i]->value.data().data() + n * pc * inner;
            std::copy(src, src + pc * inner, out.data().data() + (n * channels + offsets[i]) * inner);
        }
    }
    return make_node(std::move(out), "concat_channels", {parts.begin(), parts.end()},
                     [=](Node& self) {
                         for (std::size_t i = 0; i < self.parents.size(); ++i) {
                             const auto& p = self.parents[i];
                             if (!p->requires_grad) {
                                 continue;
                             }
                             const std::size_t pc = p->shape()[1];
                             auto& gp = p->grad_buffer();
                             for (std::size_t n = 0; n < batch; ++n) {
                                 const double* src = self.grad.data().data() + (n * channels + offsets[i]) * inner;
                                 double* dst = gp.data().data() + n * pc * inner;
                                 for (std::size_t j = 0; j < pc * inner; ++j) {
                                     dst[j] += src[j];
                                 }
                             }
                         }
                     });
}

Var concat_channels(const Var& a, const Var& b) {
    const Var parts[] = {a, b};
    return concat_channels(std::span<const Var>(parts));
}

}  // namespace ops
}  // namespace sicnn
