#include "sicnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "sicnn/log.hpp"
#include "sicnn/random.hpp"

namespace sicnn {

namespace {

constexpr double kPi = std::numbers::pi;

// Chebyshev T_m(c) = cos(m*acos c) and U_{m-1}(c), so d/dc T_m = m * U_{m-1}.
void chebyshev(double c, int m, double& t_m, double& u_m1) {
    double t_prev = 1.0, t = c;
    double u_prev = 0.0, u = 1.0;  // U_{-1}, U_0
    if (m == 0) {
        t_m = 1.0;
        u_m1 = 0.0;
        return;
    }
    for (int n = 1; n < m; ++n) {
        const double t_next = 2.0 * c * t - t_prev;
        const double u_next = 2.0 * c * u - u_prev;
        t_prev = t;
        t = t_next;
        u_prev = u;
        u = u_next;
    }
    t_m = t;
    u_m1 = u;
}

int segment(double theta, int m) {
    const int k = static_cast<int>(std::floor(theta * m / kPi));
    return std::clamp(k, 0, m - 1);
}

struct MarginTerm {
    double value;  // phi(theta)
    double slope;  // d phi / d cos(theta)
};

MarginTerm margin_term(double c, int m) {
    c = std::clamp(c, -1.0, 1.0);
    const int k = segment(std::acos(c), m);
    double t_m = 0.0, u_m1 = 0.0;
    chebyshev(c, m, t_m, u_m1);
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    return {sign * t_m - 2.0 * k, sign * m * u_m1};
}

}  // namespace

double phi(double theta, int m) {
    if (m < 1) {
        throw std::invalid_argument("phi: margin must be >= 1");
    }
    if (theta < 0.0 || theta > kPi) {
        log_error("phi: angle " + std::to_string(theta) + " outside [0, pi], clamping");
        theta = std::clamp(theta, 0.0, kPi);
    }
    const int k = segment(theta, m);
    return ((k % 2 == 0) ? 1.0 : -1.0) * std::cos(m * theta) - 2.0 * k;
}

double LambdaAnneal::at(std::uint64_t iteration) const {
    return std::max(lambda_min, lambda0 / (1.0 + decay * static_cast<double>(iteration)));
}

LossValue super_resolution_loss(const Var& sr, const Var& hr) {
    if (sr->shape() != hr->shape()) {
        throw std::invalid_argument("super_resolution_loss: shape mismatch " + shape_string(sr->shape()) + " vs " +
                                    shape_string(hr->shape()));
    }
    Var loss = ops::mean_squared_norm(ops::sub(sr, hr));
    return {loss, loss->value.item()};
}

// ---------------------------------------------------------------------------
// A-Softmax

ASoftmaxHead::ASoftmaxHead(std::size_t num_identities, std::size_t feature_dim, int margin, LambdaAnneal anneal,
                           std::uint64_t seed)
    : params_(seed), margin_(margin), anneal_(anneal) {
    if (margin < 1) {
        throw std::invalid_argument("A-Softmax margin must be >= 1");
    }
    if (num_identities < 2 || feature_dim == 0) {
        throw std::invalid_argument("A-Softmax head needs >= 2 identities and a positive feature dimension");
    }
    Rng rng(seed);
    Tensor w({num_identities, feature_dim});
    for (auto& v : w.data()) {
        v = rng.normal();
    }
    params_.add("head.weight", std::move(w));
}

ASoftmaxHead::ASoftmaxHead(ParamStore params, int margin, LambdaAnneal anneal, std::uint64_t iteration)
    : params_(std::move(params)), margin_(margin), anneal_(anneal), iteration_(iteration) {}

ASoftmaxHead ASoftmaxHead::clone() const { return ASoftmaxHead(params_.clone(), margin_, anneal_, iteration_); }

std::vector<std::size_t> ASoftmaxHead::classify(const Tensor& features) const {
    const Tensor& w = weight()->value;
    const std::size_t classes = w.shape()[0];
    const std::size_t d = w.shape()[1];
    if (features.rank() != 2 || features.shape()[1] != d) {
        throw std::invalid_argument("classify: expected features [N," + std::to_string(d) + "]");
    }
    std::vector<double> norms(classes);
    for (std::size_t j = 0; j < classes; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            s += w[j * d + k] * w[j * d + k];
        }
        norms[j] = std::sqrt(s);
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < features.shape()[0]; ++i) {
        std::size_t best = 0;
        double best_score = -INFINITY;
        for (std::size_t j = 0; j < classes; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                s += w[j * d + k] * features[i * d + k];
            }
            s /= norms[j];
            if (s > best_score) {
                best_score = s;
                best = j;
            }
        }
        out.push_back(best);
    }
    return out;
}

LossValue a_softmax_loss(const Var& features, const Var& class_weight, std::span<const std::size_t> labels,
                         int margin, double lambda) {
    const auto& fs = features->shape();
    const auto& ws = class_weight->shape();
    if (fs.size() != 2 || ws.size() != 2 || fs[1] != ws[1]) {
        throw std::invalid_argument("a_softmax_loss: features " + shape_string(fs) + " incompatible with weights " +
                                    shape_string(ws));
    }
    if (labels.size() != fs[0]) {
        throw std::invalid_argument("a_softmax_loss: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(fs[0]) + " features");
    }
    if (margin < 1 || lambda < 0.0) {
        throw std::invalid_argument("a_softmax_loss: need margin >= 1 and lambda >= 0");
    }
    const std::size_t n = fs[0];
    const std::size_t d = fs[1];
    const std::size_t classes = ws[0];
    for (auto y : labels) {
        if (y >= classes) {
            throw std::out_of_range("a_softmax_loss: label " + std::to_string(y) + " out of range for " +
                                    std::to_string(classes) + " identities");
        }
    }

    const Tensor& x = features->value;
    const Tensor& w = class_weight->value;
    std::vector<double> w_norm(classes);
    Tensor w_hat(ws);
    for (std::size_t j = 0; j < classes; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            s += w[j * d + k] * w[j * d + k];
        }
        w_norm[j] = std::sqrt(s);
        if (!(w_norm[j] > 0.0)) {
            throw std::domain_error("a_softmax_loss: class direction " + std::to_string(j) + " has zero norm");
        }
        for (std::size_t k = 0; k < d; ++k) {
            w_hat[j * d + k] = w[j * d + k] / w_norm[j];
        }
    }

    // Per-sample cache for the backward pass.
    std::vector<double> x_norm(n), target_cos(n), psi(n), psi_slope(n);
    Tensor prob({n, classes});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.data().data() + i * d;
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            s += xi[k] * xi[k];
        }
        x_norm[i] = std::sqrt(s);
        if (!(x_norm[i] >= 1e-12)) {
            throw std::domain_error("a_softmax_loss: feature row " + std::to_string(i) + " has zero norm");
        }
        std::vector<double> logits(classes);
        for (std::size_t j = 0; j < classes; ++j) {
            double p = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                p += w_hat[j * d + k] * xi[k];
            }
            logits[j] = p;
        }
        const std::size_t y = labels[i];
        target_cos[i] = logits[y] / x_norm[i];
        const auto mt = margin_term(target_cos[i], margin);
        psi[i] = (lambda * target_cos[i] + mt.value) / (1.0 + lambda);
        psi_slope[i] = (lambda + mt.slope) / (1.0 + lambda);
        logits[y] = x_norm[i] * psi[i];

        const double top = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (auto l : logits) {
            z += std::exp(l - top);
        }
        for (std::size_t j = 0; j < classes; ++j) {
            prob[i * classes + j] = std::exp(logits[j] - top) / z;
        }
        total += (top + std::log(z)) - logits[y];
    }

    std::vector<std::size_t> label_copy(labels.begin(), labels.end());
    Var node = make_node(
        Tensor::scalar(total / static_cast<double>(n)), "a_softmax", {features, class_weight},
        [=](Node& self) {
            const auto& fx = self.parents[0];
            const auto& fw = self.parents[1];
            const double upstream = self.grad[0] / static_cast<double>(n);
            Tensor g_what(ws, 0.0);
            Tensor* gx = fx->requires_grad ? &fx->grad_buffer() : nullptr;
            for (std::size_t i = 0; i < n; ++i) {
                const double* xi = fx->value.data().data() + i * d;
                const std::size_t y = label_copy[i];
                for (std::size_t j = 0; j < classes; ++j) {
                    const double gf = upstream * (prob[i * classes + j] - (j == y ? 1.0 : 0.0));
                    if (gf == 0.0) {
                        continue;
                    }
                    const double* wj = w_hat.data().data() + j * d;
                    if (j != y) {
                        // f_j = w_hat_j . x
                        for (std::size_t k = 0; k < d; ++k) {
                            if (gx) {
                                (*gx)[i * d + k] += gf * wj[k];
                            }
                            g_what[j * d + k] += gf * xi[k];
                        }
                    } else {
                        // f_y = |x| psi(c), c = w_hat_y . x / |x|
                        const double c = target_cos[i];
                        for (std::size_t k = 0; k < d; ++k) {
                            const double x_hat = xi[k] / x_norm[i];
                            if (gx) {
                                (*gx)[i * d + k] += gf * (psi[i] * x_hat + psi_slope[i] * (wj[k] - c * x_hat));
                            }
                            g_what[j * d + k] += gf * psi_slope[i] * xi[k];
                        }
                    }
                }
            }
            if (fw->requires_grad) {
                auto& gw = fw->grad_buffer();
                for (std::size_t j = 0; j < classes; ++j) {
                    double proj = 0.0;
                    for (std::size_t k = 0; k < d; ++k) {
                        proj += w_hat[j * d + k] * g_what[j * d + k];
                    }
                    for (std::size_t k = 0; k < d; ++k) {
                        gw[j * d + k] += (g_what[j * d + k] - proj * w_hat[j * d + k]) / w_norm[j];
                    }
                }
            }
        });
    return {node, node->value.item()};
}

LossValue a_softmax_loss(const ASoftmaxHead& head, const Var& features, std::span<const std::size_t> labels) {
    return a_softmax_loss(features, head.weight(), labels, head.margin(), head.lambda());
}

// ---------------------------------------------------------------------------

LossValue super_identity_loss(const RecognitionNet& rec, const Var& sr, const Var& hr) {
    if (sr->shape().at(0) != hr->shape().at(0)) {
        throw std::invalid_argument("super_identity_loss: batch size mismatch");
    }
    Var e_sr = embed_on_hypersphere(extract_identity(rec, sr));
    Var e_hr = embed_on_hypersphere(extract_identity(rec, hr));
    Var loss = ops::mean_squared_norm(ops::sub(e_sr, e_hr));
    return {loss, loss->value.item()};
}

LossValue joint_objective_baseline2(const LossValue& sr, const LossValue& si, double alpha) {
    if (alpha < 0.0) {
        throw std::invalid_argument("alpha must be >= 0");
    }
    if (alpha == 0.0) {
        return sr;
    }
    Var total = ops::add(sr.node, ops::scale(si.node, alpha));
    return {total, total->value.item()};
}

LossValue joint_objective_baseline1(const LossValue& sr, const LossValue& si, const LossValue& fr, double alpha,
                                    double beta) {
    if (beta < 0.0) {
        throw std::invalid_argument("beta must be >= 0");
    }
    LossValue partial = joint_objective_baseline2(sr, si, alpha);
    if (beta == 0.0) {
        return partial;
    }
    Var total = ops::add(partial.node, ops::scale(fr.node, beta));
    return {total, total->value.item()};
}

}  // namespace sicnn
