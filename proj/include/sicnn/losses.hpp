#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sicnn/autodiff.hpp"
#include "sicnn/models.hpp"
#include "sicnn/param_store.hpp"

namespace sicnn {

/// Differentiable scalar plus its detached value for logging.
struct LossValue {
    Var node;
    double value = 0.0;
};

/// Batch mean of per-sample squared Euclidean pixel distance.
LossValue super_resolution_loss(const Var& sr, const Var& hr);

/// Piecewise angular-margin function (-1)^k cos(m*theta) - 2k on
/// [k*pi/m, (k+1)*pi/m]. Monotonically non-increasing on [0, pi].
/// Angles outside [0, pi] are clamped with a warning.
double phi(double theta, int m);

/// Decay of the softmax/margin blending weight:
/// lambda(iter) = max(lambda_min, lambda0 / (1 + decay * iter)).
struct LambdaAnneal {
    double lambda0 = 1000.0;
    double lambda_min = 5.0;
    double decay = 0.1;

    double at(std::uint64_t iteration) const;
    static LambdaAnneal fixed(double lambda) { return {lambda, lambda, 0.0}; }
};

/// A-Softmax classification head: one learnable direction per identity.
class ASoftmaxHead {
public:
    ASoftmaxHead(std::size_t num_identities, std::size_t feature_dim, int margin, LambdaAnneal anneal,
                 std::uint64_t seed);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Var& weight() const { return params_.get("head.weight"); }

    int margin() const { return margin_; }
    const LambdaAnneal& anneal() const { return anneal_; }
    double lambda() const { return anneal_.at(iteration_); }
    std::uint64_t iteration() const { return iteration_; }
    void set_iteration(std::uint64_t it) { iteration_ = it; }
    void advance() { ++iteration_; }

    std::size_t num_identities() const { return weight()->shape()[0]; }
    /// Nearest class direction (largest cosine) for each feature row.
    std::vector<std::size_t> classify(const Tensor& features) const;

    ASoftmaxHead clone() const;

private:
    ASoftmaxHead(ParamStore params, int margin, LambdaAnneal anneal, std::uint64_t iteration);

    ParamStore params_;
    int margin_;
    LambdaAnneal anneal_;
    std::uint64_t iteration_ = 0;
};

/// Batch-mean A-Softmax loss with class weights renormalized per call. The
/// target logit is ||x|| * (lambda*cos + phi) / (1 + lambda); other classes use
/// ||x|| * cos.
LossValue a_softmax_loss(const Var& features, const Var& class_weight, std::span<const std::size_t> labels,
                         int margin, double lambda);
LossValue a_softmax_loss(const ASoftmaxHead& head, const Var& features, std::span<const std::size_t> labels);

/// Batch mean of squared chord distance between unit-normalized identity
/// features of `sr` and `hr`. Freeze the recognition net to keep gradients
/// out of its parameters.
LossValue super_identity_loss(const RecognitionNet& rec, const Var& sr, const Var& hr);

/// L_SR + alpha * L_SI. Returns `sr` itself when alpha is zero.
LossValue joint_objective_baseline2(const LossValue& sr, const LossValue& si, double alpha);
/// L_SR + alpha * L_SI + beta * L_FR.
LossValue joint_objective_baseline1(const LossValue& sr, const LossValue& si, const LossValue& fr, double alpha,
                                    double beta);

}  // namespace sicnn
