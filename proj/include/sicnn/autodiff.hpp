#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sicnn/tensor.hpp"

namespace sicnn {

class Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. Interior nodes own their parents, so a
/// graph lives exactly as long as its root is referenced.
class Node {
public:
    using BackwardFn = std::function<void(Node&)>;

    Tensor value;
    Tensor grad;  // empty until first accumulation
    std::string op;
    bool requires_grad = false;
    std::vector<Var> parents;
    BackwardFn backward_fn;

    bool is_leaf() const { return parents.empty(); }
    const Shape& shape() const { return value.shape(); }

    /// Gradient storage, zero-allocated on first use.
    Tensor& grad_buffer();
    void zero_grad();
};

Var make_leaf(Tensor value, bool requires_grad = true);
Var constant(Tensor value);
/// Interior node; requires_grad is inherited from the parents.
Var make_node(Tensor value, std::string op, std::vector<Var> parents, Node::BackwardFn fn);
/// Fresh constant leaf sharing the value of `v`; blocks gradient flow.
Var detach(const Var& v);

/// Propagates d(root)/d(node) into every reachable node that requires grad.
/// Leaf gradients accumulate across calls; interior gradients are reset first.
void backward(const Var& root);

namespace ops {

Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t pad);
Var deconv2d(const Var& input, const Var& weight, std::size_t stride, std::size_t pad);
Var prelu(const Var& input, const Var& slope);
/// Ceil-mode average pooling without padding; each window is averaged over the
/// cells it actually covers.
Var avg_pool(const Var& input, std::size_t kernel, std::size_t stride);
Var concat_channels(const Var& a, const Var& b);
Var concat_channels(std::span<const Var> parts);
Var fully_connected(const Var& input, const Var& weight, const Var& bias);
Var l2_normalize(const Var& input, double eps = 1e-12);

Var flatten(const Var& input);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);
Var weighted_sum(const Var& a, const Tensor& weights);
/// (1/N) * sum_n ||x_n||^2 over the leading axis.
Var mean_squared_norm(const Var& x);

}  // namespace ops

std::size_t pooled_extent(std::size_t extent, std::size_t kernel, std::size_t stride);
std::size_t conv_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t pad);
std::size_t deconv_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t pad);

}  // namespace sicnn
