#include "sicnn/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "eigen_map.hpp"

namespace sicnn {

Tensor& Node::grad_buffer() {
    if (grad.empty()) {
        grad = Tensor(value.shape(), 0.0);
    }
    return grad;
}

void Node::zero_grad() {
    if (!grad.empty()) {
        grad.fill(0.0);
    }
}

Var make_leaf(Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = "leaf";
    node->requires_grad = requires_grad;
    return node;
}

Var constant(Tensor value) { return make_leaf(std::move(value), false); }

Var make_node(Tensor value, std::string op, std::vector<Var> parents, Node::BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = std::move(op);
    for (const auto& p : parents) {
        if (!p) {
            throw std::invalid_argument(node->op + ": null input");
        }
        node->requires_grad = node->requires_grad || p->requires_grad;
    }
    node->parents = std::move(parents);
    if (node->requires_grad) {
        node->backward_fn = std::move(fn);
    } else {
        // Nothing upstream needs a gradient: drop the tape.
        node->parents.clear();
    }
    return node;
}

Var detach(const Var& v) { return constant(v->value); }

void backward(const Var& root) {
    if (!root) {
        throw std::invalid_argument("backward: null root");
    }
    if (root->value.size() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got shape " +
                                    shape_string(root->value.shape()));
    }
    if (!root->requires_grad) {
        return;
    }

    // Iterative post-order DFS -> reverse topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (!n->is_leaf()) {
            n->zero_grad();
        }
    }
    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf() && n->backward_fn && !n->grad.empty()) {
            n->backward_fn(*n);
        }
    }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->shape() != b->shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a->shape()) +
                                    " vs " + shape_string(b->shape()));
    }
}

void accumulate(const Var& target, const Tensor& g, double factor = 1.0) {
    if (!target->requires_grad) {
        return;
    }
    auto& buf = target->grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] += factor * g[i];
    }
}

}  // namespace

namespace ops {

Var flatten(const Var& input) {
    const auto& s = input->shape();
    if (s.empty()) {
        throw std::invalid_argument("flatten: rank-0 input");
    }
    Shape out{s[0], input->value.size() / s[0]};
    return make_node(input->value.reshaped(out), "flatten", {input},
                     [](Node& self) { accumulate(self.parents[0], self.grad); });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b->value[i];
    }
    return make_node(std::move(out), "add", {a, b}, [](Node& self) {
        accumulate(self.parents[0], self.grad);
        accumulate(self.parents[1], self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b->value[i];
    }
    return make_node(std::move(out), "sub", {a, b}, [](Node& self) {
        accumulate(self.parents[0], self.grad);
        accumulate(self.parents[1], self.grad, -1.0);
    });
}

Var scale(const Var& a, double factor) {
    Tensor out = a->value;
    for (auto& v : out.data()) {
        v *= factor;
    }
    return make_node(std::move(out), "scale", {a},
                     [factor](Node& self) { accumulate(self.parents[0], self.grad, factor); });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data()) {
        s += v;
    }
    return make_node(Tensor::scalar(s), "sum", {a}, [](Node& self) {
        const auto& p = self.parents[0];
        if (!p->requires_grad) {
            return;
        }
        const double g = self.grad[0];
        for (auto& v : p->grad_buffer().data()) {
            v += g;
        }
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a->value.size())); }

Var dot(const Var& a, const Var& b) {
    if (a->value.size() != b->value.size()) {
        throw std::invalid_argument("dot: size mismatch " + shape_string(a->shape()) + " vs " +
                                    shape_string(b->shape()));
    }
    return make_node(Tensor::scalar(sicnn::dot(a->value, b->value)), "dot", {a, b}, [](Node& self) {
        const double g = self.grad[0];
        accumulate(self.parents[0], self.parents[1]->value, g);
        accumulate(self.parents[1], self.parents[0]->value, g);
    });
}

Var weighted_sum(const Var& a, const Tensor& weights) {
    if (a->value.size() != weights.size()) {
        throw std::invalid_argument("weighted_sum: size mismatch");
    }
    return make_node(Tensor::scalar(sicnn::dot(a->value, weights)), "weighted_sum", {a},
                     [weights](Node& self) { accumulate(self.parents[0], weights, self.grad[0]); });
}

Var mean_squared_norm(const Var& x) {
    const double n = static_cast<double>(x->shape().at(0));
    double s = 0.0;
    for (double v : x->value.data()) {
        s += v * v;
    }
    return make_node(Tensor::scalar(s / n), "mean_squared_norm", {x}, [n](Node& self) {
        accumulate(self.parents[0], self.parents[0]->value, 2.0 * self.grad[0] / n);
    });
}

Var fully_connected(const Var& input, const Var& weight, const Var& bias) {
    const auto& xs = input->shape();
    const auto& ws = weight->shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) {
        throw std::invalid_argument("fully_connected: input " + shape_string(xs) + " incompatible with weight " +
                                    shape_string(ws));
    }
    const auto n = static_cast<Eigen::Index>(xs[0]);
    const auto d = static_cast<Eigen::Index>(xs[1]);
    const auto m = static_cast<Eigen::Index>(ws[1]);
    if (bias && bias->value.size() != ws[1]) {
        throw std::invalid_argument("fully_connected: bias length " + std::to_string(bias->value.size()) +
                                    " != " + std::to_string(ws[1]));
    }
    Tensor out({xs[0], ws[1]});
    auto y = detail::mat(out.data().data(), n, m);
    y.noalias() = detail::mat(input->value.data().data(), n, d) * detail::mat(weight->value.data().data(), d, m);
    if (bias) {
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < m; ++c) {
                y(r, c) += bias->value[static_cast<std::size_t>(c)];
            }
        }
    }
    std::vector<Var> parents{input, weight};
    if (bias) {
        parents.push_back(bias);
    }
    return make_node(std::move(out), "fully_connected", std::move(parents), [n, d, m](Node& self) {
        const auto& x = self.parents[0];
        const auto& w = self.parents[1];
        auto g = detail::mat(self.grad.data().data(), n, m);
        if (x->requires_grad) {
            detail::RowMat dx = g * detail::mat(w->value.data().data(), d, m).transpose();
            detail::mat(x->grad_buffer().data().data(), n, d) += dx;
        }
        if (w->requires_grad) {
            detail::RowMat dw = detail::mat(x->value.data().data(), n, d).transpose() * g;
            detail::mat(w->grad_buffer().data().data(), d, m) += dw;
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& db = self.parents[2]->grad_buffer();
            for (Eigen::Index r = 0; r < n; ++r) {
                for (Eigen::Index c = 0; c < m; ++c) {
                    db[static_cast<std::size_t>(c)] += g(r, c);
                }
            }
        }
    });
}

Var l2_normalize(const Var& input, double eps) {
    const auto& s = input->shape();
    if (s.size() != 2) {
        throw std::invalid_argument("l2_normalize: expected [N,D], got " + shape_string(s));
    }
    const std::size_t n = s[0];
    const std::size_t d = s[1];
    std::vector<double> norms(n);
    Tensor out(s);
    for (std::size_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double v = input->value[r * d + c];
            acc += v * v;
        }
        norms[r] = std::sqrt(acc);
        if (!(norms[r] >= eps)) {
            throw std::domain_error("l2_normalize: row " + std::to_string(r) + " has norm " +
                                    std::to_string(norms[r]) + " below eps; a zero feature has no direction");
        }
        for (std::size_t c = 0; c < d; ++c) {
            out[r * d + c] = input->value[r * d + c] / norms[r];
        }
    }
    return make_node(std::move(out), "l2_normalize", {input}, [n, d, norms](Node& self) {
        auto& x = self.parents[0];
        if (!x->requires_grad) {
            return;
        }
        auto& gx = x->grad_buffer();
        for (std::size_t r = 0; r < n; ++r) {
            double gy = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                gy += self.grad[r * d + c] * self.value[r * d + c];
            }
            for (std::size_t c = 0; c < d; ++c) {
                gx[r * d + c] += (self.grad[r * d + c] - gy * self.value[r * d + c]) / norms[r];
            }
        }
    });
}

}  // namespace ops
}  // namespace sicnn
