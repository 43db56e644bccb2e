#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "norface/errors.hpp"
#include "norface/rng.hpp"

namespace norface {

/// Shared ε used by layer_norm and every guarded division in the library.
inline constexpr double kEpsilon = 1e-8;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

struct ValueNode;
using NodePtr = std::shared_ptr<ValueNode>;

/// One node of the computation graph. `backward` accumulates this node's
/// adjoint into its parents' grad buffers.
struct ValueNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // same length as data iff requires_grad
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(ValueNode&)> backward;
};

/// Handle to a node in a differentiable computation graph. Copies share the
/// underlying node; graphs are freed when the last handle to the result drops.
class Value {
public:
    Value() = default;
    explicit Value(NodePtr n) : node_(std::move(n)) {}

    static Value constant(Shape shape, std::vector<double> data) {
        return make(std::move(shape), std::move(data), false);
    }

    static Value param(Shape shape, std::vector<double> data) {
        return make(std::move(shape), std::move(data), true);
    }

    static Value scalar(double v, bool requires_grad = false) {
        return make({1}, {v}, requires_grad);
    }

    static Value zeros(Shape shape, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    /// Gaussian-filled tensor drawn from `rng`, entries scaled by `scale`.
    static Value randn(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
        std::size_t n = shape_numel(shape);
        return make(std::move(shape), rng.normal_vector(n, scale), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rank() const { return node_->shape.size(); }
    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    const NodePtr& node() const { return node_; }

    /// Value of a single-element tensor.
    double item() const {
        if (size() != 1)
            throw DimensionError("item(): tensor has shape " + shape_str(shape()) +
                                 ", expected a scalar");
        return node_->data[0];
    }

    void zero_grad() {
        if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    /// Reverse-mode pass from a scalar loss. Seeds the loss adjoint with 1 and
    /// runs every reachable node's backward in reverse topological order, so
    /// nodes unreachable from the loss keep their (zero-initialized) grads.
    void backward() const {
        if (size() != 1)
            throw DimensionError("backward(): loss must be scalar, got " + shape_str(shape()));
        if (!node_->requires_grad) return;

        std::vector<ValueNode*> order = topo_order();
        node_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            ValueNode* n = *it;
            if (n->backward) n->backward(*n);
        }
    }

private:
    static Value make(Shape shape, std::vector<double> data, bool requires_grad) {
        if (shape_numel(shape) != data.size())
            throw DimensionError("value: shape " + shape_str(shape) + " does not match " +
                                 std::to_string(data.size()) + " elements");
        auto n = std::make_shared<ValueNode>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        if (requires_grad) n->grad.assign(n->data.size(), 0.0);
        return Value(std::move(n));
    }

    // Iterative post-order DFS; parents precede children in the result.
    std::vector<ValueNode*> topo_order() const {
        std::vector<ValueNode*> order;
        std::unordered_set<ValueNode*> visited;
        std::vector<std::pair<ValueNode*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                ValueNode* p = n->parents[idx++].get();
                if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        return order;
    }

    NodePtr node_;
};

namespace detail {

/// Result node of an op: requires grad iff any parent does.
inline Value make_result(Shape shape, std::vector<double> data,
                         std::vector<NodePtr> parents,
                         std::function<void(ValueNode&)> backward) {
    auto n = std::make_shared<ValueNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->grad.assign(n->data.size(), 0.0);
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return Value(std::move(n));
}

} // namespace detail

} // namespace norface
