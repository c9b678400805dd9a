#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "calica/common.hpp"

namespace calica::nn {

/// Scoped switch that disables graph construction (validation / inference).
class GradGuard {
public:
    GradGuard() : previous_(enabled()) { enabled() = false; }
    ~GradGuard() { enabled() = previous_; }
    GradGuard(const GradGuard&) = delete;
    GradGuard& operator=(const GradGuard&) = delete;

    static bool& enabled() {
        thread_local bool flag = true;
        return flag;
    }

private:
    bool previous_;
};

template <class T>
struct TensorNode {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;          // sized iff needs_grad
    bool requires_grad = false;   // leaf parameter
    bool needs_grad = false;      // participates in backward
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_step;
};

/// Value-semantics handle to a shared autograd node. Shapes are row-major.
/// Values are treated as immutable once the tensor feeds an operation;
/// parameters mutate only through optimizer updates.
template <class T>
class TensorT {
public:
    using Node = TensorNode<T>;

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape) {
        return filled(std::move(shape), T(0));
    }

    static TensorT filled(std::vector<int> shape, T v) {
        auto n = std::make_shared<Node>();
        size_t count = checked_numel(shape);
        n->shape = std::move(shape);
        n->value.assign(count, v);
        return TensorT(std::move(n));
    }

    static TensorT from_values(std::vector<int> shape, std::vector<T> values) {
        if (checked_numel(shape) != values.size())
            throw UserError("tensor: value count does not match shape");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(values);
        return TensorT(std::move(n));
    }

    static TensorT scalar(T v) { return from_values({1}, {v}); }

    /// Trainable leaf: gradient buffer allocated, accumulates across
    /// backward passes until zero_grad().
    static TensorT parameter(std::vector<int> shape, std::vector<T> values) {
        TensorT t = from_values(std::move(shape), std::move(values));
        t.n_->requires_grad = true;
        t.n_->needs_grad = true;
        t.n_->grad.assign(t.n_->value.size(), T(0));
        return t;
    }

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape.at(static_cast<size_t>(i)); }
    size_t numel() const { return n_->value.size(); }

    std::vector<T>& values() { return n_->value; }
    const std::vector<T>& values() const { return n_->value; }
    const std::vector<T>& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }
    bool needs_grad() const { return n_->needs_grad; }

    void set_requires_grad(bool on) {
        n_->requires_grad = on;
        n_->needs_grad = on;
        if (on)
            n_->grad.assign(n_->value.size(), T(0));
        else
            n_->grad.clear();
    }

    void zero_grad() {
        if (n_->needs_grad) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw UserError("item() on non-scalar tensor");
        return n_->value[0];
    }

    /// Reverse-mode accumulation from a scalar output. Gradients add into
    /// existing buffers; parameters keep accumulating until zero_grad().
    void backward() {
        if (numel() != 1) throw UserError("backward() requires a scalar output");
        if (!n_->needs_grad) return;
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        topo(n_.get(), seen, order);
        // Transient (non-leaf) grads start from zero for this pass.
        for (Node* node : order)
            if (!node->requires_grad)
                node->grad.assign(node->value.size(), T(0));
        n_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward_step) (*it)->backward_step(**it);
    }

    std::shared_ptr<Node> node() const { return n_; }

    /// Graph-building helper used by every operation: output needs a grad
    /// buffer iff grads are enabled and any input participates.
    static TensorT make_op(std::vector<int> shape, std::vector<T> value,
                           std::vector<TensorT> inputs,
                           std::function<void(Node&)> backward_step) {
        TensorT out = from_values(std::move(shape), std::move(value));
        bool needs = false;
        if (GradGuard::enabled())
            for (const TensorT& in : inputs)
                if (in.defined() && in.n_->needs_grad) needs = true;
        if (needs) {
            out.n_->needs_grad = true;
            out.n_->grad.assign(out.n_->value.size(), T(0));
            out.n_->parents.reserve(inputs.size());
            for (TensorT& in : inputs) out.n_->parents.push_back(in.n_);
            out.n_->backward_step = std::move(backward_step);
        }
        return out;
    }

private:
    explicit TensorT(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static size_t checked_numel(const std::vector<int>& shape) {
        if (shape.empty()) throw UserError("tensor: empty shape");
        size_t count = 1;
        for (int d : shape) {
            if (d <= 0) throw UserError("tensor: non-positive dimension");
            count *= static_cast<size_t>(d);
        }
        return count;
    }

    static void topo(Node* node, std::unordered_set<Node*>& seen,
                     std::vector<Node*>& order) {
        // Iterative post-order DFS; graphs can be deep for long chains.
        struct Frame {
            Node* node;
            size_t next_parent;
        };
        std::vector<Frame> stack{{node, 0}};
        seen.insert(node);
        while (!stack.empty()) {
            Frame& top = stack.back();
            if (top.next_parent < top.node->parents.size()) {
                Node* parent = top.node->parents[top.next_parent++].get();
                if (parent->needs_grad && !seen.count(parent)) {
                    seen.insert(parent);
                    stack.push_back({parent, 0});
                }
            } else {
                order.push_back(top.node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node> n_;
};

using Tensor = TensorT<float>;

template <class T>
struct NamedParam {
    std::string name;
    TensorT<T> tensor;
};

}  // namespace calica::nn
