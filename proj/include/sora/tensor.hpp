#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sora/error.hpp"
#include "sora/rng.hpp"

namespace sora {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw DimensionError("tensor dims must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool& finite_check_flag() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording in a scope (inference / numeric probes).
class NoGradGuard {
  public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

template <class R>
struct NodeT;

template <class R>
using NodePtr = std::shared_ptr<NodeT<R>>;

// One op record in the backward graph. Values are immutable once the node
// is published; grads are written only by backward() on a single thread.
template <class R>
struct NodeT {
    Shape shape;
    std::vector<R> value;
    std::vector<R> grad;
    bool requires_grad = false;
    std::vector<NodePtr<R>> parents;
    std::function<void(NodeT<R>&)> backprop;  // empty on leaves
    const char* op = "leaf";

    std::size_t numel() const { return value.size(); }
};

template <class R>
class TensorT {
  public:
    using Scalar = R;

    TensorT() = default;

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        return leaf(std::move(shape), {}, R(0), requires_grad);
    }

    static TensorT full(Shape shape, double v, bool requires_grad = false) {
        return leaf(std::move(shape), {}, static_cast<R>(v), requires_grad);
    }

    static TensorT scalar(double v) { return full({1}, v); }

    static TensorT from_data(Shape shape, std::vector<R> data, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        if (n != data.size())
            throw DimensionError("data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        auto node = std::make_shared<NodeT<R>>();
        node->shape = std::move(shape);
        node->value = std::move(data);
        node->requires_grad = requires_grad;
        TensorT t;
        t.node_ = std::move(node);
        t.check_finite("from_data");
        return t;
    }

    template <class S>
    static TensorT from_span(Shape shape, std::span<const S> data, bool requires_grad = false) {
        std::vector<R> v(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) v[i] = static_cast<R>(data[i]);
        return from_data(std::move(shape), std::move(v), requires_grad);
    }

    static TensorT randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        std::vector<R> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<R>(rng.normal() * stddev);
        return from_data(std::move(shape), std::move(v), requires_grad);
    }

    static TensorT uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        std::vector<R> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<R>(rng.uniform(lo, hi));
        return from_data(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const { return node_->shape; }

    int ndim() const { return static_cast<int>(node_->shape.size()); }

    int dim(int i) const {
        int nd = ndim();
        if (i < 0) i += nd;
        if (i < 0 || i >= nd) throw DimensionError("dim index out of range");
        return node_->shape[static_cast<std::size_t>(i)];
    }

    std::size_t numel() const { return node_->value.size(); }

    std::span<const R> data() const { return {node_->value.data(), node_->value.size()}; }

    bool requires_grad() const { return node_ && node_->requires_grad; }

    // Gradient from the most recent backward(); zeros if this leaf did not
    // participate in the graph.
    std::vector<R> grad() const {
        if (node_->grad.size() == numel()) return node_->grad;
        return std::vector<R>(numel(), R(0));
    }

    R item() const {
        if (numel() != 1) throw DimensionError("item() requires a single-element tensor");
        return node_->value[0];
    }

    R at(std::initializer_list<int> idx) const {
        if (static_cast<int>(idx.size()) != ndim()) throw DimensionError("at(): rank mismatch");
        std::size_t off = 0;
        int k = 0;
        for (int i : idx) {
            int d = node_->shape[static_cast<std::size_t>(k)];
            if (i < 0 || i >= d) throw DimensionError("at(): index out of range");
            off = off * static_cast<std::size_t>(d) + static_cast<std::size_t>(i);
            ++k;
        }
        return node_->value[off];
    }

    // Leaf copy of the values, detached from any graph.
    TensorT detached(bool requires_grad = false) const {
        return from_data(node_->shape, node_->value, requires_grad);
    }

    template <class R2>
    TensorT<R2> cast() const {
        std::vector<R2> v(numel());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<R2>(node_->value[i]);
        return TensorT<R2>::from_data(node_->shape, std::move(v));
    }

    NodeT<R>* node() const { return node_.get(); }
    const NodePtr<R>& node_ptr() const { return node_; }

    static TensorT adopt(NodePtr<R> node) {
        TensorT t;
        t.node_ = std::move(node);
        return t;
    }

    void check_finite(const char* where) const {
        if (!detail::finite_check_flag()) return;
        for (R v : node_->value) {
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError(std::string("non-finite value produced by ") + where);
        }
    }

  private:
    static TensorT leaf(Shape shape, std::vector<R> data, R fill, bool requires_grad) {
        std::size_t n = shape_numel(shape);
        auto node = std::make_shared<NodeT<R>>();
        node->shape = std::move(shape);
        if (data.empty())
            node->value.assign(n, fill);
        else
            node->value = std::move(data);
        node->requires_grad = requires_grad;
        TensorT t;
        t.node_ = std::move(node);
        return t;
    }

    NodePtr<R> node_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

// Reverse-mode sweep from `root`. Topological order is derived once by
// depth-first search; each reachable node is visited exactly once and
// gradients are re-zeroed per call.
template <class R>
inline void backward(const TensorT<R>& root) {
    NodeT<R>* r = root.node();
    if (!r || !r->requires_grad) return;

    std::vector<NodeT<R>*> order;
    std::unordered_set<NodeT<R>*> seen;
    std::vector<std::pair<NodeT<R>*, std::size_t>> stack;
    stack.emplace_back(r, 0);
    seen.insert(r);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        bool descended = false;
        while (next < node->parents.size()) {
            NodeT<R>* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    for (NodeT<R>* n : order) n->grad.assign(n->numel(), R(0));
    r->grad.assign(r->numel(), R(1));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<R>* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace sora
