#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "sora/tensor.hpp"

// Differentiable op set. Conventions:
//   - storage is the tensor scalar type R; reductions, matmul inner products
//     and normalization statistics accumulate in double
//   - elementwise binary ops require identical shapes; any broadcasting is
//     explicit through broadcast_to
//   - every op validates its output for NaN/Inf unless finite checks are off

namespace sora {

namespace detail {

template <class R>
TensorT<R> make_op(const char* name, Shape shape, std::vector<R> value,
                   std::vector<NodePtr<R>> parents,
                   std::function<void(NodeT<R>&)> backprop) {
    auto node = std::make_shared<NodeT<R>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = name;
    if (grad_enabled()) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p->requires_grad;
        if (rg) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backprop = std::move(backprop);
        }
    }
    auto t = TensorT<R>::adopt(std::move(node));
    t.check_finite(name);
    return t;
}

template <class R>
void require_same_shape(const char* op, const TensorT<R>& a, const TensorT<R>& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class R, class FwdFn, class BwdFn>
TensorT<R> binary_elementwise(const char* name, const TensorT<R>& a, const TensorT<R>& b,
                              FwdFn fwd, BwdFn bwd) {
    detail::require_same_shape(name, a, b);
    std::size_t n = a.numel();
    std::vector<R> out(n);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    return detail::make_op<R>(
        name, a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
        [bwd](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            NodeT<R>* pb = node.parents[1].get();
            for (std::size_t i = 0; i < node.numel(); ++i) {
                auto [da, db] = bwd(pa->value[i], pb->value[i], node.value[i]);
                if (pa->requires_grad) pa->grad[i] += node.grad[i] * da;
                if (pb->requires_grad) pb->grad[i] += node.grad[i] * db;
            }
        });
}

template <class R>
TensorT<R> add(const TensorT<R>& a, const TensorT<R>& b) {
    return binary_elementwise<R>(
        "add", a, b, [](R x, R y) { return x + y; },
        [](R, R, R) { return std::pair<R, R>(R(1), R(1)); });
}

template <class R>
TensorT<R> sub(const TensorT<R>& a, const TensorT<R>& b) {
    return binary_elementwise<R>(
        "sub", a, b, [](R x, R y) { return x - y; },
        [](R, R, R) { return std::pair<R, R>(R(1), R(-1)); });
}

template <class R>
TensorT<R> mul(const TensorT<R>& a, const TensorT<R>& b) {
    return binary_elementwise<R>(
        "mul", a, b, [](R x, R y) { return x * y; },
        [](R x, R y, R) { return std::pair<R, R>(y, x); });
}

template <class R>
TensorT<R> div(const TensorT<R>& a, const TensorT<R>& b) {
    return binary_elementwise<R>(
        "div", a, b, [](R x, R y) { return x / y; },
        [](R x, R y, R) { return std::pair<R, R>(R(1) / y, -x / (y * y)); });
}

template <class R, class FwdFn, class BwdFn>
TensorT<R> unary_elementwise(const char* name, const TensorT<R>& a, FwdFn fwd, BwdFn bwd) {
    std::size_t n = a.numel();
    std::vector<R> out(n);
    auto av = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
    return detail::make_op<R>(
        name, a.shape(), std::move(out), {a.node_ptr()},
        [bwd](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t i = 0; i < node.numel(); ++i)
                pa->grad[i] += node.grad[i] * bwd(pa->value[i], node.value[i]);
        });
}

template <class R>
TensorT<R> neg(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "neg", a, [](R x) { return -x; }, [](R, R) { return R(-1); });
}

template <class R>
TensorT<R> add_scalar(const TensorT<R>& a, double c) {
    R rc = static_cast<R>(c);
    return unary_elementwise<R>(
        "add_scalar", a, [rc](R x) { return x + rc; }, [](R, R) { return R(1); });
}

template <class R>
TensorT<R> mul_scalar(const TensorT<R>& a, double c) {
    R rc = static_cast<R>(c);
    return unary_elementwise<R>(
        "mul_scalar", a, [rc](R x) { return x * rc; }, [rc](R, R) { return rc; });
}

template <class R>
TensorT<R> exp(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "exp", a, [](R x) { return static_cast<R>(std::exp(static_cast<double>(x))); },
        [](R, R y) { return y; });
}

template <class R>
TensorT<R> log(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "log", a, [](R x) { return static_cast<R>(std::log(static_cast<double>(x))); },
        [](R x, R) { return R(1) / x; });
}

template <class R>
TensorT<R> sqrt(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "sqrt", a, [](R x) { return static_cast<R>(std::sqrt(static_cast<double>(x))); },
        [](R, R y) { return static_cast<R>(0.5 / static_cast<double>(y)); });
}

template <class R>
TensorT<R> square(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "square", a, [](R x) { return x * x; }, [](R x, R) { return R(2) * x; });
}

template <class R>
TensorT<R> sigmoid(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "sigmoid", a,
        [](R x) { return static_cast<R>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); },
        [](R, R y) { return y * (R(1) - y); });
}

template <class R>
TensorT<R> silu(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "silu", a,
        [](R x) {
            double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
            return static_cast<R>(static_cast<double>(x) * s);
        },
        [](R x, R) {
            double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
            return static_cast<R>(s * (1.0 + static_cast<double>(x) * (1.0 - s)));
        });
}

template <class R>
TensorT<R> gelu(const TensorT<R>& a) {
    static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    static constexpr double c = 0.044715;
    return unary_elementwise<R>(
        "gelu", a,
        [](R xr) {
            double x = static_cast<double>(xr);
            return static_cast<R>(0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))));
        },
        [](R xr, R) {
            double x = static_cast<double>(xr);
            double u = k * (x + c * x * x * x);
            double t = std::tanh(u);
            double du = k * (1.0 + 3.0 * c * x * x);
            return static_cast<R>(0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
        });
}

template <class R>
TensorT<R> tanh(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "tanh", a, [](R x) { return static_cast<R>(std::tanh(static_cast<double>(x))); },
        [](R, R y) { return R(1) - y * y; });
}

template <class R>
TensorT<R> relu(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "relu", a, [](R x) { return x > R(0) ? x : R(0); },
        [](R x, R) { return x > R(0) ? R(1) : R(0); });
}

// Clamp to [0,1]; subgradient passes through on the closed interval.
template <class R>
TensorT<R> clamp01(const TensorT<R>& a) {
    return unary_elementwise<R>(
        "clamp01", a, [](R x) { return std::clamp(x, R(0), R(1)); },
        [](R x, R) { return (x >= R(0) && x <= R(1)) ? R(1) : R(0); });
}

// ------------------------------------------------------------------ movement

template <class R>
TensorT<R> reshape(const TensorT<R>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: element count mismatch " + shape_str(a.shape()) +
                             " -> " + shape_str(shape));
    std::vector<R> out(a.data().begin(), a.data().end());
    return detail::make_op<R>(
        "reshape", std::move(shape), std::move(out), {a.node_ptr()}, [](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t i = 0; i < node.numel(); ++i) pa->grad[i] += node.grad[i];
        });
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[static_cast<std::size_t>(i)] =
            st[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(s[static_cast<std::size_t>(i) + 1]);
    return st;
}

}  // namespace detail

template <class R>
TensorT<R> permute(const TensorT<R>& a, const std::vector<int>& perm) {
    int nd = a.ndim();
    if (static_cast<int>(perm.size()) != nd) throw DimensionError("permute: rank mismatch");
    std::vector<bool> used(static_cast<std::size_t>(nd), false);
    Shape out_shape(static_cast<std::size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        int p = perm[static_cast<std::size_t>(i)];
        if (p < 0 || p >= nd || used[static_cast<std::size_t>(p)])
            throw DimensionError("permute: invalid permutation");
        used[static_cast<std::size_t>(p)] = true;
        out_shape[static_cast<std::size_t>(i)] = a.shape()[static_cast<std::size_t>(p)];
    }
    auto in_strides = detail::row_major_strides(a.shape());
    auto out_strides = detail::row_major_strides(out_shape);
    std::size_t n = a.numel();
    std::vector<R> out(n);
    auto av = a.data();
    auto map_index = [nd, perm, in_strides, out_strides](std::size_t oi) {
        std::size_t ii = 0;
        for (int d = 0; d < nd; ++d) {
            std::size_t coord = oi / out_strides[static_cast<std::size_t>(d)];
            oi %= out_strides[static_cast<std::size_t>(d)];
            ii += coord * in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];
        }
        return ii;
    };
    for (std::size_t i = 0; i < n; ++i) out[i] = av[map_index(i)];
    return detail::make_op<R>(
        "permute", std::move(out_shape), std::move(out), {a.node_ptr()},
        [map_index](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t i = 0; i < node.numel(); ++i) pa->grad[map_index(i)] += node.grad[i];
        });
}

template <class R>
TensorT<R> slice(const TensorT<R>& a, int axis, int start, int len) {
    int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw DimensionError("slice: axis out of range");
    int d = a.shape()[static_cast<std::size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > d)
        throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") exceeds dim " + std::to_string(d));
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < nd; ++i) inner *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    std::size_t n_out = outer * static_cast<std::size_t>(len) * inner;
    std::vector<R> out(n_out);
    auto av = a.data();
    std::size_t src_axis = static_cast<std::size_t>(d);
    std::size_t ulen = static_cast<std::size_t>(len), ustart = static_cast<std::size_t>(start);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < ulen; ++j)
            std::copy_n(av.data() + (o * src_axis + ustart + j) * inner, inner,
                        out.data() + (o * ulen + j) * inner);
    return detail::make_op<R>(
        "slice", std::move(out_shape), std::move(out), {a.node_ptr()},
        [outer, inner, ulen, ustart, src_axis](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < ulen; ++j) {
                    const R* g = node.grad.data() + (o * ulen + j) * inner;
                    R* dst = pa->grad.data() + (o * src_axis + ustart + j) * inner;
                    for (std::size_t k = 0; k < inner; ++k) dst[k] += g[k];
                }
        });
}

template <class R>
TensorT<R> concat(const std::vector<TensorT<R>>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    int nd = parts[0].ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw DimensionError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    int total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) throw DimensionError("concat: rank mismatch");
        for (int i = 0; i < nd; ++i)
            if (i != axis && p.shape()[static_cast<std::size_t>(i)] != out_shape[static_cast<std::size_t>(i)])
                throw DimensionError("concat: shape mismatch on non-concat axis");
        total += p.shape()[static_cast<std::size_t>(axis)];
    }
    out_shape[static_cast<std::size_t>(axis)] = total;
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(out_shape[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < nd; ++i) inner *= static_cast<std::size_t>(out_shape[static_cast<std::size_t>(i)]);
    std::vector<R> out(shape_numel(out_shape));
    std::vector<std::size_t> axis_sizes;
    std::vector<NodePtr<R>> parents;
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t alen = static_cast<std::size_t>(p.shape()[static_cast<std::size_t>(axis)]);
        auto pv = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(pv.data() + o * alen * inner, alen * inner,
                        out.data() + (o * static_cast<std::size_t>(total) + off) * inner);
        axis_sizes.push_back(alen);
        parents.push_back(p.node_ptr());
        off += alen;
    }
    std::size_t utotal = static_cast<std::size_t>(total);
    return detail::make_op<R>(
        "concat", std::move(out_shape), std::move(out), std::move(parents),
        [outer, inner, utotal, axis_sizes](NodeT<R>& node) {
            std::size_t off = 0;
            for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
                NodeT<R>* pa = node.parents[pi].get();
                std::size_t alen = axis_sizes[pi];
                if (pa->requires_grad) {
                    for (std::size_t o = 0; o < outer; ++o) {
                        const R* g = node.grad.data() + (o * utotal + off) * inner;
                        R* dst = pa->grad.data() + o * alen * inner;
                        for (std::size_t k = 0; k < alen * inner; ++k) dst[k] += g[k];
                    }
                }
                off += alen;
            }
        });
}

template <class R>
TensorT<R> pad_axis(const TensorT<R>& a, int axis, int before, int after) {
    int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw DimensionError("pad_axis: axis out of range");
    if (before < 0 || after < 0) throw DimensionError("pad_axis: negative padding");
    Shape out_shape = a.shape();
    int d = out_shape[static_cast<std::size_t>(axis)];
    out_shape[static_cast<std::size_t>(axis)] = d + before + after;
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < nd; ++i) inner *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    std::size_t ud = static_cast<std::size_t>(d), ub = static_cast<std::size_t>(before);
    std::size_t od = static_cast<std::size_t>(d + before + after);
    std::vector<R> out(outer * od * inner, R(0));
    auto av = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(av.data() + o * ud * inner, ud * inner, out.data() + (o * od + ub) * inner);
    return detail::make_op<R>(
        "pad_axis", std::move(out_shape), std::move(out), {a.node_ptr()},
        [outer, inner, ud, ub, od](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t o = 0; o < outer; ++o) {
                const R* g = node.grad.data() + (o * od + ub) * inner;
                R* dst = pa->grad.data() + o * ud * inner;
                for (std::size_t k = 0; k < ud * inner; ++k) dst[k] += g[k];
            }
        });
}

// Explicit broadcast: prepend missing leading axes and expand size-1 axes.
// This is the only broadcasting mechanism in the library.
template <class R>
TensorT<R> broadcast_to(const TensorT<R>& a, Shape target) {
    int nd_in = a.ndim();
    int nd_out = static_cast<int>(target.size());
    if (nd_in > nd_out)
        throw DimensionError("broadcast_to: rank of " + shape_str(a.shape()) +
                             " exceeds target " + shape_str(target));
    Shape padded(static_cast<std::size_t>(nd_out), 1);
    for (int i = 0; i < nd_in; ++i)
        padded[static_cast<std::size_t>(nd_out - nd_in + i)] = a.shape()[static_cast<std::size_t>(i)];
    for (int i = 0; i < nd_out; ++i) {
        int s = padded[static_cast<std::size_t>(i)];
        int t = target[static_cast<std::size_t>(i)];
        if (s != t && s != 1)
            throw DimensionError("broadcast_to: cannot expand " + shape_str(a.shape()) +
                                 " to " + shape_str(target));
    }
    auto out_strides = detail::row_major_strides(target);
    auto in_strides = detail::row_major_strides(padded);
    for (int i = 0; i < nd_out; ++i)
        if (padded[static_cast<std::size_t>(i)] == 1 && target[static_cast<std::size_t>(i)] != 1)
            in_strides[static_cast<std::size_t>(i)] = 0;
    std::size_t n = shape_numel(target);
    std::vector<R> out(n);
    auto av = a.data();
    auto map_index = [nd_out, out_strides, in_strides](std::size_t oi) {
        std::size_t ii = 0;
        for (int d = 0; d < nd_out; ++d) {
            std::size_t coord = oi / out_strides[static_cast<std::size_t>(d)];
            oi %= out_strides[static_cast<std::size_t>(d)];
            ii += coord * in_strides[static_cast<std::size_t>(d)];
        }
        return ii;
    };
    for (std::size_t i = 0; i < n; ++i) out[i] = av[map_index(i)];
    return detail::make_op<R>(
        "broadcast_to", std::move(target), std::move(out), {a.node_ptr()},
        [map_index](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t i = 0; i < node.numel(); ++i) pa->grad[map_index(i)] += node.grad[i];
        });
}

// ---------------------------------------------------------------- reductions

template <class R>
TensorT<R> sum_all(const TensorT<R>& a) {
    double acc = 0.0;
    for (R v : a.data()) acc += static_cast<double>(v);
    return detail::make_op<R>(
        "sum_all", {1}, {static_cast<R>(acc)}, {a.node_ptr()}, [](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += node.grad[0];
        });
}

template <class R>
TensorT<R> mean_all(const TensorT<R>& a) {
    double inv = 1.0 / static_cast<double>(a.numel());
    return mul_scalar(sum_all(a), inv);
}

template <class R>
TensorT<R> sum_axis(const TensorT<R>& a, int axis, bool keepdim = false) {
    int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw DimensionError("sum_axis: axis out of range");
    std::size_t outer = 1, inner = 1;
    std::size_t d = static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(axis)]);
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < nd; ++i) inner *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    Shape out_shape;
    for (int i = 0; i < nd; ++i) {
        if (i == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(a.shape()[static_cast<std::size_t>(i)]);
        }
    }
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<R> out(outer * inner);
    auto av = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < inner; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                acc += static_cast<double>(av[(o * d + j) * inner + k]);
            out[o * inner + k] = static_cast<R>(acc);
        }
    return detail::make_op<R>(
        "sum_axis", std::move(out_shape), std::move(out), {a.node_ptr()},
        [outer, inner, d](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < d; ++j)
                    for (std::size_t k = 0; k < inner; ++k)
                        pa->grad[(o * d + j) * inner + k] += node.grad[o * inner + k];
        });
}

// ------------------------------------------------------------ linear algebra

template <class R>
TensorT<R> matmul(const TensorT<R>& a, const TensorT<R>& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw DimensionError("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    int m = a.shape()[0], k = a.shape()[1];
    int k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul: inner dims differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<R> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    auto av = a.data();
    auto bv = b.data();
    std::size_t um = static_cast<std::size_t>(m), uk = static_cast<std::size_t>(k),
                un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i < um; ++i)
        for (std::size_t j = 0; j < un; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < uk; ++p)
                acc += static_cast<double>(av[i * uk + p]) * static_cast<double>(bv[p * un + j]);
            out[i * un + j] = static_cast<R>(acc);
        }
    return detail::make_op<R>(
        "matmul", {m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
        [um, uk, un](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            NodeT<R>* pb = node.parents[1].get();
            if (pa->requires_grad) {
                // dA = G * B^T
                for (std::size_t i = 0; i < um; ++i)
                    for (std::size_t p = 0; p < uk; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < un; ++j)
                            acc += static_cast<double>(node.grad[i * un + j]) *
                                   static_cast<double>(pb->value[p * un + j]);
                        pa->grad[i * uk + p] += static_cast<R>(acc);
                    }
            }
            if (pb->requires_grad) {
                // dB = A^T * G
                for (std::size_t p = 0; p < uk; ++p)
                    for (std::size_t j = 0; j < un; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < um; ++i)
                            acc += static_cast<double>(pa->value[i * uk + p]) *
                                   static_cast<double>(node.grad[i * un + j]);
                        pb->grad[p * un + j] += static_cast<R>(acc);
                    }
            }
        });
}

// ------------------------------------------------------------- normalization

// Numerically stable softmax along `axis` (max subtraction, double
// accumulation of the partition sum).
template <class R>
TensorT<R> softmax(const TensorT<R>& a, int axis) {
    int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw DimensionError("softmax: axis out of range");
    std::size_t outer = 1, inner = 1;
    std::size_t d = static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(axis)]);
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < nd; ++i) inner *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
    std::vector<R> out(a.numel());
    auto av = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < inner; ++k) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < d; ++j)
                mx = std::max(mx, static_cast<double>(av[(o * d + j) * inner + k]));
            double denom = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                denom += std::exp(static_cast<double>(av[(o * d + j) * inner + k]) - mx);
            for (std::size_t j = 0; j < d; ++j)
                out[(o * d + j) * inner + k] = static_cast<R>(
                    std::exp(static_cast<double>(av[(o * d + j) * inner + k]) - mx) / denom);
        }
    return detail::make_op<R>(
        "softmax", a.shape(), std::move(out), {a.node_ptr()},
        [outer, inner, d](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < inner; ++k) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        std::size_t idx = (o * d + j) * inner + k;
                        dot += static_cast<double>(node.grad[idx]) * static_cast<double>(node.value[idx]);
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        std::size_t idx = (o * d + j) * inner + k;
                        pa->grad[idx] += static_cast<R>(
                            static_cast<double>(node.value[idx]) *
                            (static_cast<double>(node.grad[idx]) - dot));
                    }
                }
        });
}

// Layer normalization over the last axis; gamma/beta are vectors of that
// axis length. Statistics use population variance with double accumulation.
template <class R>
TensorT<R> layer_norm(const TensorT<R>& x, const TensorT<R>& gamma, const TensorT<R>& beta,
                      double eps) {
    if (eps <= 0.0) throw DomainError("layer_norm: eps must be positive");
    int nd = x.ndim();
    std::size_t L = static_cast<std::size_t>(x.shape()[static_cast<std::size_t>(nd - 1)]);
    if (gamma.numel() != L || beta.numel() != L)
        throw DimensionError("layer_norm: gamma/beta length must equal last axis");
    std::size_t rows = x.numel() / L;
    std::vector<R> out(x.numel());
    std::vector<double> mean(rows), inv_std(rows);
    auto xv = x.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double m = 0.0;
        for (std::size_t i = 0; i < L; ++i) m += static_cast<double>(xv[r * L + i]);
        m /= static_cast<double>(L);
        double var = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            double dv = static_cast<double>(xv[r * L + i]) - m;
            var += dv * dv;
        }
        var /= static_cast<double>(L);
        double inv = 1.0 / std::sqrt(var + eps);
        mean[r] = m;
        inv_std[r] = inv;
        for (std::size_t i = 0; i < L; ++i) {
            double xh = (static_cast<double>(xv[r * L + i]) - m) * inv;
            out[r * L + i] = static_cast<R>(xh * static_cast<double>(gv[i]) + static_cast<double>(bv[i]));
        }
    }
    return detail::make_op<R>(
        "layer_norm", x.shape(), std::move(out),
        {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
        [rows, L, mean, inv_std](NodeT<R>& node) {
            NodeT<R>* px = node.parents[0].get();
            NodeT<R>* pg = node.parents[1].get();
            NodeT<R>* pb = node.parents[2].get();
            for (std::size_t r = 0; r < rows; ++r) {
                double m = mean[r], inv = inv_std[r];
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (std::size_t i = 0; i < L; ++i) {
                    std::size_t idx = r * L + i;
                    double xh = (static_cast<double>(px->value[idx]) - m) * inv;
                    double dxh = static_cast<double>(node.grad[idx]) *
                                 static_cast<double>(pg->value[i]);
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                    if (pg->requires_grad)
                        pg->grad[i] += static_cast<R>(static_cast<double>(node.grad[idx]) * xh);
                    if (pb->requires_grad)
                        pb->grad[i] += static_cast<R>(static_cast<double>(node.grad[idx]));
                }
                if (px->requires_grad) {
                    double invL = 1.0 / static_cast<double>(L);
                    for (std::size_t i = 0; i < L; ++i) {
                        std::size_t idx = r * L + i;
                        double xh = (static_cast<double>(px->value[idx]) - m) * inv;
                        double dxh = static_cast<double>(node.grad[idx]) *
                                     static_cast<double>(pg->value[i]);
                        px->grad[idx] += static_cast<R>(
                            inv * (dxh - invL * sum_dxh - xh * invL * sum_dxh_xh));
                    }
                }
            }
        });
}

// ----------------------------------------------------------- video patching

// [A, H, W, C] -> [A, (H/p)*(W/p), p*p*C]; inverse of unpatchify.
template <class R>
TensorT<R> patchify(const TensorT<R>& x, int p) {
    if (x.ndim() != 4) throw DimensionError("patchify: expects rank-4 [A,H,W,C]");
    int A = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3];
    if (p <= 0 || H % p != 0 || W % p != 0)
        throw GeometryError("patchify: H and W must be divisible by patch size " + std::to_string(p));
    int gh = H / p, gw = W / p;
    Shape out_shape{A, gh * gw, p * p * C};
    std::vector<R> out(x.numel());
    auto xv = x.data();
    auto fill = [A, H, W, C, p, gh, gw](auto&& src, auto&& dst, bool fwd) {
        std::size_t uW = static_cast<std::size_t>(W), uC = static_cast<std::size_t>(C);
        std::size_t patch_len = static_cast<std::size_t>(p * p * C);
        std::size_t frame_in = static_cast<std::size_t>(H) * uW * uC;
        std::size_t frame_out = static_cast<std::size_t>(gh * gw) * patch_len;
        for (int a = 0; a < A; ++a)
            for (int gy = 0; gy < gh; ++gy)
                for (int gx = 0; gx < gw; ++gx)
                    for (int py = 0; py < p; ++py)
                        for (int px = 0; px < p; ++px)
                            for (int c = 0; c < C; ++c) {
                                std::size_t in_idx =
                                    static_cast<std::size_t>(a) * frame_in +
                                    (static_cast<std::size_t>(gy * p + py) * uW +
                                     static_cast<std::size_t>(gx * p + px)) * uC +
                                    static_cast<std::size_t>(c);
                                std::size_t out_idx =
                                    static_cast<std::size_t>(a) * frame_out +
                                    static_cast<std::size_t>(gy * gw + gx) * patch_len +
                                    static_cast<std::size_t>((py * p + px) * C + c);
                                if (fwd)
                                    dst[out_idx] = src[in_idx];
                                else
                                    dst[in_idx] += src[out_idx];
                            }
    };
    fill(xv, out, true);
    return detail::make_op<R>(
        "patchify", std::move(out_shape), std::move(out), {x.node_ptr()},
        [fill](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            fill(node.grad, pa->grad, false);
        });
}

// [A, gh*gw, p*p*C] -> [A, gh*p, gw*p, C]
template <class R>
TensorT<R> unpatchify(const TensorT<R>& x, int gh, int gw, int p, int C) {
    if (x.ndim() != 3) throw DimensionError("unpatchify: expects rank-3 [A,S,P]");
    int A = x.shape()[0];
    if (x.shape()[1] != gh * gw || x.shape()[2] != p * p * C)
        throw DimensionError("unpatchify: token grid does not match geometry");
    Shape out_shape{A, gh * p, gw * p, C};
    std::vector<R> out(x.numel());
    auto xv = x.data();
    int W = gw * p;
    auto fill = [A, W, C, p, gh, gw](auto&& src, auto&& dst, bool fwd) {
        std::size_t uW = static_cast<std::size_t>(W), uC = static_cast<std::size_t>(C);
        std::size_t patch_len = static_cast<std::size_t>(p * p * C);
        std::size_t frame_px = static_cast<std::size_t>(gh * p) * uW * uC;
        std::size_t frame_tok = static_cast<std::size_t>(gh * gw) * patch_len;
        for (int a = 0; a < A; ++a)
            for (int gy = 0; gy < gh; ++gy)
                for (int gx = 0; gx < gw; ++gx)
                    for (int py = 0; py < p; ++py)
                        for (int px = 0; px < p; ++px)
                            for (int c = 0; c < C; ++c) {
                                std::size_t tok_idx =
                                    static_cast<std::size_t>(a) * frame_tok +
                                    static_cast<std::size_t>(gy * gw + gx) * patch_len +
                                    static_cast<std::size_t>((py * p + px) * C + c);
                                std::size_t px_idx =
                                    static_cast<std::size_t>(a) * frame_px +
                                    (static_cast<std::size_t>(gy * p + py) * uW +
                                     static_cast<std::size_t>(gx * p + px)) * uC +
                                    static_cast<std::size_t>(c);
                                if (fwd)
                                    dst[px_idx] = src[tok_idx];
                                else
                                    dst[tok_idx] += src[px_idx];
                            }
    };
    fill(xv, out, true);
    return detail::make_op<R>(
        "unpatchify", std::move(out_shape), std::move(out), {x.node_ptr()},
        [fill](NodeT<R>& node) {
            NodeT<R>* pa = node.parents[0].get();
            if (!pa->requires_grad) return;
            fill(node.grad, pa->grad, false);
        });
}

// ----------------------------------------------------------------- composite

template <class R>
TensorT<R> mse(const TensorT<R>& a, const TensorT<R>& b) {
    return mean_all(square(sub(a, b)));
}

// x [N, D] times weight [D, M] plus bias [M].
template <class R>
TensorT<R> linear(const TensorT<R>& x, const TensorT<R>& w, const TensorT<R>& b) {
    auto y = matmul(x, w);
    return add(y, broadcast_to(b, y.shape()));
}

}  // namespace sora
