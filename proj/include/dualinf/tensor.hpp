#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "dualinf/errors.hpp"
#include "dualinf/kernels.hpp"
#include "dualinf/rng.hpp"

// Dense row-major tensors on a reverse-mode tape. Ops build the tape as a
// DAG of shared nodes; backward() walks it in reverse topological order and
// accumulates gradients on every requires_grad ancestor. Gradients persist
// until zero_grad(), so alternating-phase optimization controls exactly
// which accumulated gradients an optimizer step consumes.

namespace dualinf {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

inline i64 numel_of(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), i64(1), std::multiplies<i64>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline Shape strides_of(const Shape& s) {
    Shape st(s.size(), 1);
    for (i64 i = static_cast<i64>(s.size()) - 2; i >= 0; --i)
        st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * s[static_cast<std::size_t>(i) + 1];
    return st;
}

// Row-major walk over `shape` maintaining two strided offsets.
template <class CB>
inline void iter2(const Shape& shape, const i64* sa, const i64* sb, CB cb) {
    const i64 rank = static_cast<i64>(shape.size());
    if (rank == 0) {
        cb(i64(0), i64(0));
        return;
    }
    std::vector<i64> idx(static_cast<std::size_t>(rank), 0);
    i64 offa = 0, offb = 0;
    for (;;) {
        cb(offa, offb);
        i64 d = rank - 1;
        for (; d >= 0; --d) {
            const auto du = static_cast<std::size_t>(d);
            ++idx[du];
            offa += sa[du];
            offb += sb[du];
            if (idx[du] < shape[du]) break;
            offa -= sa[du] * shape[du];
            offb -= sb[du] * shape[du];
            idx[du] = 0;
        }
        if (d < 0) break;
    }
}

template <typename T>
struct TapeNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // sized lazily, accumulates across backward() calls
    bool requires_grad = false;
    std::vector<std::shared_ptr<TapeNode>> parents;
    std::function<void(TapeNode&)> backprop;

    i64 numel() const { return static_cast<i64>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (numel_of(shape) != static_cast<i64>(data.size()))
            throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
        node_ = std::make_shared<TapeNode<T>>();
        node_->shape = std::move(shape);
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape s, bool requires_grad = false) {
        auto n = numel_of(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)), requires_grad);
    }
    static Tensor full(Shape s, T v, bool requires_grad = false) {
        auto n = numel_of(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), v), requires_grad);
    }
    static Tensor scalar(T v) { return Tensor({}, std::vector<T>{v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    i64 dim(std::size_t i) const { return node_->shape[i]; }
    i64 rank() const { return static_cast<i64>(node_->shape.size()); }
    i64 numel() const { return node_->numel(); }
    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }

    T item() const {
        if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
        return node_->value[0];
    }

    // Accumulated gradient (zeros if backward never reached this tensor).
    Tensor grad() const {
        std::vector<T> g = node_->grad;
        if (g.empty()) g.assign(node_->value.size(), T(0));
        return Tensor(node_->shape, std::move(g));
    }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    // Copy of the value outside the tape.
    Tensor detach() const { return Tensor(node_->shape, node_->value, false); }

    std::shared_ptr<TapeNode<T>>& node() { return node_; }
    const std::shared_ptr<TapeNode<T>>& node() const { return node_; }

private:
    std::shared_ptr<TapeNode<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<TapeNode<T>>> parents,
                      std::function<void(TapeNode<T>&)> backprop) {
    Tensor<T> out(std::move(shape), std::move(value));
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    out.node()->requires_grad = req;
    if (req) {
        out.node()->parents = std::move(parents);
        out.node()->backprop = std::move(backprop);
    }
    return out;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const i64 da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const i64 db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `s` aligned to a broadcast target of rank `rank`; broadcast
// dimensions get stride 0.
inline Shape aligned_strides(const Shape& s, const Shape& target) {
    const std::size_t rank = target.size();
    Shape st = strides_of(s);
    Shape out(rank, 0);
    const std::size_t off = rank - s.size();
    for (std::size_t i = 0; i < s.size(); ++i)
        out[off + i] = (s[i] == 1 && target[off + i] != 1) ? 0 : st[i];
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

// FwdFn: T(T x); GradFn: T(T x, T y) giving dy/dx.
template <typename T, class FwdFn, class GradFn>
Tensor<T> unary_op(const Tensor<T>& x, FwdFn f, GradFn df) {
    const auto n = x.data().size();
    std::vector<T> y(n);
    const T* xv = x.data().data();
#pragma omp parallel for schedule(static) if (n > 4096)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) y[static_cast<std::size_t>(i)] = f(xv[i]);
    auto px = x.node();
    return detail::make_result<T>(
        x.shape(), std::move(y), {px}, [px, df](TapeNode<T>& node) {
            px->ensure_grad();
            for (std::size_t i = 0; i < node.value.size(); ++i)
                px->grad[i] += node.grad[i] * df(px->value[i], node.value[i]);
        });
}

// FwdFn: T(T a, T b); dfa/dfb: T(T a, T b, T y).
template <typename T, class FwdFn, class DfA, class DfB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, FwdFn f, DfA dfa, DfB dfb) {
    const Shape out_shape = detail::broadcast_shape(a.shape(), b.shape());
    std::vector<T> y(static_cast<std::size_t>(numel_of(out_shape)));
    const Shape sa = detail::aligned_strides(a.shape(), out_shape);
    const Shape sb = detail::aligned_strides(b.shape(), out_shape);
    const T* av = a.data().data();
    const T* bv = b.data().data();
    if (a.shape() == b.shape()) {
        const auto n = static_cast<i64>(y.size());
#pragma omp parallel for schedule(static) if (n > 4096)
        for (i64 i = 0; i < n; ++i)
            y[static_cast<std::size_t>(i)] = f(av[i], bv[i]);
    } else {
        std::size_t io = 0;
        iter2(out_shape, sa.data(), sb.data(), [&](i64 ia, i64 ib) { y[io++] = f(av[ia], bv[ib]); });
    }
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_result<T>(
        out_shape, std::move(y), {pa, pb},
        [pa, pb, sa, sb, dfa, dfb](TapeNode<T>& node) {
            if (pa->requires_grad) pa->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            std::size_t io = 0;
            iter2(node.shape, sa.data(), sb.data(), [&](i64 ia, i64 ib) {
                const T g = node.grad[io];
                const T yv = node.value[io];
                ++io;
                const T avv = pa->value[static_cast<std::size_t>(ia)];
                const T bvv = pb->value[static_cast<std::size_t>(ib)];
                if (pa->requires_grad) pa->grad[static_cast<std::size_t>(ia)] += g * dfa(avv, bvv, yv);
                if (pb->requires_grad) pb->grad[static_cast<std::size_t>(ib)] += g * dfb(avv, bvv, yv);
            });
        });
}

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(a, b, [](T x, T y) { return x + y; },
                     [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(a, b, [](T x, T y) { return x - y; },
                     [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(a, b, [](T x, T y) { return x * y; },
                     [](T, T bv, T) { return bv; }, [](T av, T, T) { return av; });
}
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(a, b, [](T x, T y) { return x / y; },
                     [](T, T bv, T) { return T(1) / bv; },
                     [](T av, T bv, T) { return -av / (bv * bv); });
}

template <typename T> Tensor<T> neg(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}
template <typename T> Tensor<T> operator-(const Tensor<T>& x) { return neg(x); }

template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return unary_op(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
    return unary_op(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}
template <typename T> Tensor<T> operator+(const Tensor<T>& x, T s) { return add_scalar(x, s); }
template <typename T> Tensor<T> operator*(const Tensor<T>& x, T s) { return mul_scalar(x, s); }
template <typename T> Tensor<T> operator*(T s, const Tensor<T>& x) { return mul_scalar(x, s); }

template <typename T> Tensor<T> exp_(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}
template <typename T> Tensor<T> log_(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::log(v); }, [](T xv, T) { return T(1) / xv; });
}
template <typename T> Tensor<T> sqrt_(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}
template <typename T> Tensor<T> tanh_(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
        [](T, T y) { return y * (T(1) - y); });
}
// log(1 + exp(x)) without overflow; derivative is sigmoid(x).
template <typename T> Tensor<T> softplus(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](T xv, T) {
            return xv >= 0 ? T(1) / (T(1) + std::exp(-xv)) : std::exp(xv) / (T(1) + std::exp(xv));
        });
}
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
    return unary_op(x, [slope](T v) { return v > 0 ? v : slope * v; },
                    [slope](T xv, T) { return xv > 0 ? T(1) : slope; });
}
template <typename T> Tensor<T> abs_(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return std::abs(v); },
                    [](T xv, T) { return xv >= 0 ? T(1) : T(-1); });
}
template <typename T> Tensor<T> square(const Tensor<T>& x) {
    return unary_op(x, [](T v) { return v * v; }, [](T xv, T) { return T(2) * xv; });
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    // One extent may be -1 and is inferred.
    i64 prod = 1, infer = -1;
    for (std::size_t i = 0; i < new_shape.size(); ++i) {
        if (new_shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
            infer = static_cast<i64>(i);
        } else {
            prod *= new_shape[i];
        }
    }
    if (infer >= 0) new_shape[static_cast<std::size_t>(infer)] = x.numel() / prod;
    if (numel_of(new_shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    auto px = x.node();
    return detail::make_result<T>(std::move(new_shape), x.data(), {px}, [px](TapeNode<T>& node) {
        px->ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) px->grad[i] += node.grad[i];
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, const std::vector<i64>& perm) {
    const auto rank = static_cast<std::size_t>(x.rank());
    if (perm.size() != rank) throw ShapeError("transpose: permutation arity mismatch");
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape()[static_cast<std::size_t>(perm[i])];
    const Shape in_strides = strides_of(x.shape());
    Shape src_strides(rank);
    for (std::size_t i = 0; i < rank; ++i) src_strides[i] = in_strides[static_cast<std::size_t>(perm[i])];
    std::vector<T> y(static_cast<std::size_t>(x.numel()));
    const T* xv = x.data().data();
    std::size_t io = 0;
    iter2(out_shape, src_strides.data(), src_strides.data(), [&](i64 is, i64) { y[io++] = xv[is]; });
    auto px = x.node();
    return detail::make_result<T>(out_shape, std::move(y), {px},
                                  [px, out_shape, src_strides](TapeNode<T>& node) {
                                      px->ensure_grad();
                                      std::size_t i = 0;
                                      iter2(out_shape, src_strides.data(), src_strides.data(),
                                            [&](i64 is, i64) { px->grad[static_cast<std::size_t>(is)] += node.grad[i++]; });
                                  });
}

// 2-D convenience.
template <typename T> Tensor<T> transpose(const Tensor<T>& x) { return transpose(x, {1, 0}); }

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& target) {
    const Shape strides = detail::aligned_strides(x.shape(), target);
    if (detail::broadcast_shape(x.shape(), target) != target)
        throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " -> " + shape_str(target));
    std::vector<T> y(static_cast<std::size_t>(numel_of(target)));
    const T* xv = x.data().data();
    std::size_t io = 0;
    iter2(target, strides.data(), strides.data(), [&](i64 is, i64) { y[io++] = xv[is]; });
    auto px = x.node();
    return detail::make_result<T>(target, std::move(y), {px}, [px, target, strides](TapeNode<T>& node) {
        px->ensure_grad();
        std::size_t i = 0;
        iter2(target, strides.data(), strides.data(),
              [&](i64 is, i64) { px->grad[static_cast<std::size_t>(is)] += node.grad[i++]; });
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, i64 axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const auto rank = parts[0].rank();
    if (axis < 0 || axis >= rank) throw ShapeError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    out_shape[static_cast<std::size_t>(axis)] = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
        for (i64 d = 0; d < rank; ++d)
            if (d != axis && p.shape()[static_cast<std::size_t>(d)] != parts[0].shape()[static_cast<std::size_t>(d)])
                throw ShapeError("concat: extent mismatch at axis " + std::to_string(d));
        out_shape[static_cast<std::size_t>(axis)] += p.shape()[static_cast<std::size_t>(axis)];
    }
    // Copy in blocks: outer = dims before axis, inner = dims after.
    i64 outer = 1, inner = 1;
    for (i64 d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
    for (i64 d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<std::size_t>(d)];
    const i64 out_axis = out_shape[static_cast<std::size_t>(axis)];
    std::vector<T> y(static_cast<std::size_t>(numel_of(out_shape)));
    std::vector<i64> offsets;  // per-part start along axis
    std::vector<std::shared_ptr<TapeNode<T>>> parents;
    i64 at = 0;
    for (const auto& p : parts) {
        const i64 pa = p.shape()[static_cast<std::size_t>(axis)];
        for (i64 o = 0; o < outer; ++o)
            std::copy_n(p.data().data() + o * pa * inner, static_cast<std::size_t>(pa * inner),
                        y.data() + (o * out_axis + at) * inner);
        offsets.push_back(at);
        parents.push_back(p.node());
        at += pa;
    }
    auto ps = parents;
    return detail::make_result<T>(
        out_shape, std::move(y), std::move(parents),
        [ps, offsets, outer, inner, out_axis, axis](TapeNode<T>& node) {
            for (std::size_t k = 0; k < ps.size(); ++k) {
                if (!ps[k]->requires_grad) continue;
                ps[k]->ensure_grad();
                const i64 pa = ps[k]->shape[static_cast<std::size_t>(axis)];
                for (i64 o = 0; o < outer; ++o)
                    for (i64 j = 0; j < pa * inner; ++j)
                        ps[k]->grad[static_cast<std::size_t>(o * pa * inner + j)] +=
                            node.grad[static_cast<std::size_t>((o * out_axis + offsets[k]) * inner + j)];
            }
        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, i64 axis, i64 start, i64 len) {
    const auto rank = x.rank();
    if (axis < 0 || axis >= rank) throw ShapeError("slice: axis out of range");
    const i64 extent = x.shape()[static_cast<std::size_t>(axis)];
    if (start < 0 || len < 0 || start + len > extent)
        throw ShapeError("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of extent " + std::to_string(extent));
    Shape out_shape = x.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    i64 outer = 1, inner = 1;
    for (i64 d = 0; d < axis; ++d) outer *= x.shape()[static_cast<std::size_t>(d)];
    for (i64 d = axis + 1; d < rank; ++d) inner *= x.shape()[static_cast<std::size_t>(d)];
    std::vector<T> y(static_cast<std::size_t>(numel_of(out_shape)));
    for (i64 o = 0; o < outer; ++o)
        std::copy_n(x.data().data() + (o * extent + start) * inner, static_cast<std::size_t>(len * inner),
                    y.data() + o * len * inner);
    auto px = x.node();
    return detail::make_result<T>(out_shape, std::move(y), {px},
                                  [px, outer, inner, extent, start, len](TapeNode<T>& node) {
                                      px->ensure_grad();
                                      for (i64 o = 0; o < outer; ++o)
                                          for (i64 j = 0; j < len * inner; ++j)
                                              px->grad[static_cast<std::size_t>((o * extent + start) * inner + j)] +=
                                                  node.grad[static_cast<std::size_t>(o * len * inner + j)];
                                  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<i64>& axes, bool keepdim) {
    const auto rank = static_cast<std::size_t>(x.rank());
    std::vector<bool> reduced(rank, false);
    for (i64 a : axes) {
        if (a < 0 || a >= static_cast<i64>(rank)) throw ShapeError("sum: axis out of range");
        reduced[static_cast<std::size_t>(a)] = true;
    }
    Shape kept_shape(rank);
    for (std::size_t d = 0; d < rank; ++d) kept_shape[d] = reduced[d] ? 1 : x.shape()[d];
    const Shape out_strides_full = detail::aligned_strides(kept_shape, x.shape());
    std::vector<T> y(static_cast<std::size_t>(numel_of(kept_shape)), T(0));
    const T* xv = x.data().data();
    {
        std::size_t ii = 0;
        iter2(x.shape(), out_strides_full.data(), out_strides_full.data(),
              [&](i64 io, i64) { y[static_cast<std::size_t>(io)] += xv[ii++]; });
    }
    Shape out_shape;
    if (keepdim) {
        out_shape = kept_shape;
    } else {
        for (std::size_t d = 0; d < rank; ++d)
            if (!reduced[d]) out_shape.push_back(x.shape()[d]);
    }
    auto px = x.node();
    Shape in_shape = x.shape();
    return detail::make_result<T>(out_shape, std::move(y), {px},
                                  [px, in_shape, out_strides_full](TapeNode<T>& node) {
                                      px->ensure_grad();
                                      std::size_t ii = 0;
                                      iter2(in_shape, out_strides_full.data(), out_strides_full.data(),
                                            [&](i64 io, i64) { px->grad[ii++] += node.grad[static_cast<std::size_t>(io)]; });
                                  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    std::vector<i64> axes(static_cast<std::size_t>(x.rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return sum(x, axes, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, const std::vector<i64>& axes, bool keepdim) {
    i64 count = 1;
    for (i64 a : axes) count *= x.shape()[static_cast<std::size_t>(a)];
    return mul_scalar(sum(x, axes, keepdim), T(1) / static_cast<T>(count));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Softmax over the last axis

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    if (x.rank() < 1) throw ShapeError("softmax: rank-0 input");
    const i64 cols = x.shape().back();
    const i64 rows = x.numel() / cols;
    std::vector<T> y(static_cast<std::size_t>(x.numel()));
    const T* xv = x.data().data();
    for (i64 r = 0; r < rows; ++r) {
        const T* in = xv + r * cols;
        T* out = y.data() + r * cols;
        T mx = in[0];
        for (i64 j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
        T z = 0;
        for (i64 j = 0; j < cols; ++j) z += (out[j] = std::exp(in[j] - mx));
        for (i64 j = 0; j < cols; ++j) out[j] /= z;
    }
    auto px = x.node();
    return detail::make_result<T>(x.shape(), std::move(y), {px}, [px, rows, cols](TapeNode<T>& node) {
        px->ensure_grad();
        for (i64 r = 0; r < rows; ++r) {
            const T* yv = node.value.data() + r * cols;
            const T* g = node.grad.data() + r * cols;
            T dot = 0;
            for (i64 j = 0; j < cols; ++j) dot += g[j] * yv[j];
            for (i64 j = 0; j < cols; ++j)
                px->grad[static_cast<std::size_t>(r * cols + j)] += yv[j] * (g[j] - dot);
        }
    });
}

template <typename T>
Tensor<T> log_softmax_lastdim(const Tensor<T>& x) {
    if (x.rank() < 1) throw ShapeError("log_softmax: rank-0 input");
    const i64 cols = x.shape().back();
    const i64 rows = x.numel() / cols;
    std::vector<T> y(static_cast<std::size_t>(x.numel()));
    const T* xv = x.data().data();
    for (i64 r = 0; r < rows; ++r) {
        const T* in = xv + r * cols;
        T* out = y.data() + r * cols;
        T mx = in[0];
        for (i64 j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
        T z = 0;
        for (i64 j = 0; j < cols; ++j) z += std::exp(in[j] - mx);
        const T lz = std::log(z) + mx;
        for (i64 j = 0; j < cols; ++j) out[j] = in[j] - lz;
    }
    auto px = x.node();
    return detail::make_result<T>(x.shape(), std::move(y), {px}, [px, rows, cols](TapeNode<T>& node) {
        px->ensure_grad();
        for (i64 r = 0; r < rows; ++r) {
            const T* yv = node.value.data() + r * cols;
            const T* g = node.grad.data() + r * cols;
            T gsum = 0;
            for (i64 j = 0; j < cols; ++j) gsum += g[j];
            for (i64 j = 0; j < cols; ++j)
                px->grad[static_cast<std::size_t>(r * cols + j)] += g[j] - std::exp(yv[j]) * gsum;
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra and convolutions

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const i64 m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner extents disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<T> y(static_cast<std::size_t>(m * n));
    kernels::gemm<T>(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0),
                     y.data(), n);
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_result<T>({m, n}, std::move(y), {pa, pb}, [pa, pb, m, n, k](TapeNode<T>& node) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            kernels::gemm<T>(false, true, m, k, n, T(1), node.grad.data(), n, pb->value.data(), n,
                             T(1), pa->grad.data(), k);
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            kernels::gemm<T>(true, false, k, n, m, T(1), pa->value.data(), k, node.grad.data(), n,
                             T(1), pb->grad.data(), n);
        }
    });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, i64 stride, i64 pad) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeError("conv2d: expected [N,C,H,W] input and [F,C,kh,kw] kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    const auto d = kernels::conv2d_dims(x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2),
                                        w.dim(3), stride, pad);
    std::vector<T> y(static_cast<std::size_t>(d.n * d.c_out * d.h_out * d.w_out));
    kernels::conv2d_forward(x.data().data(), w.data().data(), y.data(), d);
    auto px = x.node();
    auto pw = w.node();
    return detail::make_result<T>({d.n, d.c_out, d.h_out, d.w_out}, std::move(y), {px, pw},
                                  [px, pw, d](TapeNode<T>& node) {
                                      if (px->requires_grad) {
                                          px->ensure_grad();
                                          std::vector<T> dx(px->value.size());
                                          kernels::conv2d_backward_input(node.grad.data(), pw->value.data(), dx.data(), d);
                                          for (std::size_t i = 0; i < dx.size(); ++i) px->grad[i] += dx[i];
                                      }
                                      if (pw->requires_grad) {
                                          pw->ensure_grad();
                                          std::vector<T> dw(pw->value.size());
                                          kernels::conv2d_backward_kernel(px->value.data(), node.grad.data(), dw.data(), d);
                                          for (std::size_t i = 0; i < dw.size(); ++i) pw->grad[i] += dw[i];
                                      }
                                  });
}

// Kernel layout [C_in, C_out, kh, kw].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, i64 stride, i64 pad) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeError("conv_transpose2d: expected [N,C,H,W] input and [C,F,kh,kw] kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(0))
        throw ShapeError("conv_transpose2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
    const auto d = kernels::convt2d_dims(x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(1), w.dim(2),
                                         w.dim(3), stride, pad);
    std::vector<T> y(static_cast<std::size_t>(d.n * d.c_out * d.h_out * d.w_out));
    kernels::convt2d_forward(x.data().data(), w.data().data(), y.data(), d);
    auto px = x.node();
    auto pw = w.node();
    return detail::make_result<T>({d.n, d.c_out, d.h_out, d.w_out}, std::move(y), {px, pw},
                                  [px, pw, d](TapeNode<T>& node) {
                                      if (px->requires_grad) {
                                          px->ensure_grad();
                                          std::vector<T> dx(px->value.size());
                                          kernels::convt2d_backward_input(node.grad.data(), pw->value.data(), dx.data(), d);
                                          for (std::size_t i = 0; i < dx.size(); ++i) px->grad[i] += dx[i];
                                      }
                                      if (pw->requires_grad) {
                                          pw->ensure_grad();
                                          std::vector<T> dw(pw->value.size());
                                          kernels::convt2d_backward_kernel(px->value.data(), node.grad.data(), dw.data(), d);
                                          for (std::size_t i = 0; i < dw.size(); ++i) pw->grad[i] += dw[i];
                                      }
                                  });
}

// ---------------------------------------------------------------------------
// Sampling and constants (leaves, no gradient)

template <typename T>
Tensor<T> randn(Shape s, Rng& rng) {
    std::vector<T> v(static_cast<std::size_t>(numel_of(s)));
    for (auto& e : v) e = static_cast<T>(rng.normal());
    return Tensor<T>(std::move(s), std::move(v));
}

template <typename T>
Tensor<T> rand_uniform(Shape s, Rng& rng, T lo = T(0), T hi = T(1)) {
    std::vector<T> v(static_cast<std::size_t>(numel_of(s)));
    for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>(std::move(s), std::move(v));
}

template <typename T>
Tensor<T> one_hot(const std::vector<i64>& labels, i64 num_classes) {
    std::vector<T> v(labels.size() * static_cast<std::size_t>(num_classes), T(0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ContractError("one_hot: label " + std::to_string(labels[i]) + " out of range [0," +
                                std::to_string(num_classes) + ")");
        v[i * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(labels[i])] = T(1);
    }
    return Tensor<T>({static_cast<i64>(labels.size()), num_classes}, std::move(v));
}

template <typename T>
std::vector<i64> argmax_lastdim(const Tensor<T>& x) {
    const i64 cols = x.shape().back();
    const i64 rows = x.numel() / cols;
    std::vector<i64> out(static_cast<std::size_t>(rows));
    for (i64 r = 0; r < rows; ++r) {
        const T* row = x.data().data() + r * cols;
        out[static_cast<std::size_t>(r)] =
            std::max_element(row, row + cols) - row;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward pass

template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    // Post-order DFS; reverse order processes every consumer before its inputs.
    std::vector<TapeNode<T>*> order;
    std::unordered_set<TapeNode<T>*> seen;
    std::vector<std::pair<TapeNode<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TapeNode<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior grads are scratch for this walk; only leaves accumulate
    // across repeated backward() calls.
    for (TapeNode<T>* n : order)
        if (n->backprop) n->grad.assign(n->value.size(), T(0));
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TapeNode<T>* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker

// Returns max over elements of |analytic - central| / max(|analytic|, |central|, 1e-8).
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x0, T eps) {
    Tensor<T> x(x0.shape(), x0.data(), true);
    Tensor<T> loss = f(x);
    backward(loss);
    const Tensor<T> analytic = x.grad();
    double max_err = 0;
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        Tensor<T> xp(x0.shape(), x0.data(), false);
        Tensor<T> xm(x0.shape(), x0.data(), false);
        xp.data()[i] += eps;
        xm.data()[i] -= eps;
        const double fp = static_cast<double>(f(xp).item());
        const double fm = static_cast<double>(f(xm).item());
        const double central = (fp - fm) / (2.0 * static_cast<double>(eps));
        const double a = static_cast<double>(analytic.data()[i]);
        if (!std::isfinite(central) || !std::isfinite(a))
            throw NumericError("grad_check: non-finite value at element " + std::to_string(i));
        const double err = std::abs(a - central) / std::max({std::abs(a), std::abs(central), 1e-8});
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace dualinf
