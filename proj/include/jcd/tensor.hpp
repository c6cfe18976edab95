#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "jcd/errors.hpp"

// Dense rank<=3 tensor with tape-based reverse-mode autodiff. The tape is
// dynamic: every op appends a node holding the forward value and a closure
// that scatters the node's gradient into its parents. backward() walks the
// graph once and then clears it; parameters are leaves whose gradients
// survive until zero_grad(). Real is float for training, double for
// verification (finite differences need the extra precision).

namespace jcd {

inline thread_local bool g_grad_enabled = true;

// Disables tape construction in its scope (inference / numeric probes).
struct NoGradGuard {
    NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
    ~NoGradGuard() { g_grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename Real>
struct TapeNode {
    std::vector<int> shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    std::vector<std::shared_ptr<TapeNode>> parents;
    std::function<void(TapeNode&)> backprop;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
    }
};

namespace detail {

inline size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename Real>
void check_finite(const std::vector<Real>& v, const char* op) {
    for (size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i]))
            throw DataError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
}

inline void check_shape(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 3) throw ShapeError("tensor rank must be 1..3");
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    }
}

} // namespace detail

template <typename Real>
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<int> shape, std::vector<Real> data, bool requires_grad = false) {
        detail::check_shape(shape);
        if (detail::numel(shape) != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + detail::shape_str(shape));
        detail::check_finite(data, "tensor");
        node_ = std::make_shared<TapeNode<Real>>();
        node_->shape = std::move(shape);
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    Tensor(std::vector<int> shape, Real fill, bool requires_grad = false)
        : Tensor(shape, std::vector<Real>(detail::numel(shape), fill), requires_grad) {
    }

    static Tensor scalar(Real v, bool requires_grad = false) {
        return Tensor({1}, std::vector<Real>{v}, requires_grad);
    }

    explicit Tensor(std::shared_ptr<TapeNode<Real>> n) : node_(std::move(n)) {}

    bool valid() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    size_t size() const { return node_->value.size(); }

    std::vector<Real>& values() { return node_->value; }
    const std::vector<Real>& values() const { return node_->value; }

    Real& at(int i) { return node_->value[static_cast<size_t>(i)]; }
    Real at(int i) const { return node_->value[static_cast<size_t>(i)]; }
    Real& at(int i, int j) { return node_->value[static_cast<size_t>(i) * dim(1) + j]; }
    Real at(int i, int j) const { return node_->value[static_cast<size_t>(i) * dim(1) + j]; }

    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<Real>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    void zero_grad() { node_->grad.assign(node_->value.size(), Real(0)); }

    const std::shared_ptr<TapeNode<Real>>& node() const { return node_; }

private:
    mutable std::shared_ptr<TapeNode<Real>> node_;
};

namespace detail {

template <typename Real>
Tensor<Real> make_op(std::vector<int> shape, std::vector<Real> value, const char* op,
                     std::vector<std::shared_ptr<TapeNode<Real>>> parents,
                     std::function<void(TapeNode<Real>&)> backprop) {
    check_finite(value, op);
    auto n = std::make_shared<TapeNode<Real>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p->requires_grad) rg = true;
    }
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Tensor<Real>(std::move(n));
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Indices of the k largest entries; ties resolved toward the lowest index.
template <typename Real>
std::vector<int> topk_indices(const Real* v, int n, int stride, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return v[static_cast<size_t>(a) * stride] > v[static_cast<size_t>(b) * stride];
    });
    idx.resize(static_cast<size_t>(k));
    return idx;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename Real, typename Fwd, typename Bwd>
Tensor<Real> unary_op(const Tensor<Real>& x, const char* name, Fwd f, Bwd dfdx) {
    const auto& xv = x.values();
    std::vector<Real> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    auto xn = x.node();
    return detail::make_op<Real>(
        x.shape(), std::move(out), name, {xn}, [xn, dfdx](TapeNode<Real>& n) {
            xn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                xn->grad[i] += n.grad[i] * dfdx(xn->value[i], n.value[i]);
        });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
    return unary_op(
        x, "relu", [](Real v) { return v > Real(0) ? v : Real(0); },
        [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
    return unary_op(
        x, "sigmoid",
        [](Real v) {
            if (v >= Real(0)) return Real(1) / (Real(1) + std::exp(-v));
            const Real e = std::exp(v);
            return e / (Real(1) + e);
        },
        [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Tensor<Real> vabs(const Tensor<Real>& x) {
    return unary_op(
        x, "abs", [](Real v) { return std::abs(v); },
        [](Real v, Real) { return v > Real(0) ? Real(1) : (v < Real(0) ? Real(-1) : Real(0)); });
}

template <typename Real>
Tensor<Real> vsqrt(const Tensor<Real>& x) {
    return unary_op(
        x, "sqrt", [](Real v) { return std::sqrt(v); },
        [](Real, Real y) { return Real(0.5) / y; });
}

template <typename Real>
Tensor<Real> reciprocal(const Tensor<Real>& x) {
    return unary_op(
        x, "reciprocal", [](Real v) { return Real(1) / v; },
        [](Real, Real y) { return -y * y; });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c) {
    return unary_op(
        x, "scale", [c](Real v) { return v * c; }, [c](Real, Real) { return c; });
}

template <typename Real>
Tensor<Real> add_const(const Tensor<Real>& x, Real c) {
    return unary_op(
        x, "add_const", [c](Real v) { return v + c; }, [](Real, Real) { return Real(1); });
}

template <typename Real, typename Fwd>
Tensor<Real> binary_op(const Tensor<Real>& a, const Tensor<Real>& b, const char* name, Fwd f,
                       std::function<void(TapeNode<Real>&, TapeNode<Real>&, TapeNode<Real>&)> bwd) {
    detail::require_same_shape(a, b, name);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<Real> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<Real>(a.shape(), std::move(out), name, {an, bn},
                                 [an, bn, bwd](TapeNode<Real>& n) { bwd(n, *an, *bn); });
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    return binary_op<Real>(
        a, b, "add", [](Real x, Real y) { return x + y; },
        [](TapeNode<Real>& n, TapeNode<Real>& an, TapeNode<Real>& bn) {
            an.ensure_grad();
            bn.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                an.grad[i] += n.grad[i];
                bn.grad[i] += n.grad[i];
            }
        });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    return binary_op<Real>(
        a, b, "sub", [](Real x, Real y) { return x - y; },
        [](TapeNode<Real>& n, TapeNode<Real>& an, TapeNode<Real>& bn) {
            an.ensure_grad();
            bn.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                an.grad[i] += n.grad[i];
                bn.grad[i] -= n.grad[i];
            }
        });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    return binary_op<Real>(
        a, b, "mul", [](Real x, Real y) { return x * y; },
        [](TapeNode<Real>& n, TapeNode<Real>& an, TapeNode<Real>& bn) {
            an.ensure_grad();
            bn.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                an.grad[i] += n.grad[i] * bn.value[i];
                bn.grad[i] += n.grad[i] * an.value[i];
            }
        });
}

template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
    return binary_op<Real>(
        a, b, "div", [](Real x, Real y) { return x / y; },
        [](TapeNode<Real>& n, TapeNode<Real>& an, TapeNode<Real>& bn) {
            an.ensure_grad();
            bn.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                const Real inv = Real(1) / bn.value[i];
                an.grad[i] += n.grad[i] * inv;
                bn.grad[i] -= n.grad[i] * an.value[i] * inv * inv;
            }
        });
}

// out = x * s[0], with s a learnable 1-element tensor (residual gates).
template <typename Real>
Tensor<Real> scale_by(const Tensor<Real>& x, const Tensor<Real>& s) {
    if (s.size() != 1) throw ShapeError("scale_by: gate must be a 1-element tensor");
    const Real sv = s.values()[0];
    const auto& xv = x.values();
    std::vector<Real> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * sv;
    auto xn = x.node();
    auto sn = s.node();
    return detail::make_op<Real>(x.shape(), std::move(out), "scale_by", {xn, sn},
                                 [xn, sn](TapeNode<Real>& n) {
                                     xn->ensure_grad();
                                     sn->ensure_grad();
                                     const Real sv2 = sn->value[0];
                                     Real acc = 0;
                                     for (size_t i = 0; i < n.grad.size(); ++i) {
                                         xn->grad[i] += n.grad[i] * sv2;
                                         acc += n.grad[i] * xn->value[i];
                                     }
                                     sn->grad[0] += acc;
                                 });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expects rank-2 tensors");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner dimensions mismatch " + detail::shape_str(a.shape()) +
                         " vs " + detail::shape_str(b.shape()));
    const Real* av = a.values().data();
    const Real* bv = b.values().data();
    std::vector<Real> out(static_cast<size_t>(m) * n, Real(0));
    for (int i = 0; i < m; ++i) {
        Real* orow = out.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const Real aip = av[static_cast<size_t>(i) * k + p];
            const Real* brow = bv + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<Real>(
        {m, n}, std::move(out), "matmul", {an, bn}, [an, bn, m, k, n](TapeNode<Real>& node) {
            an->ensure_grad();
            bn->ensure_grad();
            const Real* g = node.grad.data();
            const Real* avd = an->value.data();
            const Real* bvd = bn->value.data();
            Real* ga = an->grad.data();
            Real* gb = bn->grad.data();
            for (int i = 0; i < m; ++i) {
                const Real* grow = g + static_cast<size_t>(i) * n;
                const Real* arow = avd + static_cast<size_t>(i) * k;
                Real* garow = ga + static_cast<size_t>(i) * k;
                for (int p = 0; p < k; ++p) {
                    const Real* brow = bvd + static_cast<size_t>(p) * n;
                    Real* gbrow = gb + static_cast<size_t>(p) * n;
                    Real acc = 0;
                    const Real aip = arow[p];
                    for (int j = 0; j < n; ++j) {
                        acc += grow[j] * brow[j];
                        gbrow[j] += aip * grow[j];
                    }
                    garow[p] += acc;
                }
            }
        });
}

template <typename Real>
Tensor<Real> transposed(const Tensor<Real>& a) {
    if (a.rank() != 2) throw ShapeError("transpose: expects a rank-2 tensor");
    const int m = a.dim(0), n = a.dim(1);
    std::vector<Real> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = a.values()[static_cast<size_t>(i) * n + j];
    auto an = a.node();
    return detail::make_op<Real>({n, m}, std::move(out), "transpose", {an},
                                 [an, m, n](TapeNode<Real>& node) {
                                     an->ensure_grad();
                                     for (int i = 0; i < m; ++i)
                                         for (int j = 0; j < n; ++j)
                                             an->grad[static_cast<size_t>(i) * n + j] +=
                                                 node.grad[static_cast<size_t>(j) * m + i];
                                 });
}

// Same-padded temporal cross-correlation: x [T x Cin], w [K x Cin x Cout]
// (K odd), b [Cout] -> [T x Cout].
template <typename Real>
Tensor<Real> conv1d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
    if (x.rank() != 2 || w.rank() != 3 || b.rank() != 1)
        throw ShapeError("conv1d: expects x[TxCin], w[KxCinxCout], b[Cout]");
    const int t_len = x.dim(0), cin = x.dim(1);
    const int k = w.dim(0), wcin = w.dim(1), cout = w.dim(2);
    if (k % 2 == 0) throw ArgError("conv1d: kernel size must be odd, got " + std::to_string(k));
    if (wcin != cin || b.dim(0) != cout)
        throw ShapeError("conv1d: channel mismatch x" + detail::shape_str(x.shape()) + " w" +
                         detail::shape_str(w.shape()) + " b" + detail::shape_str(b.shape()));
    const int half = k / 2;
    const Real* xv = x.values().data();
    const Real* wv = w.values().data();
    std::vector<Real> out(static_cast<size_t>(t_len) * cout);
    for (int t = 0; t < t_len; ++t) {
        Real* orow = out.data() + static_cast<size_t>(t) * cout;
        for (int o = 0; o < cout; ++o) orow[o] = b.values()[static_cast<size_t>(o)];
        for (int u = 0; u < k; ++u) {
            const int tt = t + u - half;
            if (tt < 0 || tt >= t_len) continue;
            const Real* xrow = xv + static_cast<size_t>(tt) * cin;
            const Real* wplane = wv + static_cast<size_t>(u) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const Real xval = xrow[ci];
                const Real* wrow = wplane + static_cast<size_t>(ci) * cout;
                for (int o = 0; o < cout; ++o) orow[o] += xval * wrow[o];
            }
        }
    }
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    return detail::make_op<Real>(
        {t_len, cout}, std::move(out), "conv1d", {xn, wn, bn},
        [xn, wn, bn, t_len, cin, k, cout, half](TapeNode<Real>& node) {
            xn->ensure_grad();
            wn->ensure_grad();
            bn->ensure_grad();
            const Real* g = node.grad.data();
            const Real* xv2 = xn->value.data();
            const Real* wv2 = wn->value.data();
            Real* gx = xn->grad.data();
            Real* gw = wn->grad.data();
            Real* gb = bn->grad.data();
            for (int t = 0; t < t_len; ++t) {
                const Real* grow = g + static_cast<size_t>(t) * cout;
                for (int o = 0; o < cout; ++o) gb[o] += grow[o];
                for (int u = 0; u < k; ++u) {
                    const int tt = t + u - half;
                    if (tt < 0 || tt >= t_len) continue;
                    const Real* xrow = xv2 + static_cast<size_t>(tt) * cin;
                    Real* gxrow = gx + static_cast<size_t>(tt) * cin;
                    const size_t plane = static_cast<size_t>(u) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const Real* wrow = wv2 + plane + static_cast<size_t>(ci) * cout;
                        Real* gwrow = gw + plane + static_cast<size_t>(ci) * cout;
                        const Real xval = xrow[ci];
                        Real acc = 0;
                        for (int o = 0; o < cout; ++o) {
                            acc += grow[o] * wrow[o];
                            gwrow[o] += xval * grow[o];
                        }
                        gxrow[ci] += acc;
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Softmax and reductions
// ---------------------------------------------------------------------------

// Max-subtracted softmax along `axis` (rank-1 tensors use axis 0; rank-2
// axis 0 normalizes each column, axis 1 each row).
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis) {
    if (x.rank() > 2) throw ShapeError("softmax: rank must be 1 or 2");
    if (axis < 0 || axis >= x.rank()) throw ArgError("softmax: invalid axis " + std::to_string(axis));
    const int rows = x.rank() == 1 ? x.dim(0) : x.dim(0);
    const int cols = x.rank() == 1 ? 1 : x.dim(1);
    const int slice_len = axis == 0 ? rows : cols;
    const int nslices = axis == 0 ? cols : rows;
    const int stride = axis == 0 ? cols : 1;
    const auto& xv = x.values();
    std::vector<Real> out(xv.size());
    for (int s = 0; s < nslices; ++s) {
        const size_t base = axis == 0 ? static_cast<size_t>(s) : static_cast<size_t>(s) * cols;
        Real mx = xv[base];
        for (int i = 1; i < slice_len; ++i)
            mx = std::max(mx, xv[base + static_cast<size_t>(i) * stride]);
        Real sum = 0;
        for (int i = 0; i < slice_len; ++i) {
            const Real e = std::exp(xv[base + static_cast<size_t>(i) * stride] - mx);
            out[base + static_cast<size_t>(i) * stride] = e;
            sum += e;
        }
        const Real inv = Real(1) / sum;
        for (int i = 0; i < slice_len; ++i) out[base + static_cast<size_t>(i) * stride] *= inv;
    }
    auto xn = x.node();
    return detail::make_op<Real>(
        x.shape(), std::move(out), "softmax", {xn},
        [xn, slice_len, nslices, stride, cols, axis](TapeNode<Real>& node) {
            xn->ensure_grad();
            for (int s = 0; s < nslices; ++s) {
                const size_t base = axis == 0 ? static_cast<size_t>(s) : static_cast<size_t>(s) * cols;
                Real dotp = 0;
                for (int i = 0; i < slice_len; ++i) {
                    const size_t ix = base + static_cast<size_t>(i) * stride;
                    dotp += node.grad[ix] * node.value[ix];
                }
                for (int i = 0; i < slice_len; ++i) {
                    const size_t ix = base + static_cast<size_t>(i) * stride;
                    xn->grad[ix] += node.value[ix] * (node.grad[ix] - dotp);
                }
            }
        });
}

template <typename Real>
Tensor<Real> sum_all(const Tensor<Real>& x) {
    Real s = 0;
    for (Real v : x.values()) s += v;
    auto xn = x.node();
    return detail::make_op<Real>({1}, std::vector<Real>{s}, "sum_all", {xn},
                                 [xn](TapeNode<Real>& node) {
                                     xn->ensure_grad();
                                     for (auto& g : xn->grad) g += node.grad[0];
                                 });
}

template <typename Real>
Tensor<Real> mean_all(const Tensor<Real>& x) {
    Real s = 0;
    for (Real v : x.values()) s += v;
    const Real inv = Real(1) / static_cast<Real>(x.size());
    auto xn = x.node();
    return detail::make_op<Real>({1}, std::vector<Real>{s * inv}, "mean_all", {xn},
                                 [xn, inv](TapeNode<Real>& node) {
                                     xn->ensure_grad();
                                     for (auto& g : xn->grad) g += node.grad[0] * inv;
                                 });
}

// axis 0: column sums -> [cols]; axis 1: row sums -> [rows].
template <typename Real>
Tensor<Real> sum_axis(const Tensor<Real>& x, int axis) {
    if (x.rank() != 2) throw ShapeError("sum_axis: expects a rank-2 tensor");
    if (axis != 0 && axis != 1) throw ArgError("sum_axis: invalid axis");
    const int rows = x.dim(0), cols = x.dim(1);
    const int out_len = axis == 0 ? cols : rows;
    std::vector<Real> out(static_cast<size_t>(out_len), Real(0));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<size_t>(axis == 0 ? j : i)] += x.values()[static_cast<size_t>(i) * cols + j];
    auto xn = x.node();
    return detail::make_op<Real>({out_len}, std::move(out), "sum_axis", {xn},
                                 [xn, rows, cols, axis](TapeNode<Real>& node) {
                                     xn->ensure_grad();
                                     for (int i = 0; i < rows; ++i)
                                         for (int j = 0; j < cols; ++j)
                                             xn->grad[static_cast<size_t>(i) * cols + j] +=
                                                 node.grad[static_cast<size_t>(axis == 0 ? j : i)];
                                 });
}

template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, int axis) {
    const Real inv = Real(1) / static_cast<Real>(axis == 0 ? x.dim(0) : x.dim(1));
    return scale(sum_axis(x, axis), inv);
}

template <typename Real>
Tensor<Real> dot(const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::require_same_shape(a, b, "dot");
    Real s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<Real>({1}, std::vector<Real>{s}, "dot", {an, bn},
                                 [an, bn](TapeNode<Real>& node) {
                                     an->ensure_grad();
                                     bn->ensure_grad();
                                     const Real g = node.grad[0];
                                     for (size_t i = 0; i < an->value.size(); ++i) {
                                         an->grad[i] += g * bn->value[i];
                                         bn->grad[i] += g * an->value[i];
                                     }
                                 });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

// out[i,j] = m[i,j] * v[i]; broadcasts a per-row factor (suppression, Eq.1
// normalization).
template <typename Real>
Tensor<Real> scale_rows(const Tensor<Real>& m, const Tensor<Real>& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.dim(0) != m.dim(0))
        throw ShapeError("scale_rows: need m[RxC] and v[R]");
    const int rows = m.dim(0), cols = m.dim(1);
    std::vector<Real> out(m.size());
    for (int i = 0; i < rows; ++i) {
        const Real f = v.values()[static_cast<size_t>(i)];
        for (int j = 0; j < cols; ++j)
            out[static_cast<size_t>(i) * cols + j] = m.values()[static_cast<size_t>(i) * cols + j] * f;
    }
    auto mn = m.node();
    auto vn = v.node();
    return detail::make_op<Real>(m.shape(), std::move(out), "scale_rows", {mn, vn},
                                 [mn, vn, rows, cols](TapeNode<Real>& node) {
                                     mn->ensure_grad();
                                     vn->ensure_grad();
                                     for (int i = 0; i < rows; ++i) {
                                         const Real f = vn->value[static_cast<size_t>(i)];
                                         Real acc = 0;
                                         for (int j = 0; j < cols; ++j) {
                                             const size_t ix = static_cast<size_t>(i) * cols + j;
                                             mn->grad[ix] += node.grad[ix] * f;
                                             acc += node.grad[ix] * mn->value[ix];
                                         }
                                         vn->grad[static_cast<size_t>(i)] += acc;
                                     }
                                 });
}

template <typename Real>
Tensor<Real> col(const Tensor<Real>& m, int j) {
    if (m.rank() != 2) throw ShapeError("col: expects a rank-2 tensor");
    if (j < 0 || j >= m.dim(1)) throw ArgError("col: index out of range");
    const int rows = m.dim(0), cols = m.dim(1);
    std::vector<Real> out(static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) out[static_cast<size_t>(i)] = m.values()[static_cast<size_t>(i) * cols + j];
    auto mn = m.node();
    return detail::make_op<Real>({rows}, std::move(out), "col", {mn},
                                 [mn, rows, cols, j](TapeNode<Real>& node) {
                                     mn->ensure_grad();
                                     for (int i = 0; i < rows; ++i)
                                         mn->grad[static_cast<size_t>(i) * cols + j] += node.grad[static_cast<size_t>(i)];
                                 });
}

template <typename Real>
Tensor<Real> concat_cols(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
        throw ShapeError("concat_cols: row counts differ " + detail::shape_str(a.shape()) + " vs " +
                         detail::shape_str(b.shape()));
    const int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    std::vector<Real> out(static_cast<size_t>(rows) * (ca + cb));
    for (int i = 0; i < rows; ++i) {
        std::copy_n(a.values().data() + static_cast<size_t>(i) * ca, ca,
                    out.data() + static_cast<size_t>(i) * (ca + cb));
        std::copy_n(b.values().data() + static_cast<size_t>(i) * cb, cb,
                    out.data() + static_cast<size_t>(i) * (ca + cb) + ca);
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<Real>({rows, ca + cb}, std::move(out), "concat_cols", {an, bn},
                                 [an, bn, rows, ca, cb](TapeNode<Real>& node) {
                                     an->ensure_grad();
                                     bn->ensure_grad();
                                     for (int i = 0; i < rows; ++i) {
                                         const size_t obase = static_cast<size_t>(i) * (ca + cb);
                                         for (int j = 0; j < ca; ++j)
                                             an->grad[static_cast<size_t>(i) * ca + j] += node.grad[obase + j];
                                         for (int j = 0; j < cb; ++j)
                                             bn->grad[static_cast<size_t>(i) * cb + j] += node.grad[obase + ca + j];
                                     }
                                 });
}

// out[d] = sum_t w[t] * m[t,d]; attention-weighted feature pooling.
template <typename Real>
Tensor<Real> weighted_sum_rows(const Tensor<Real>& m, const Tensor<Real>& w) {
    if (m.rank() != 2 || w.rank() != 1 || w.dim(0) != m.dim(0))
        throw ShapeError("weighted_sum_rows: need m[TxD] and w[T]");
    const int rows = m.dim(0), cols = m.dim(1);
    std::vector<Real> out(static_cast<size_t>(cols), Real(0));
    for (int t = 0; t < rows; ++t) {
        const Real wt = w.values()[static_cast<size_t>(t)];
        for (int d = 0; d < cols; ++d) out[static_cast<size_t>(d)] += wt * m.values()[static_cast<size_t>(t) * cols + d];
    }
    auto mn = m.node();
    auto wn = w.node();
    return detail::make_op<Real>({cols}, std::move(out), "weighted_sum_rows", {mn, wn},
                                 [mn, wn, rows, cols](TapeNode<Real>& node) {
                                     mn->ensure_grad();
                                     wn->ensure_grad();
                                     for (int t = 0; t < rows; ++t) {
                                         const Real wt = wn->value[static_cast<size_t>(t)];
                                         Real acc = 0;
                                         for (int d = 0; d < cols; ++d) {
                                             const size_t ix = static_cast<size_t>(t) * cols + d;
                                             mn->grad[ix] += wt * node.grad[static_cast<size_t>(d)];
                                             acc += mn->value[ix] * node.grad[static_cast<size_t>(d)];
                                         }
                                         wn->grad[static_cast<size_t>(t)] += acc;
                                     }
                                 });
}

// ---------------------------------------------------------------------------
// Top-k pooling and cross-entropy
// ---------------------------------------------------------------------------

// Mean of the k largest entries of a vector; gradient is 1/k on the selected
// entries, ties broken by lowest index.
template <typename Real>
Tensor<Real> topk_mean(const Tensor<Real>& x, int k) {
    if (x.rank() != 1) throw ShapeError("topk_mean: expects a rank-1 tensor");
    const int n = x.dim(0);
    if (k < 1 || k > n)
        throw ArgError("topk_mean: k=" + std::to_string(k) + " out of range [1," + std::to_string(n) + "]");
    auto idx = detail::topk_indices(x.values().data(), n, 1, k);
    Real s = 0;
    for (int i : idx) s += x.values()[static_cast<size_t>(i)];
    const Real invk = Real(1) / static_cast<Real>(k);
    auto xn = x.node();
    return detail::make_op<Real>({1}, std::vector<Real>{s * invk}, "topk_mean", {xn},
                                 [xn, idx, invk](TapeNode<Real>& node) {
                                     xn->ensure_grad();
                                     for (int i : idx) xn->grad[static_cast<size_t>(i)] += node.grad[0] * invk;
                                 });
}

// Per-column top-k mean of a [T x C] matrix -> [C].
template <typename Real>
Tensor<Real> topk_mean_cols(const Tensor<Real>& m, int k) {
    if (m.rank() != 2) throw ShapeError("topk_mean_cols: expects a rank-2 tensor");
    const int rows = m.dim(0), cols = m.dim(1);
    if (k < 1 || k > rows)
        throw ArgError("topk_mean_cols: k=" + std::to_string(k) + " out of range [1," + std::to_string(rows) + "]");
    const Real invk = Real(1) / static_cast<Real>(k);
    std::vector<Real> out(static_cast<size_t>(cols));
    std::vector<std::vector<int>> sel(static_cast<size_t>(cols));
    for (int j = 0; j < cols; ++j) {
        sel[static_cast<size_t>(j)] = detail::topk_indices(m.values().data() + j, rows, cols, k);
        Real s = 0;
        for (int i : sel[static_cast<size_t>(j)]) s += m.values()[static_cast<size_t>(i) * cols + j];
        out[static_cast<size_t>(j)] = s * invk;
    }
    auto mn = m.node();
    return detail::make_op<Real>({cols}, std::move(out), "topk_mean_cols", {mn},
                                 [mn, sel, cols, invk](TapeNode<Real>& node) {
                                     mn->ensure_grad();
                                     for (int j = 0; j < cols; ++j)
                                         for (int i : sel[static_cast<size_t>(j)])
                                             mn->grad[static_cast<size_t>(i) * cols + j] +=
                                                 node.grad[static_cast<size_t>(j)] * invk;
                                 });
}

// -sum_j target[j] * log softmax(v)[j], computed in the fused stable form.
// target must be a distribution (sums to 1).
template <typename Real>
Tensor<Real> ce_with_logits(const Tensor<Real>& v, const std::vector<Real>& target) {
    if (v.rank() != 1) throw ShapeError("ce_with_logits: expects a rank-1 tensor");
    if (target.size() != v.size())
        throw ShapeError("ce_with_logits: target length mismatch");
    Real tsum = 0;
    for (Real t : target) tsum += t;
    if (std::abs(tsum - Real(1)) > Real(1e-4))
        throw ArgError("ce_with_logits: target must sum to 1");
    const auto& vv = v.values();
    Real mx = vv[0];
    for (Real x : vv) mx = std::max(mx, x);
    Real sum = 0;
    for (Real x : vv) sum += std::exp(x - mx);
    const Real lse = std::log(sum) + mx;
    Real loss = lse;
    for (size_t i = 0; i < vv.size(); ++i) loss -= target[i] * vv[i];
    auto vn = v.node();
    return detail::make_op<Real>({1}, std::vector<Real>{loss}, "ce_with_logits", {vn},
                                 [vn, target, lse](TapeNode<Real>& node) {
                                     vn->ensure_grad();
                                     const Real g = node.grad[0];
                                     for (size_t i = 0; i < vn->value.size(); ++i) {
                                         const Real p = std::exp(vn->value[i] - lse);
                                         vn->grad[i] += g * (p - target[i]);
                                     }
                                 });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Gradients accumulate (sum) across
// all paths; the traversed tape is cleared afterward. Leaf gradients persist
// until zero_grad().
template <typename Real>
void backward(const Tensor<Real>& loss) {
    if (loss.size() != 1) throw ArgError("backward: loss must be scalar");
    auto* root = loss.node().get();
    if (!root->requires_grad) return;

    std::vector<TapeNode<Real>*> order;
    std::unordered_set<TapeNode<Real>*> visited{root};
    struct Frame {
        TapeNode<Real>* n;
        size_t next;
    };
    std::vector<Frame> stack{{root, 0}};
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            TapeNode<Real>* p = f.n->parents[f.next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TapeNode<Real>* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
    for (TapeNode<Real>* n : order) {
        n->backprop = nullptr;
        n->parents.clear();
    }
}

// ---------------------------------------------------------------------------
// Adam optimizer (decoupled weight decay applied before the moment update)
// ---------------------------------------------------------------------------

template <typename Real>
struct AdamState {
    Real lr = Real(1e-4);
    Real weight_decay = Real(1e-3);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
    long step_count = 0;
    std::vector<std::vector<Real>> first_moment;
    std::vector<std::vector<Real>> second_moment;
};

template <typename Real>
void adam_step(std::vector<Tensor<Real>>& params, AdamState<Real>& st) {
    if (st.first_moment.empty()) {
        for (const auto& p : params) {
            st.first_moment.emplace_back(p.size(), Real(0));
            st.second_moment.emplace_back(p.size(), Real(0));
        }
    }
    if (st.first_moment.size() != params.size())
        throw ShapeError("adam_step: state tracks a different parameter count");
    ++st.step_count;
    const Real bc1 = Real(1) - std::pow(st.beta1, static_cast<Real>(st.step_count));
    const Real bc2 = Real(1) - std::pow(st.beta2, static_cast<Real>(st.step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        auto& m = st.first_moment[pi];
        auto& v = st.second_moment[pi];
        if (m.size() != p.size())
            throw ShapeError("adam_step: moment shape mismatch for parameter " + std::to_string(pi));
        p.node()->ensure_grad();
        const auto& g = p.node()->grad;
        auto& w = p.values();
        for (size_t i = 0; i < w.size(); ++i) {
            w[i] -= st.lr * st.weight_decay * w[i];
            m[i] = st.beta1 * m[i] + (Real(1) - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (Real(1) - st.beta2) * g[i] * g[i];
            const Real mhat = m[i] / bc1;
            const Real vhat = v[i] / bc2;
            w[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

// Central differences against the analytic gradient of fn() (a scalar loss
// closed over `params`). Returns max over coordinates of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename Real>
Real grad_check(const std::function<Tensor<Real>()>& fn, std::vector<Tensor<Real>> params, Real eps) {
    for (auto& p : params) p.zero_grad();
    auto loss = fn();
    if (loss.size() != 1) throw ArgError("grad_check: fn must return a scalar");
    backward(loss);
    std::vector<std::vector<Real>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.grad());

    Real max_rel = 0;
    NoGradGuard ng;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const Real saved = vals[i];
            vals[i] = saved + eps;
            const Real f1 = fn().values()[0];
            vals[i] = saved - eps;
            const Real f2 = fn().values()[0];
            vals[i] = saved;
            const Real numeric = (f1 - f2) / (Real(2) * eps);
            const Real a = analytic[pi][i];
            const Real denom = std::max(Real(1e-8), std::abs(a) + std::abs(numeric));
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

} // namespace jcd
