#pragma once

#include <cmath>

#include "calica/nn/tensor.hpp"

namespace calica::nn {

namespace detail {

// C(MxN) += A(MxK) * B(KxN)
template <class T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<size_t>(i) * k;
        T* ci = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = ai[p];
            const T* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C(MxK) += A(MxN) * B(KxN)^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<size_t>(i) * n;
        T* ci = c + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T* bp = b + static_cast<size_t>(p) * n;
            T sum = T(0);
            for (int j = 0; j < n; ++j) sum += ai[j] * bp[j];
            ci[p] += sum;
        }
    }
}

// C(KxN) += A(MxK)^T * B(MxN)
template <class T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<size_t>(i) * k;
        const T* bi = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = ai[p];
            T* cp = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

template <class T>
void im2col(const T* img, int channels, int height, int width, int k, int stride,
            int pad, int out_h, int out_w, T* cols) {
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + ((static_cast<size_t>(c) * k + ky) * k + kx) *
                                    (static_cast<size_t>(out_h) * out_w);
                for (int oy = 0; oy < out_h; ++oy) {
                    int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < out_w; ++ox) {
                        int ix = ox * stride - pad + kx;
                        bool inside = iy >= 0 && iy < height && ix >= 0 && ix < width;
                        row[static_cast<size_t>(oy) * out_w + ox] =
                            inside ? img[(static_cast<size_t>(c) * height + iy) * width + ix]
                                   : T(0);
                    }
                }
            }
}

template <class T>
void col2im_accumulate(const T* cols, int channels, int height, int width, int k,
                       int stride, int pad, int out_h, int out_w, T* img) {
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + ((static_cast<size_t>(c) * k + ky) * k + kx) *
                                          (static_cast<size_t>(out_h) * out_w);
                for (int oy = 0; oy < out_h; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    for (int ox = 0; ox < out_w; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= width) continue;
                        img[(static_cast<size_t>(c) * height + iy) * width + ix] +=
                            row[static_cast<size_t>(oy) * out_w + ox];
                    }
                }
            }
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace detail

/// 2D convolution (cross-correlation convention), NCHW input, OCkk weight,
/// per-output-channel bias. Odd k; output size must divide evenly.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  int stride, int pad) {
    using detail::shape_str;
    if (x.shape().size() != 4) throw UserError("conv2d: input must be NCHW, got " + shape_str(x.shape()));
    if (w.shape().size() != 4) throw UserError("conv2d: weight must be OCkk, got " + shape_str(w.shape()));
    const int batch = x.dim(0), in_c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
    const int out_c = w.dim(0), k = w.dim(2);
    if (w.dim(1) != in_c)
        throw UserError("conv2d: weight channels " + std::to_string(w.dim(1)) +
                        " do not match input channels " + std::to_string(in_c));
    if (w.dim(3) != k || k % 2 == 0) throw UserError("conv2d: kernel must be square with odd size");
    if (b.shape().size() != 1 || b.dim(0) != out_c)
        throw UserError("conv2d: bias must have " + std::to_string(out_c) + " entries");
    if (stride < 1) throw UserError("conv2d: stride must be >= 1");
    // Floor semantics: trailing rows/columns that do not fill a stride step
    // are dropped, the standard convention for strided convolution.
    const int out_h = (in_h + 2 * pad - k) / stride + 1;
    const int out_w = (in_w + 2 * pad - k) / stride + 1;
    if (in_h + 2 * pad - k < 0 || in_w + 2 * pad - k < 0 || out_h <= 0 || out_w <= 0)
        throw UserError("conv2d: empty output for input " + shape_str(x.shape()));

    const int patch = in_c * k * k;
    const size_t plane = static_cast<size_t>(out_h) * out_w;
    std::vector<T> value(static_cast<size_t>(batch) * out_c * plane);
    std::vector<T> cols(static_cast<size_t>(patch) * plane);
    for (int n = 0; n < batch; ++n) {
        detail::im2col(x.values().data() + static_cast<size_t>(n) * in_c * in_h * in_w,
                       in_c, in_h, in_w, k, stride, pad, out_h, out_w, cols.data());
        T* out = value.data() + static_cast<size_t>(n) * out_c * plane;
        for (int o = 0; o < out_c; ++o)
            std::fill(out + o * plane, out + (o + 1) * plane, b.values()[o]);
        detail::gemm_nn(w.values().data(), cols.data(), out, out_c, patch,
                        static_cast<int>(plane));
    }

    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    auto backward = [xn, wn, bn, batch, in_c, in_h, in_w, out_c, k, stride, pad, out_h,
                     out_w, patch, plane](TensorNode<T>& self) {
        std::vector<T> cols(static_cast<size_t>(patch) * plane);
        std::vector<T> dcols(static_cast<size_t>(patch) * plane);
        for (int n = 0; n < batch; ++n) {
            const T* dy = self.grad.data() + static_cast<size_t>(n) * out_c * plane;
            if (bn->needs_grad)
                for (int o = 0; o < out_c; ++o) {
                    T s = T(0);
                    for (size_t j = 0; j < plane; ++j) s += dy[o * plane + j];
                    bn->grad[o] += s;
                }
            if (wn->needs_grad || xn->needs_grad)
                detail::im2col(xn->value.data() + static_cast<size_t>(n) * in_c * in_h * in_w,
                               in_c, in_h, in_w, k, stride, pad, out_h, out_w, cols.data());
            if (wn->needs_grad)
                detail::gemm_nt(dy, cols.data(), wn->grad.data(), out_c,
                                static_cast<int>(plane), patch);
            if (xn->needs_grad) {
                std::fill(dcols.begin(), dcols.end(), T(0));
                detail::gemm_tn(wn->value.data(), dy, dcols.data(), out_c, patch,
                                static_cast<int>(plane));
                detail::col2im_accumulate(
                    dcols.data(), in_c, in_h, in_w, k, stride, pad, out_h, out_w,
                    xn->grad.data() + static_cast<size_t>(n) * in_c * in_h * in_w);
            }
        }
    };
    return TensorT<T>::make_op({batch, out_c, out_h, out_w}, std::move(value),
                               {x, w, b}, backward);
}

/// PReLU with one trainable slope per channel (dim 1 of NCHW, or the column
/// dimension of NxD input).
template <class T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& slope) {
    const auto& shape = x.shape();
    if (shape.size() != 4 && shape.size() != 2)
        throw UserError("prelu: input must be NCHW or NxD");
    const int channels = shape[1];
    if (slope.shape().size() != 1 || slope.dim(0) != channels)
        throw UserError("prelu: slope must have one entry per channel");
    const size_t inner = x.numel() / (static_cast<size_t>(shape[0]) * channels);

    std::vector<T> value(x.numel());
    const auto& xv = x.values();
    const auto& av = slope.values();
    for (size_t i = 0; i < xv.size(); ++i) {
        int c = static_cast<int>((i / inner) % channels);
        value[i] = xv[i] > T(0) ? xv[i] : av[c] * xv[i];
    }

    auto xn = x.node();
    auto an = slope.node();
    auto backward = [xn, an, channels, inner](TensorNode<T>& self) {
        const auto& g = self.grad;
        for (size_t i = 0; i < g.size(); ++i) {
            int c = static_cast<int>((i / inner) % channels);
            T xi = xn->value[i];
            if (xn->needs_grad) xn->grad[i] += g[i] * (xi > T(0) ? T(1) : an->value[c]);
            if (an->needs_grad && xi <= T(0)) an->grad[c] += g[i] * xi;
        }
    };
    return TensorT<T>::make_op(shape, std::move(value), {x, slope}, backward);
}

/// Global average pooling to 1x1 (any input resolution).
template <class T>
TensorT<T> adaptive_avg_pool(const TensorT<T>& x) {
    if (x.shape().size() != 4) throw UserError("adaptive_avg_pool: input must be NCHW");
    const int batch = x.dim(0), channels = x.dim(1);
    const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
    std::vector<T> value(static_cast<size_t>(batch) * channels);
    const auto& xv = x.values();
    for (size_t nc = 0; nc < value.size(); ++nc) {
        T s = T(0);
        const T* p = xv.data() + nc * plane;
        for (size_t i = 0; i < plane; ++i) s += p[i];
        value[nc] = s / static_cast<T>(plane);
    }
    auto xn = x.node();
    auto backward = [xn, plane](TensorNode<T>& self) {
        if (!xn->needs_grad) return;
        for (size_t nc = 0; nc < self.grad.size(); ++nc) {
            T g = self.grad[nc] / static_cast<T>(plane);
            T* p = xn->grad.data() + nc * plane;
            for (size_t i = 0; i < plane; ++i) p[i] += g;
        }
    };
    return TensorT<T>::make_op({batch, channels, 1, 1}, std::move(value), {x}, backward);
}

/// View an NCHW tensor as Nx(CHW).
template <class T>
TensorT<T> flatten2(const TensorT<T>& x) {
    if (x.shape().size() < 2) throw UserError("flatten2: rank must be >= 2");
    int batch = x.dim(0);
    int rest = static_cast<int>(x.numel()) / batch;
    auto xn = x.node();
    auto backward = [xn](TensorNode<T>& self) {
        if (!xn->needs_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    };
    return TensorT<T>::make_op({batch, rest}, std::vector<T>(x.values()), {x}, backward);
}

/// Affine map: y = x W^T + b with x NxD, W OxD, b O.
template <class T>
TensorT<T> fully_connected(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    using detail::shape_str;
    if (x.shape().size() != 2 || w.shape().size() != 2)
        throw UserError("fully_connected: x and w must be rank 2");
    const int batch = x.dim(0), in_d = x.dim(1), out_d = w.dim(0);
    if (w.dim(1) != in_d)
        throw UserError("fully_connected: weight " + shape_str(w.shape()) +
                        " does not match input " + shape_str(x.shape()));
    if (b.shape().size() != 1 || b.dim(0) != out_d)
        throw UserError("fully_connected: bias size mismatch");

    std::vector<T> value(static_cast<size_t>(batch) * out_d);
    for (int n = 0; n < batch; ++n)
        for (int o = 0; o < out_d; ++o)
            value[static_cast<size_t>(n) * out_d + o] = b.values()[o];
    detail::gemm_nt(x.values().data(), w.values().data(), value.data(), batch, in_d, out_d);

    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    auto backward = [xn, wn, bn, batch, in_d, out_d](TensorNode<T>& self) {
        const T* dy = self.grad.data();
        if (bn->needs_grad)
            for (int n = 0; n < batch; ++n)
                for (int o = 0; o < out_d; ++o)
                    bn->grad[o] += dy[static_cast<size_t>(n) * out_d + o];
        if (wn->needs_grad)
            detail::gemm_tn(dy, xn->value.data(), wn->grad.data(), batch, out_d, in_d);
        if (xn->needs_grad)
            detail::gemm_nn(dy, wn->value.data(), xn->grad.data(), batch, out_d, in_d);
    };
    return TensorT<T>::make_op({batch, out_d}, std::move(value), {x, w, b}, backward);
}

/// Smooth L1 (Huber), mean reduction. Target is treated as constant.
template <class T>
TensorT<T> smooth_l1(const TensorT<T>& pred, const TensorT<T>& target, T beta = T(1)) {
    if (pred.shape() != target.shape())
        throw UserError("smooth_l1: shape mismatch " + detail::shape_str(pred.shape()) +
                        " vs " + detail::shape_str(target.shape()));
    if (!(beta > T(0))) throw UserError("smooth_l1: beta must be positive");
    const auto& pv = pred.values();
    const auto& tv = target.values();
    T sum = T(0);
    for (size_t i = 0; i < pv.size(); ++i) {
        T d = pv[i] - tv[i];
        T ad = std::abs(d);
        sum += ad < beta ? T(0.5) * d * d / beta : ad - T(0.5) * beta;
    }
    const size_t count = pv.size();
    std::vector<T> value{sum / static_cast<T>(count)};

    auto pn = pred.node();
    auto tn = target.node();
    auto backward = [pn, tn, beta, count](TensorNode<T>& self) {
        if (!pn->needs_grad) return;
        T g = self.grad[0] / static_cast<T>(count);
        for (size_t i = 0; i < pn->value.size(); ++i) {
            T d = pn->value[i] - tn->value[i];
            T slope = std::abs(d) < beta ? d / beta : (d > T(0) ? T(1) : T(-1));
            pn->grad[i] += g * slope;
        }
    };
    return TensorT<T>::make_op({1}, std::move(value), {pred, target}, backward);
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape()) throw UserError("add: shape mismatch");
    std::vector<T> value(a.numel());
    for (size_t i = 0; i < value.size(); ++i) value[i] = a.values()[i] + b.values()[i];
    auto an = a.node();
    auto bn = b.node();
    auto backward = [an, bn](TensorNode<T>& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (an->needs_grad) an->grad[i] += self.grad[i];
            if (bn->needs_grad) bn->grad[i] += self.grad[i];
        }
    };
    return TensorT<T>::make_op(a.shape(), std::move(value), {a, b}, backward);
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    std::vector<T> value(a.numel());
    for (size_t i = 0; i < value.size(); ++i) value[i] = a.values()[i] * s;
    auto an = a.node();
    auto backward = [an, s](TensorNode<T>& self) {
        if (!an->needs_grad) return;
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
    };
    return TensorT<T>::make_op(a.shape(), std::move(value), {a}, backward);
}

/// Column slice of an NxD tensor.
template <class T>
TensorT<T> slice_cols(const TensorT<T>& x, int start, int len) {
    if (x.shape().size() != 2) throw UserError("slice_cols: input must be NxD");
    const int batch = x.dim(0), width = x.dim(1);
    if (start < 0 || len <= 0 || start + len > width)
        throw UserError("slice_cols: range out of bounds");
    std::vector<T> value(static_cast<size_t>(batch) * len);
    for (int n = 0; n < batch; ++n)
        for (int j = 0; j < len; ++j)
            value[static_cast<size_t>(n) * len + j] =
                x.values()[static_cast<size_t>(n) * width + start + j];
    auto xn = x.node();
    auto backward = [xn, batch, width, start, len](TensorNode<T>& self) {
        if (!xn->needs_grad) return;
        for (int n = 0; n < batch; ++n)
            for (int j = 0; j < len; ++j)
                xn->grad[static_cast<size_t>(n) * width + start + j] +=
                    self.grad[static_cast<size_t>(n) * len + j];
    };
    return TensorT<T>::make_op({batch, len}, std::move(value), {x}, backward);
}

/// Per-column constant scaling of an NxD tensor.
template <class T>
TensorT<T> col_scale(const TensorT<T>& x, std::vector<T> factors) {
    if (x.shape().size() != 2 || static_cast<size_t>(x.dim(1)) != factors.size())
        throw UserError("col_scale: factor count must match columns");
    const int batch = x.dim(0), width = x.dim(1);
    std::vector<T> value(x.numel());
    for (int n = 0; n < batch; ++n)
        for (int j = 0; j < width; ++j)
            value[static_cast<size_t>(n) * width + j] =
                x.values()[static_cast<size_t>(n) * width + j] * factors[j];
    auto xn = x.node();
    auto backward = [xn, batch, width, factors](TensorNode<T>& self) {
        if (!xn->needs_grad) return;
        for (int n = 0; n < batch; ++n)
            for (int j = 0; j < width; ++j)
                xn->grad[static_cast<size_t>(n) * width + j] +=
                    self.grad[static_cast<size_t>(n) * width + j] * factors[j];
    };
    return TensorT<T>::make_op(x.shape(), std::move(value), {x}, backward);
}

/// Row-wise L2 normalization (quaternion head output).
template <class T>
TensorT<T> normalize_rows(const TensorT<T>& x) {
    if (x.shape().size() != 2) throw UserError("normalize_rows: input must be NxK");
    const int batch = x.dim(0), width = x.dim(1);
    std::vector<T> value(x.numel());
    std::vector<T> norms(batch);
    for (int n = 0; n < batch; ++n) {
        T s = T(0);
        for (int j = 0; j < width; ++j) {
            T v = x.values()[static_cast<size_t>(n) * width + j];
            s += v * v;
        }
        T nrm = std::sqrt(s);
        if (!(nrm > T(1e-12))) throw UserError("normalize_rows: near-zero row norm");
        norms[n] = nrm;
        for (int j = 0; j < width; ++j)
            value[static_cast<size_t>(n) * width + j] =
                x.values()[static_cast<size_t>(n) * width + j] / nrm;
    }
    auto xn = x.node();
    auto backward = [xn, batch, width, norms](TensorNode<T>& self) {
        if (!xn->needs_grad) return;
        for (int n = 0; n < batch; ++n) {
            const T* g = self.grad.data() + static_cast<size_t>(n) * width;
            const T* xv = xn->value.data() + static_cast<size_t>(n) * width;
            T nrm = norms[n];
            T dot = T(0);
            for (int j = 0; j < width; ++j) dot += g[j] * xv[j] / nrm;
            for (int j = 0; j < width; ++j)
                xn->grad[static_cast<size_t>(n) * width + j] +=
                    (g[j] - (xv[j] / nrm) * dot) / nrm;
        }
    };
    return TensorT<T>::make_op(x.shape(), std::move(value), {x}, backward);
}

/// Mean over rows of 1 - |<pred, label>| for unit-norm rows; the
/// double-cover-invariant rotation loss. Label is constant.
template <class T>
TensorT<T> quat_distance_loss(const TensorT<T>& pred, const TensorT<T>& label) {
    if (pred.shape() != label.shape() || pred.shape().size() != 2 || pred.dim(1) != 4)
        throw UserError("quat_distance_loss: inputs must both be Nx4");
    const int batch = pred.dim(0);
    T sum = T(0);
    std::vector<T> dots(batch);
    for (int n = 0; n < batch; ++n) {
        T d = T(0);
        for (int j = 0; j < 4; ++j)
            d += pred.values()[static_cast<size_t>(n) * 4 + j] *
                 label.values()[static_cast<size_t>(n) * 4 + j];
        dots[n] = d;
        sum += T(1) - std::abs(d);
    }
    std::vector<T> value{sum / static_cast<T>(batch)};
    auto pn = pred.node();
    auto ln = label.node();
    auto backward = [pn, ln, batch, dots](TensorNode<T>& self) {
        if (!pn->needs_grad) return;
        T g = self.grad[0] / static_cast<T>(batch);
        for (int n = 0; n < batch; ++n) {
            T sgn = dots[n] >= T(0) ? T(1) : T(-1);
            for (int j = 0; j < 4; ++j)
                pn->grad[static_cast<size_t>(n) * 4 + j] -=
                    g * sgn * ln->value[static_cast<size_t>(n) * 4 + j];
        }
    };
    return TensorT<T>::make_op({1}, std::move(value), {pred, label}, backward);
}

/// Scalar projection sum(x * weights) with constant weights; used to reduce
/// arbitrary outputs to a scalar for gradient checking.
template <class T>
TensorT<T> weighted_sum(const TensorT<T>& x, const TensorT<T>& weights) {
    if (x.numel() != weights.numel()) throw UserError("weighted_sum: size mismatch");
    T sum = T(0);
    for (size_t i = 0; i < x.numel(); ++i) sum += x.values()[i] * weights.values()[i];
    auto xn = x.node();
    auto wn = weights.node();
    auto backward = [xn, wn](TensorNode<T>& self) {
        if (!xn->needs_grad) return;
        T g = self.grad[0];
        for (size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += g * wn->value[i];
    };
    return TensorT<T>::make_op({1}, {sum}, {x, weights}, backward);
}

/// Local correlation volume between two NCHW feature maps: channel-mean
/// inner products over displacements in [-D, D]^2, zero-padded. Output
/// channel (dy + D) * (2D + 1) + (dx + D).
template <class T>
TensorT<T> correlation_volume(const TensorT<T>& a, const TensorT<T>& b, int max_disp) {
    if (a.shape() != b.shape() || a.shape().size() != 4)
        throw UserError("correlation_volume: inputs must be identical NCHW shapes");
    if (max_disp < 1) throw UserError("correlation_volume: max displacement must be >= 1");
    const int batch = a.dim(0), channels = a.dim(1), height = a.dim(2), width = a.dim(3);
    const int side = 2 * max_disp + 1;
    const int out_c = side * side;
    const size_t plane = static_cast<size_t>(height) * width;

    std::vector<T> value(static_cast<size_t>(batch) * out_c * plane, T(0));
    const T inv_c = T(1) / static_cast<T>(channels);
    for (int n = 0; n < batch; ++n) {
        const T* av = a.values().data() + static_cast<size_t>(n) * channels * plane;
        const T* bv = b.values().data() + static_cast<size_t>(n) * channels * plane;
        T* out = value.data() + static_cast<size_t>(n) * out_c * plane;
        for (int dy = -max_disp; dy <= max_disp; ++dy)
            for (int dx = -max_disp; dx <= max_disp; ++dx) {
                T* slice = out + (static_cast<size_t>(dy + max_disp) * side + (dx + max_disp)) * plane;
                for (int y = 0; y < height; ++y) {
                    int by = y + dy;
                    if (by < 0 || by >= height) continue;
                    for (int x = 0; x < width; ++x) {
                        int bx = x + dx;
                        if (bx < 0 || bx >= width) continue;
                        T s = T(0);
                        for (int c = 0; c < channels; ++c)
                            s += av[(static_cast<size_t>(c) * height + y) * width + x] *
                                 bv[(static_cast<size_t>(c) * height + by) * width + bx];
                        slice[static_cast<size_t>(y) * width + x] = s * inv_c;
                    }
                }
            }
    }

    auto an = a.node();
    auto bn = b.node();
    auto backward = [an, bn, batch, channels, height, width, max_disp, side, plane,
                     inv_c](TensorNode<T>& self) {
        for (int n = 0; n < batch; ++n) {
            const T* av = an->value.data() + static_cast<size_t>(n) * channels * plane;
            const T* bv = bn->value.data() + static_cast<size_t>(n) * channels * plane;
            const T* g = self.grad.data() + static_cast<size_t>(n) * side * side * plane;
            for (int dy = -max_disp; dy <= max_disp; ++dy)
                for (int dx = -max_disp; dx <= max_disp; ++dx) {
                    const T* slice =
                        g + (static_cast<size_t>(dy + max_disp) * side + (dx + max_disp)) * plane;
                    for (int y = 0; y < height; ++y) {
                        int by = y + dy;
                        if (by < 0 || by >= height) continue;
                        for (int x = 0; x < width; ++x) {
                            int bx = x + dx;
                            if (bx < 0 || bx >= width) continue;
                            T gv = slice[static_cast<size_t>(y) * width + x] * inv_c;
                            if (gv == T(0)) continue;
                            for (int c = 0; c < channels; ++c) {
                                size_t ai = (static_cast<size_t>(c) * height + y) * width + x;
                                size_t bi = (static_cast<size_t>(c) * height + by) * width + bx;
                                if (an->needs_grad) an->grad[ai] += gv * bv[bi];
                                if (bn->needs_grad) bn->grad[bi] += gv * av[ai];
                            }
                        }
                    }
                }
        }
    };
    return TensorT<T>::make_op({batch, out_c, height, width}, std::move(value), {a, b},
                               backward);
}

}  // namespace calica::nn
