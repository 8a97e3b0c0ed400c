// Forward and backward math for every layer: dense, convolution, transpose
// convolution, batch norm, pooling, activations, dropout and the three
// cross-entropy losses. Convolution is cross-correlation (no kernel flip).
//
// conv2d_input_grad is the exact linear adjoint of conv2d_forward for the
// same kernel/stride/padding, and transpose convolution is defined through
// it, so the adjoint identity holds by construction.
//
// Parallel loops only ever split writes element-wise (samples for conv,
// kernel rows for weight gradients), so accumulation order per output value
// is fixed and results are bit-identical for any thread count.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <type_traits>
#include <vector>

#include "synthaug/rng.hpp"
#include "synthaug/tensor.hpp"

namespace synthaug {

enum class Padding { Same, Valid };

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, Padding pad) {
    if (pad == Padding::Same) return (in + stride - 1) / stride;  // ceil(in/stride)
    if (in < k) throw ShapeError("valid convolution: window " + std::to_string(k) +
                                 " larger than input extent " + std::to_string(in));
    return (in - k) / stride + 1;
}

inline std::ptrdiff_t conv_pad_before(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                                      Padding pad) {
    if (pad == Padding::Valid) return 0;
    const std::ptrdiff_t total =
        std::max<std::ptrdiff_t>(std::ptrdiff_t((out - 1) * stride + k) - std::ptrdiff_t(in), 0);
    return total / 2;
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

// C[m,n] = A[m,k] * B[k,n]
template <typename Real>
void matmul(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(m); ++i) {
        Real* crow = c + std::size_t(i) * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = Real(0);
        const Real* arow = a + std::size_t(i) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const Real av = arow[kk];
            const Real* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] = A^T[m,k] * B[k,n] where A is stored [k,m]
template <typename Real>
void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(m); ++i) {
        Real* crow = c + std::size_t(i) * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = Real(0);
        for (std::size_t kk = 0; kk < k; ++kk) {
            const Real av = a[kk * m + std::size_t(i)];
            const Real* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] = A[m,k] * B^T[k,n] where B is stored [n,k]
template <typename Real>
void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(m); ++i) {
        const Real* arow = a + std::size_t(i) * k;
        Real* crow = c + std::size_t(i) * n;
        for (std::size_t j = 0; j < n; ++j) {
            const Real* brow = b + j * k;
            Real acc = Real(0);
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = acc;
        }
    }
}

// y = x W + b, x [n,din], W [din,dout], b [dout]
template <typename Real>
Tensor<Real> dense_forward(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
    if (b.numel() != w.dim(1))
        throw ShapeError("dense: bias " + shape_str(b.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
    const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(1);
    Tensor<Real> y({n, dout});
    matmul(x.data(), w.data(), y.data(), n, din, dout);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dout; ++j) y.at2(i, j) += b[j];
    return y;
}

// ---------------------------------------------------------------------------
// convolution primitives (NHWC, kernel [kh,kw,ci,co], bias-free)
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> conv2d_forward(const Tensor<Real>& x, const Tensor<Real>& k, std::size_t stride, Padding pad) {
    if (x.rank() != 4 || k.rank() != 4)
        throw ShapeError("conv2d expects NHWC input and [kh,kw,ci,co] kernel, got " + shape_str(x.shape()) +
                         " and " + shape_str(k.shape()));
    if (x.dim(3) != k.dim(2))
        throw ShapeError("conv2d: input channels " + shape_str(x.shape()) + " do not match kernel " +
                         shape_str(k.shape()));
    if (stride == 0) throw ValueError("conv2d: stride must be positive");
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
    const std::size_t kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
    const std::size_t oh = conv_out_extent(h, kh, stride, pad);
    const std::size_t ow = conv_out_extent(w, kw, stride, pad);
    const std::ptrdiff_t pt = conv_pad_before(h, oh, kh, stride, pad);
    const std::ptrdiff_t pl = conv_pad_before(w, ow, kw, stride, pad);

    Tensor<Real> y({n, oh, ow, co});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ni = 0; ni < std::ptrdiff_t(n); ++ni) {
        const Real* xs = x.data() + std::size_t(ni) * h * w * ci;
        Real* ys = y.data() + std::size_t(ni) * oh * ow * co;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                Real* acc = ys + (oy * ow + ox) * co;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - pt;
                    if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - pl;
                        if (ix < 0 || ix >= std::ptrdiff_t(w)) continue;
                        const Real* xrow = xs + (std::size_t(iy) * w + std::size_t(ix)) * ci;
                        const Real* krow = k.data() + ((ky * kw + kx) * ci) * co;
                        for (std::size_t c = 0; c < ci; ++c) {
                            const Real xv = xrow[c];
                            const Real* kr = krow + c * co;
                            for (std::size_t o = 0; o < co; ++o) acc[o] += xv * kr[o];
                        }
                    }
                }
            }
        }
    }
    return y;
}

// Adjoint of conv2d_forward: maps a [n,oh,ow,co] cotangent back to [n,h,w,ci].
template <typename Real>
Tensor<Real> conv2d_input_grad(const Tensor<Real>& gy, const Tensor<Real>& k, std::size_t stride, Padding pad,
                               std::size_t h, std::size_t w) {
    if (gy.rank() != 4 || k.rank() != 4 || gy.dim(3) != k.dim(3))
        throw ShapeError("conv2d input grad: cotangent " + shape_str(gy.shape()) +
                         " does not match kernel " + shape_str(k.shape()));
    const std::size_t n = gy.dim(0), oh = gy.dim(1), ow = gy.dim(2), co = gy.dim(3);
    const std::size_t kh = k.dim(0), kw = k.dim(1), ci = k.dim(2);
    if (conv_out_extent(h, kh, stride, pad) != oh || conv_out_extent(w, kw, stride, pad) != ow)
        throw ShapeError("conv2d input grad: cotangent " + shape_str(gy.shape()) +
                         " inconsistent with input extent " + std::to_string(h) + "x" + std::to_string(w));
    const std::ptrdiff_t pt = conv_pad_before(h, oh, kh, stride, pad);
    const std::ptrdiff_t pl = conv_pad_before(w, ow, kw, stride, pad);

    // kernel transposed to [kh,kw,co,ci] for a contiguous inner loop
    Tensor<Real> kt({kh, kw, co, ci});
    for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx)
            for (std::size_t c = 0; c < ci; ++c)
                for (std::size_t o = 0; o < co; ++o)
                    kt[((ky * kw + kx) * co + o) * ci + c] = k[((ky * kw + kx) * ci + c) * co + o];

    Tensor<Real> gx({n, h, w, ci});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ni = 0; ni < std::ptrdiff_t(n); ++ni) {
        const Real* gys = gy.data() + std::size_t(ni) * oh * ow * co;
        Real* gxs = gx.data() + std::size_t(ni) * h * w * ci;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const Real* grow = gys + (oy * ow + ox) * co;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - pt;
                    if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - pl;
                        if (ix < 0 || ix >= std::ptrdiff_t(w)) continue;
                        Real* gxrow = gxs + (std::size_t(iy) * w + std::size_t(ix)) * ci;
                        const Real* ktrow = kt.data() + ((ky * kw + kx) * co) * ci;
                        for (std::size_t o = 0; o < co; ++o) {
                            const Real gv = grow[o];
                            const Real* kr = ktrow + o * ci;
                            for (std::size_t c = 0; c < ci; ++c) gxrow[c] += gv * kr[c];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

template <typename Real>
Tensor<Real> conv2d_kernel_grad(const Tensor<Real>& x, const Tensor<Real>& gy, std::size_t kh, std::size_t kw,
                                std::size_t stride, Padding pad) {
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
    const std::size_t oh = gy.dim(1), ow = gy.dim(2), co = gy.dim(3);
    const std::ptrdiff_t pt = conv_pad_before(h, oh, kh, stride, pad);
    const std::ptrdiff_t pl = conv_pad_before(w, ow, kw, stride, pad);

    Tensor<Real> gk({kh, kw, ci, co});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t flat = 0; flat < std::ptrdiff_t(kh * kw * ci); ++flat) {
        const std::size_t ky = std::size_t(flat) / (kw * ci);
        const std::size_t kx = (std::size_t(flat) / ci) % kw;
        const std::size_t c = std::size_t(flat) % ci;
        Real* gkrow = gk.data() + std::size_t(flat) * co;
        for (std::size_t ni = 0; ni < n; ++ni) {
            const Real* xs = x.data() + ni * h * w * ci;
            const Real* gys = gy.data() + ni * oh * ow * co;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - pt;
                if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - pl;
                    if (ix < 0 || ix >= std::ptrdiff_t(w)) continue;
                    const Real xv = xs[(std::size_t(iy) * w + std::size_t(ix)) * ci + c];
                    const Real* grow = gys + (oy * ow + ox) * co;
                    for (std::size_t o = 0; o < co; ++o) gkrow[o] += xv * grow[o];
                }
            }
        }
    }
    return gk;
}

// Transpose convolution, "same" padding: [n,h,w,ci] -> [n,h*s,w*s,co].
// The kernel is stored conv-oriented as [kh,kw,co,ci]; the forward pass is
// the adjoint of conv2d([n,h*s,w*s,co]) -> [n,h,w,ci].
template <typename Real>
Tensor<Real> conv_transpose2d_forward(const Tensor<Real>& x, const Tensor<Real>& k, std::size_t stride) {
    if (x.rank() != 4 || k.rank() != 4)
        throw ShapeError("conv_transpose2d expects NHWC input and [kh,kw,co,ci] kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(k.shape()));
    if (x.dim(3) != k.dim(3))
        throw ShapeError("conv_transpose2d: input channels " + shape_str(x.shape()) +
                         " do not match kernel " + shape_str(k.shape()));
    if (stride == 0 || stride > 2) throw ValueError("conv_transpose2d: stride must be 1 or 2");
    return conv2d_input_grad(x, k, stride, Padding::Same, x.dim(1) * stride, x.dim(2) * stride);
}

template <typename Real>
Tensor<Real> channel_bias_forward(const Tensor<Real>& x, const Tensor<Real>& b) {
    const std::size_t c = x.dim(x.rank() - 1);
    if (b.numel() != c)
        throw ShapeError("channel bias " + shape_str(b.shape()) + " does not match input " +
                         shape_str(x.shape()));
    Tensor<Real> y = x;
    Real* p = y.data();
    const std::size_t rows = y.numel() / c;
    for (std::size_t r = 0; r < rows; ++r, p += c)
        for (std::size_t j = 0; j < c; ++j) p[j] += b[j];
    return y;
}

// ---------------------------------------------------------------------------
// batch normalization (per trailing channel axis)
// ---------------------------------------------------------------------------

enum class BnMode { Train, Infer };

template <typename Real>
struct BnCache {
    Tensor<Real> mean;     // per channel batch mean
    Tensor<Real> inv_std;  // 1/sqrt(var + eps)
    Tensor<Real> xhat;     // normalized input, pre-affine
};

template <typename Real>
Tensor<Real> batch_norm_forward(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                                Tensor<Real>& running_mean, Tensor<Real>& running_var, BnMode mode,
                                Real momentum, Real eps, bool update_running, std::type_identity_t<BnCache<Real>*> cache) {
    const std::size_t c = x.dim(x.rank() - 1);
    if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
        throw ShapeError("batch_norm: per-channel parameters do not match input " + shape_str(x.shape()));
    const std::size_t rows = x.numel() / c;
    Tensor<Real> y(x.shape());

    if (mode == BnMode::Infer) {
        for (std::size_t r = 0; r < rows; ++r) {
            const Real* xr = x.data() + r * c;
            Real* yr = y.data() + r * c;
            for (std::size_t j = 0; j < c; ++j) {
                const Real inv = Real(1) / std::sqrt(running_var[j] + eps);
                yr[j] = gamma[j] * (xr[j] - running_mean[j]) * inv + beta[j];
            }
        }
        return y;
    }

    Tensor<Real> mean({c}), var({c});
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = x.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) mean[j] += xr[j];
    }
    for (std::size_t j = 0; j < c; ++j) mean[j] /= Real(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = x.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) {
            const Real d = xr[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < c; ++j) var[j] /= Real(rows);

    Tensor<Real> inv_std({c});
    for (std::size_t j = 0; j < c; ++j) inv_std[j] = Real(1) / std::sqrt(var[j] + eps);

    Tensor<Real> xhat(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = x.data() + r * c;
        Real* hr = xhat.data() + r * c;
        Real* yr = y.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) {
            hr[j] = (xr[j] - mean[j]) * inv_std[j];
            yr[j] = gamma[j] * hr[j] + beta[j];
        }
    }

    if (update_running) {
        for (std::size_t j = 0; j < c; ++j) {
            running_mean[j] = momentum * running_mean[j] + (Real(1) - momentum) * mean[j];
            running_var[j] = momentum * running_var[j] + (Real(1) - momentum) * var[j];
        }
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->xhat = std::move(xhat);
    }
    return y;
}

template <typename Real>
void batch_norm_backward(const Tensor<Real>& gy, const Tensor<Real>& gamma, const BnCache<Real>& cache,
                         Tensor<Real>& gx, Tensor<Real>& ggamma, Tensor<Real>& gbeta) {
    const std::size_t c = gamma.numel();
    const std::size_t rows = gy.numel() / c;
    ggamma = Tensor<Real>({c});
    gbeta = Tensor<Real>({c});
    Tensor<Real> sum_gh({c});  // sum of gy*gamma over rows
    Tensor<Real> sum_ghx({c}); // sum of gy*gamma*xhat over rows
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* gr = gy.data() + r * c;
        const Real* hr = cache.xhat.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) {
            ggamma[j] += gr[j] * hr[j];
            gbeta[j] += gr[j];
            const Real gh = gr[j] * gamma[j];
            sum_gh[j] += gh;
            sum_ghx[j] += gh * hr[j];
        }
    }
    gx = Tensor<Real>(gy.shape());
    const Real inv_rows = Real(1) / Real(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* gr = gy.data() + r * c;
        const Real* hr = cache.xhat.data() + r * c;
        Real* xr = gx.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) {
            const Real gh = gr[j] * gamma[j];
            xr[j] = cache.inv_std[j] * (gh - inv_rows * sum_gh[j] - hr[j] * inv_rows * sum_ghx[j]);
        }
    }
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> max_pool_forward(const Tensor<Real>& x, std::size_t window, std::size_t stride,
                              std::vector<std::size_t>* argmax) {
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (window > h || window > w)
        throw ShapeError("max_pool: window " + std::to_string(window) + " larger than input " +
                         shape_str(x.shape()));
    const std::size_t oh = (h - window) / stride + 1;
    const std::size_t ow = (w - window) / stride + 1;
    Tensor<Real> y({n, oh, ow, c});
    if (argmax) argmax->assign(y.numel(), 0);
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    Real best = -std::numeric_limits<Real>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            const std::size_t idx =
                                ((ni * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
                            if (x[idx] > best) {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    const std::size_t oidx = ((ni * oh + oy) * ow + ox) * c + ch;
                    y[oidx] = best;
                    if (argmax) (*argmax)[oidx] = best_idx;
                }
    return y;
}

template <typename Real>
Tensor<Real> global_avg_pool_forward(const Tensor<Real>& x) {
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    Tensor<Real> y({n, c});
    for (std::size_t ni = 0; ni < n; ++ni) {
        Real* yr = y.data() + ni * c;
        const Real* xs = x.data() + ni * h * w * c;
        for (std::size_t p = 0; p < h * w; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) yr[ch] += xs[p * c + ch];
        for (std::size_t ch = 0; ch < c; ++ch) yr[ch] /= Real(h * w);
    }
    return y;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

enum class Activation { Relu, LeakyRelu, Tanh, Sigmoid, Softmax };

template <typename Real>
Tensor<Real> activation_forward(const Tensor<Real>& x, Activation kind, Real slope = Real(0.2)) {
    Tensor<Real> y(x.shape());
    switch (kind) {
        case Activation::Relu:
            for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
            break;
        case Activation::LeakyRelu:
            for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > Real(0) ? x[i] : slope * x[i];
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < x.numel(); ++i) y[i] = Real(1) / (Real(1) + std::exp(-x[i]));
            break;
        case Activation::Softmax: {
            const std::size_t c = x.dim(x.rank() - 1);
            const std::size_t rows = x.numel() / c;
            for (std::size_t r = 0; r < rows; ++r) {
                const Real* xr = x.data() + r * c;
                Real* yr = y.data() + r * c;
                Real mx = xr[0];
                for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
                Real sum = Real(0);
                for (std::size_t j = 0; j < c; ++j) {
                    yr[j] = std::exp(xr[j] - mx);
                    sum += yr[j];
                }
                for (std::size_t j = 0; j < c; ++j) yr[j] /= sum;
            }
            break;
        }
    }
    return y;
}

template <typename Real>
Tensor<Real> activation_backward(const Tensor<Real>& gy, const Tensor<Real>& x, const Tensor<Real>& y,
                                 Activation kind, Real slope = Real(0.2)) {
    Tensor<Real> gx(gy.shape());
    switch (kind) {
        case Activation::Relu:
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] = x[i] > Real(0) ? gy[i] : Real(0);
            break;
        case Activation::LeakyRelu:
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] = x[i] > Real(0) ? gy[i] : slope * gy[i];
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * (Real(1) - y[i] * y[i]);
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * y[i] * (Real(1) - y[i]);
            break;
        case Activation::Softmax: {
            const std::size_t c = y.dim(y.rank() - 1);
            const std::size_t rows = y.numel() / c;
            for (std::size_t r = 0; r < rows; ++r) {
                const Real* gr = gy.data() + r * c;
                const Real* yr = y.data() + r * c;
                Real* xr = gx.data() + r * c;
                Real dot = Real(0);
                for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
                for (std::size_t j = 0; j < c; ++j) xr[j] = yr[j] * (gr[j] - dot);
            }
            break;
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// dropout (inverted: survivors scaled at train time, inference is identity)
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> dropout_forward(const Tensor<Real>& x, std::type_identity_t<Real> p, bool train, Rng& rng,
                             std::type_identity_t<Tensor<Real>*> mask_out) {
    if (p < Real(0) || p >= Real(1)) throw ValueError("dropout: probability must be in [0,1)");
    if (!train || p == Real(0)) {
        if (mask_out) {
            *mask_out = Tensor<Real>(x.shape());
            mask_out->fill(Real(1));
        }
        return x;
    }
    const Real scale = Real(1) / (Real(1) - p);
    Tensor<Real> mask(x.shape());
    Tensor<Real> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const bool keep = rng.uniform() >= double(p);
        mask[i] = keep ? scale : Real(0);
        y[i] = x[i] * mask[i];
    }
    if (mask_out) *mask_out = std::move(mask);
    return y;
}

// ---------------------------------------------------------------------------
// losses (probability inputs, clamped to [1e-7, 1-1e-7] before logs)
// ---------------------------------------------------------------------------

enum class Loss { Bce, CategoricalCe, SparseCategoricalCe };

inline constexpr double kProbClamp = 1e-7;

template <typename Real>
Real clamp_prob(Real p) {
    const Real lo = Real(kProbClamp), hi = Real(1) - Real(kProbClamp);
    return p < lo ? lo : (p > hi ? hi : p);
}

template <typename Real>
Real bce_loss(const Tensor<Real>& pred, const Tensor<Real>& target,
              std::type_identity_t<Tensor<Real>*> gpred) {
    if (!pred.same_shape(target))
        throw ShapeError("bce: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
    const std::size_t n = pred.numel();
    Real loss = Real(0);
    if (gpred) *gpred = Tensor<Real>(pred.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const Real p = clamp_prob(pred[i]);
        const Real t = target[i];
        loss += -(t * std::log(p) + (Real(1) - t) * std::log(Real(1) - p));
        if (gpred) {
            const bool interior = pred[i] > Real(kProbClamp) && pred[i] < Real(1) - Real(kProbClamp);
            (*gpred)[i] = interior ? (-t / p + (Real(1) - t) / (Real(1) - p)) / Real(n) : Real(0);
        }
    }
    return loss / Real(n);
}

template <typename Real>
Real categorical_ce_loss(const Tensor<Real>& pred, const Tensor<Real>& onehot,
                         std::type_identity_t<Tensor<Real>*> gpred) {
    if (!pred.same_shape(onehot) || pred.rank() != 2)
        throw ShapeError("categorical_ce: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(onehot.shape()));
    const std::size_t n = pred.dim(0), c = pred.dim(1);
    Real loss = Real(0);
    if (gpred) *gpred = Tensor<Real>(pred.shape());
    for (std::size_t i = 0; i < n * c; ++i) {
        const Real p = clamp_prob(pred[i]);
        loss += -onehot[i] * std::log(p);
        if (gpred) {
            const bool interior = pred[i] > Real(kProbClamp) && pred[i] < Real(1) - Real(kProbClamp);
            (*gpred)[i] = interior ? -onehot[i] / p / Real(n) : Real(0);
        }
    }
    return loss / Real(n);
}

template <typename Real>
Real sparse_ce_loss(const Tensor<Real>& pred, const std::vector<std::size_t>& labels,
                    std::type_identity_t<Tensor<Real>*> gpred) {
    if (pred.rank() != 2 || labels.size() != pred.dim(0))
        throw ShapeError("sparse_ce: prediction " + shape_str(pred.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    const std::size_t n = pred.dim(0), c = pred.dim(1);
    Real loss = Real(0);
    if (gpred) *gpred = Tensor<Real>(pred.shape());
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= c)
            throw ValueError("sparse_ce: label " + std::to_string(labels[i]) + " out of range for " +
                             std::to_string(c) + " classes");
        const Real praw = pred.at2(i, labels[i]);
        const Real p = clamp_prob(praw);
        loss += -std::log(p);
        if (gpred) {
            const bool interior = praw > Real(kProbClamp) && praw < Real(1) - Real(kProbClamp);
            gpred->at2(i, labels[i]) = interior ? -Real(1) / p / Real(n) : Real(0);
        }
    }
    return loss / Real(n);
}

}  // namespace synthaug
