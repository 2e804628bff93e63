#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fenet/errors.hpp"
#include "fenet/parallel.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

namespace detail {

// Below this many multiply-adds a GEMM runs serially; the pool handoff would
// cost more than the loop.
constexpr std::size_t kParallelFlops = 200000;

inline bool gemm_parallel(std::size_t m, std::size_t n, std::size_t k) {
    return m >= 2 && m * n * k >= kParallelFlops;
}

// C[M,N] (+)= A[M,K] * B[N,K]^T   (dot kernel, rows independent)
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B,
             T* C, bool accumulate) {
    parallel_for_if(gemm_parallel(M, N, K), M, [&](std::size_t m) {
        const T* a = A + m * K;
        T* c = C + m * N;
        for (std::size_t n = 0; n < N; ++n) {
            const T* b = B + n * K;
            T acc = accumulate ? c[n] : T(0);
            for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
            c[n] = acc;
        }
    });
}

// C[M,N] (+)= A[M,K] * B[K,N]   (axpy kernel, rows independent)
template <typename T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B,
             T* C, bool accumulate) {
    parallel_for_if(gemm_parallel(M, N, K), M, [&](std::size_t m) {
        const T* a = A + m * K;
        T* c = C + m * N;
        if (!accumulate) std::fill(c, c + N, T(0));
        for (std::size_t k = 0; k < K; ++k) {
            const T av = a[k];
            if (av == T(0)) continue;
            const T* b = B + k * N;
            for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
        }
    });
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B,
             T* C, bool accumulate) {
    parallel_for_if(gemm_parallel(M, N, K), M, [&](std::size_t m) {
        T* c = C + m * N;
        if (!accumulate) std::fill(c, c + N, T(0));
        for (std::size_t k = 0; k < K; ++k) {
            const T av = A[k * M + m];
            if (av == T(0)) continue;
            const T* b = B + k * N;
            for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
        }
    });
}

template <typename T>
bool want_grad(const Tensor<T>& t) {
    return t.defined() && t.needs_grad();
}

template <typename T, typename... Rest>
bool want_grad(const Tensor<T>& t, const Rest&... rest) {
    return want_grad(t) || want_grad(rest...);
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) {
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a) +
                          " vs " + shape_str(b));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    detail::check_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (auto* tp = Tape<T>::active(); tp && detail::want_grad(a, b)) {
        out.mark_tracked();
        tp->record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            if (a.needs_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.needs_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
    detail::check_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (auto* tp = Tape<T>::active(); tp && detail::want_grad(a, b)) {
        out.mark_tracked();
        tp->record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            if (a.needs_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.needs_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
    detail::check_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (auto* tp = Tape<T>::active(); tp && detail::want_grad(a, b)) {
        out.mark_tracked();
        tp->record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            if (a.needs_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.data()[i];
            }
            if (b.needs_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.data()[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Tensor<T> a, T s) {
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out, s]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tensor<T> a) {
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i)
        out.data()[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (a.data()[i] > T(0)) ga[i] += go[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> a) {
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const T x = a.data()[i];
        if (x >= T(0)) {
            out.data()[i] = T(1) / (T(1) + std::exp(-x));
        } else {
            const T e = std::exp(x);
            out.data()[i] = e / (T(1) + e);
        }
    }
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) {
                const T y = out.data()[i];
                ga[i] += go[i] * y * (T(1) - y);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> tanh(Tensor<T> a) {
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::tanh(a.data()[i]);
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) {
                const T y = out.data()[i];
                ga[i] += go[i] * (T(1) - y * y);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape movement
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(Tensor<T> a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel()) {
        throw ConfigError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                          shape_str(new_shape));
    }
    Tensor<T> out(std::move(new_shape), a.value());
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad_or_empty();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        });
    }
    return out;
}

namespace detail {

// Copy with two axes swapped; layout [P, Da, Q, Db, R] -> [P, Db, Q, Da, R].
template <typename T>
void transpose_copy(const Shape& in_shape, std::size_t ax0, std::size_t ax1,
                    const T* in, T* out) {
    std::size_t p = 1, q = 1, r = 1;
    for (std::size_t i = 0; i < ax0; ++i) p *= in_shape[i];
    for (std::size_t i = ax0 + 1; i < ax1; ++i) q *= in_shape[i];
    for (std::size_t i = ax1 + 1; i < in_shape.size(); ++i) r *= in_shape[i];
    const std::size_t da = in_shape[ax0], db = in_shape[ax1];
    parallel_for_if(p * da * db * q * r >= kParallelFlops && p > 1, p, [&](std::size_t ip) {
        for (std::size_t ia = 0; ia < da; ++ia)
            for (std::size_t iq = 0; iq < q; ++iq)
                for (std::size_t ib = 0; ib < db; ++ib) {
                    const T* src = in + (((ip * da + ia) * q + iq) * db + ib) * r;
                    T* dst = out + (((ip * db + ib) * q + iq) * da + ia) * r;
                    for (std::size_t ir = 0; ir < r; ++ir) dst[ir] = src[ir];
                }
    });
}

template <typename T>
void transpose_add(const Shape& in_shape, std::size_t ax0, std::size_t ax1,
                   const T* in, T* out) {
    // in has the swapped layout; adds back into the original layout.
    std::size_t p = 1, q = 1, r = 1;
    for (std::size_t i = 0; i < ax0; ++i) p *= in_shape[i];
    for (std::size_t i = ax0 + 1; i < ax1; ++i) q *= in_shape[i];
    for (std::size_t i = ax1 + 1; i < in_shape.size(); ++i) r *= in_shape[i];
    const std::size_t da = in_shape[ax0], db = in_shape[ax1];
    for (std::size_t ip = 0; ip < p; ++ip)
        for (std::size_t ia = 0; ia < da; ++ia)
            for (std::size_t iq = 0; iq < q; ++iq)
                for (std::size_t ib = 0; ib < db; ++ib) {
                    const T* src = in + (((ip * db + ib) * q + iq) * da + ia) * r;
                    T* dst = out + (((ip * da + ia) * q + iq) * db + ib) * r;
                    for (std::size_t ir = 0; ir < r; ++ir) dst[ir] += src[ir];
                }
}

}  // namespace detail

template <typename T>
Tensor<T> transpose(Tensor<T> a, std::size_t ax0, std::size_t ax1) {
    if (ax0 >= a.rank() || ax1 >= a.rank()) {
        throw UsageError("transpose: axis out of range for " + shape_str(a.shape()));
    }
    if (ax0 == ax1) return reshape(a, a.shape());
    if (ax0 > ax1) std::swap(ax0, ax1);
    Shape out_shape = a.shape();
    std::swap(out_shape[ax0], out_shape[ax1]);
    Tensor<T> out(out_shape);
    detail::transpose_copy(a.shape(), ax0, ax1, a.data(), out.data());
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out, ax0, ax1]() mutable {
            if (!out.has_grad()) return;
            auto& ga = a.grad();
            detail::transpose_add(a.shape(), ax0, ax1, out.grad_or_empty().data(),
                                  ga.data());
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(std::vector<Tensor<T>> parts, std::size_t axis) {
    if (parts.empty()) throw UsageError("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) {
        throw UsageError("concat: axis out of range for " + shape_str(first));
    }
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != first.size()) {
            throw ConfigError("concat: rank mismatch " + shape_str(first) + " vs " +
                              shape_str(p.shape()));
        }
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i != axis && p.shape()[i] != first[i]) {
                throw ConfigError("concat: shape mismatch " + shape_str(first) +
                                  " vs " + shape_str(p.shape()));
            }
        }
        axis_total += p.shape()[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = axis_total;
    Tensor<T> out(out_shape);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t rows = p.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(p.data() + o * rows, p.data() + (o + 1) * rows,
                      out.data() + o * axis_total * inner + offset * inner);
        }
        offset += p.shape()[axis];
    }

    bool any = false;
    for (const auto& p : parts) any = any || p.needs_grad();
    if (auto* tp = Tape<T>::active(); tp && any) {
        out.mark_tracked();
        tp->record([parts, out, outer, inner, axis_total, axis]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            std::size_t offset = 0;
            for (auto& p : parts) {
                const std::size_t rows = p.shape()[axis] * inner;
                if (p.needs_grad()) {
                    T* gp = p.grad().data();
                    for (std::size_t o = 0; o < outer; ++o) {
                        const T* src = go + o * axis_total * inner + offset * inner;
                        T* dst = gp + o * rows;
                        for (std::size_t i = 0; i < rows; ++i) dst[i] += src[i];
                    }
                }
                offset += p.shape()[axis];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> narrow(Tensor<T> a, std::size_t axis, std::size_t start,
                 std::size_t len) {
    if (axis >= a.rank() || start + len > a.shape()[axis]) {
        throw UsageError("narrow: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for " +
                         shape_str(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[axis] = len;
    Tensor<T> out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    const std::size_t d = a.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(a.data() + (o * d + start) * inner,
                  a.data() + (o * d + start + len) * inner,
                  out.data() + o * len * inner);
    }
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out, outer, inner, d, start, len]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            T* ga = a.grad().data();
            for (std::size_t o = 0; o < outer; ++o) {
                const T* src = go + o * len * inner;
                T* dst = ga + (o * d + start) * inner;
                for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

// Removes `axis`, picking slice `idx`.
template <typename T>
Tensor<T> select(Tensor<T> a, std::size_t axis, std::size_t idx) {
    Tensor<T> sliced = narrow(a, axis, idx, 1);
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.shape()[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    return reshape(sliced, out_shape);
}

// ---------------------------------------------------------------------------
// Reductions and normalization
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> mean_axis(Tensor<T> a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw UsageError("mean_axis: axis out of range for " + shape_str(a.shape()));
    }
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.shape()[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor<T> out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    const std::size_t d = a.shape()[axis];
    const T inv = T(1) / T(d);
    for (std::size_t o = 0; o < outer; ++o) {
        T* dst = out.data() + o * inner;
        for (std::size_t k = 0; k < d; ++k) {
            const T* src = a.data() + (o * d + k) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
        for (std::size_t i = 0; i < inner; ++i) dst[i] *= inv;
    }
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out, outer, inner, d, inv]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            T* ga = a.grad().data();
            for (std::size_t o = 0; o < outer; ++o) {
                const T* src = go + o * inner;
                for (std::size_t k = 0; k < d; ++k) {
                    T* dst = ga + (o * d + k) * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(Tensor<T> a) {
    T acc = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out]() mutable {
            if (!out.has_grad()) return;
            const T g = out.grad_or_empty()[0];
            auto& ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return out;
}

// Normalization over the trailing axis; gamma/beta are optional affine
// parameters (undefined tensors mean plain normalization).
template <typename T>
Tensor<T> layer_norm(Tensor<T> a, Tensor<T> gamma,
                     Tensor<T> beta, T eps = T(1e-5)) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    if (gamma.defined() && gamma.numel() != d) {
        throw ConfigError("layer_norm: gamma shape " + shape_str(gamma.shape()) +
                          " does not match trailing dim " + std::to_string(d));
    }
    if (beta.defined() && beta.numel() != d) {
        throw ConfigError("layer_norm: beta shape " + shape_str(beta.shape()) +
                          " does not match trailing dim " + std::to_string(d));
    }
    Tensor<T> out(a.shape());
    Tensor<T> xhat(a.shape());
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.data() + r * d;
        T mu = T(0);
        for (std::size_t i = 0; i < d; ++i) mu += x[i];
        mu /= T(d);
        T var = T(0);
        for (std::size_t i = 0; i < d; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= T(d);
        const T istd = T(1) / std::sqrt(var + eps);
        inv_std[r] = istd;
        T* xh = xhat.data() + r * d;
        T* y = out.data() + r * d;
        for (std::size_t i = 0; i < d; ++i) {
            xh[i] = (x[i] - mu) * istd;
            y[i] = gamma.defined() ? xh[i] * gamma.data()[i] : xh[i];
            if (beta.defined()) y[i] += beta.data()[i];
        }
    }
    if (auto* tp = Tape<T>::active(); tp && detail::want_grad(a, gamma, beta)) {
        out.mark_tracked();
        tp->record([a, gamma, beta, out, xhat, inv_std, rows, d]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* g = go + r * d;
                const T* xh = xhat.data() + r * d;
                if (a.needs_grad()) {
                    T* ga = a.grad().data() + r * d;
                    // d xhat = g * gamma; dx via the two row sums.
                    T sum_dxh = T(0), sum_dxh_xh = T(0);
                    for (std::size_t i = 0; i < d; ++i) {
                        const T dxh = gamma.defined() ? g[i] * gamma.data()[i] : g[i];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[i];
                    }
                    const T istd = inv_std[r];
                    for (std::size_t i = 0; i < d; ++i) {
                        const T dxh = gamma.defined() ? g[i] * gamma.data()[i] : g[i];
                        ga[i] += istd * (dxh - sum_dxh / T(d) - xh[i] * sum_dxh_xh / T(d));
                    }
                }
                if (gamma.defined() && gamma.needs_grad()) {
                    T* gg = gamma.grad().data();
                    for (std::size_t i = 0; i < d; ++i) gg[i] += g[i] * xh[i];
                }
                if (beta.defined() && beta.needs_grad()) {
                    T* gb = beta.grad().data();
                    for (std::size_t i = 0; i < d; ++i) gb[i] += g[i];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax / cross-entropy
// ---------------------------------------------------------------------------

// Softmax over the trailing axis, computed with max subtraction.
template <typename T>
Tensor<T> softmax(Tensor<T> a) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    Tensor<T> out(a.shape());
    parallel_for_if(rows * d >= detail::kParallelFlops, rows, [&](std::size_t r) {
        const T* x = a.data() + r * d;
        T* y = out.data() + r * d;
        T m = x[0];
        for (std::size_t i = 1; i < d; ++i) m = std::max(m, x[i]);
        T sum = T(0);
        for (std::size_t i = 0; i < d; ++i) {
            y[i] = std::exp(x[i] - m);
            sum += y[i];
        }
        const T inv = T(1) / sum;
        for (std::size_t i = 0; i < d; ++i) y[i] *= inv;
    });
    if (auto* tp = Tape<T>::active(); tp && a.needs_grad()) {
        out.mark_tracked();
        tp->record([a, out, rows, d]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            T* ga = a.grad().data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = out.data() + r * d;
                const T* g = go + r * d;
                T dot = T(0);
                for (std::size_t i = 0; i < d; ++i) dot += g[i] * y[i];
                for (std::size_t i = 0; i < d; ++i)
                    ga[r * d + i] += y[i] * (g[i] - dot);
            }
        });
    }
    return out;
}

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <typename T>
Tensor<T> cross_entropy_from_logits(Tensor<T> logits,
                                    const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw UsageError("cross_entropy_from_logits: want [batch, classes], got " +
                         shape_str(logits.shape()));
    }
    const std::size_t b = logits.shape()[0];
    const std::size_t k = logits.shape()[1];
    if (labels.size() != b) {
        throw UsageError("cross_entropy_from_logits: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(b));
    }
    T total = T(0);
    for (std::size_t i = 0; i < b; ++i) {
        const int label = labels[i];
        if (label < 0 || std::size_t(label) >= k) {
            throw DataError("label " + std::to_string(label) + " out of range [0," +
                            std::to_string(k) + ") at sample index " + std::to_string(i));
        }
        const T* x = logits.data() + i * k;
        T m = x[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, x[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(x[j] - m);
        total += (m + std::log(sum)) - x[label];
    }
    Tensor<T> out = Tensor<T>::scalar(total / T(b));
    if (auto* tp = Tape<T>::active(); tp && logits.needs_grad()) {
        out.mark_tracked();
        tp->record([logits, labels, out, b, k]() mutable {
            if (!out.has_grad()) return;
            const T g = out.grad_or_empty()[0] / T(b);
            T* gl = logits.grad().data();
            for (std::size_t i = 0; i < b; ++i) {
                const T* x = logits.data() + i * k;
                T m = x[0];
                for (std::size_t j = 1; j < k; ++j) m = std::max(m, x[j]);
                T sum = T(0);
                for (std::size_t j = 0; j < k; ++j) sum += std::exp(x[j] - m);
                const T inv = T(1) / sum;
                for (std::size_t j = 0; j < k; ++j) {
                    T p = std::exp(x[j] - m) * inv;
                    if (int(j) == labels[i]) p -= T(1);
                    gl[i * k + j] += g * p;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Affine maps
// ---------------------------------------------------------------------------

// out[..., D_out] = input[..., D_in] * weight[D_out, D_in]^T (+ bias).
template <typename T>
Tensor<T> linear(Tensor<T> input, Tensor<T> weight,
                 Tensor<T> bias = Tensor<T>()) {
    if (weight.rank() != 2) {
        throw ConfigError("linear: weight must be rank 2, got " +
                          shape_str(weight.shape()));
    }
    const std::size_t d_out = weight.shape()[0];
    const std::size_t d_in = weight.shape()[1];
    if (input.shape().back() != d_in) {
        throw ConfigError("linear: input trailing dim of " + shape_str(input.shape()) +
                          " does not match weight " + shape_str(weight.shape()));
    }
    if (bias.defined() && bias.numel() != d_out) {
        throw ConfigError("linear: bias shape " + shape_str(bias.shape()) +
                          " does not match D_out " + std::to_string(d_out));
    }
    const std::size_t rows = input.numel() / d_in;
    Shape out_shape = input.shape();
    out_shape.back() = d_out;
    Tensor<T> out(out_shape);
    detail::gemm_nt(rows, d_out, d_in, input.data(), weight.data(), out.data(), false);
    if (bias.defined()) {
        for (std::size_t r = 0; r < rows; ++r) {
            T* y = out.data() + r * d_out;
            for (std::size_t o = 0; o < d_out; ++o) y[o] += bias.data()[o];
        }
    }
    if (auto* tp = Tape<T>::active(); tp && detail::want_grad(input, weight, bias)) {
        out.mark_tracked();
        tp->record([input, weight, bias, out, rows, d_in, d_out]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            if (input.needs_grad()) {
                detail::gemm_nn(rows, d_out, d_in, go, weight.data(),
                                input.grad().data(), true);
            }
            if (weight.needs_grad()) {
                detail::gemm_tn(d_out, rows, d_in, go, input.data(),
                                weight.grad().data(), true);
            }
            if (bias.defined() && bias.needs_grad()) {
                T* gb = bias.grad().data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < d_out; ++o) gb[o] += go[r * d_out + o];
            }
        });
    }
    return out;
}

// Batched matrix product: a[batch..., M, K] * b[batch..., K, N] or b[K, N]
// shared across the batch. No other broadcasting.
template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ConfigError("matmul: need rank >= 2, got " + shape_str(a.shape()) +
                          " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[a.rank() - 2];
    const std::size_t k = a.shape()[a.rank() - 1];
    const std::size_t kb = b.shape()[b.rank() - 2];
    const std::size_t n = b.shape()[b.rank() - 1];
    if (k != kb) {
        throw ConfigError("matmul: inner dims differ, " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    }
    const bool shared_b = b.rank() == 2 && a.rank() > 2;
    if (!shared_b && a.rank() != b.rank()) {
        throw ConfigError("matmul: batch dims differ, " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    }
    std::size_t batch = 1;
    for (std::size_t i = 0; i + 2 < a.rank(); ++i) {
        batch *= a.shape()[i];
        if (!shared_b && b.shape()[i] != a.shape()[i]) {
            throw ConfigError("matmul: batch dims differ, " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
        }
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    Tensor<T> out(out_shape);

    const bool batch_parallel = batch >= 2 && batch * m * n * k >= detail::kParallelFlops;
    parallel_for_if(batch_parallel, batch, [&](std::size_t i) {
        const T* bp = shared_b ? b.data() : b.data() + i * k * n;
        detail::gemm_nn(m, k, n, a.data() + i * m * k, bp, out.data() + i * m * n,
                        false);
    });

    if (auto* tp = Tape<T>::active(); tp && detail::want_grad(a, b)) {
        out.mark_tracked();
        tp->record([a, b, out, batch, m, k, n, shared_b, batch_parallel]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            if (a.needs_grad()) {
                T* ga = a.grad().data();
                parallel_for_if(batch_parallel, batch, [&](std::size_t i) {
                    const T* bp = shared_b ? b.data() : b.data() + i * k * n;
                    detail::gemm_nt(m, k, n, go + i * m * n, bp, ga + i * m * k, true);
                });
            }
            if (b.needs_grad()) {
                T* gb = b.grad().data();
                if (shared_b) {
                    // Shared operand: accumulate over the batch in fixed order.
                    for (std::size_t i = 0; i < batch; ++i) {
                        detail::gemm_tn(k, m, n, a.data() + i * m * k, go + i * m * n,
                                        gb, true);
                    }
                } else {
                    parallel_for_if(batch_parallel, batch, [&](std::size_t i) {
                        detail::gemm_tn(k, m, n, a.data() + i * m * k, go + i * m * n,
                                        gb + i * k * n, true);
                    });
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// 3D convolution
// ---------------------------------------------------------------------------

struct Conv3dSpec {
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::array<std::size_t, 3> padding{0, 0, 0};
};

namespace detail {

struct Conv3dGeom {
    std::size_t batch, c_in, c_out;
    std::array<std::size_t, 3> in;    // T, H, W
    std::array<std::size_t, 3> k;     // kT, kH, kW
    std::array<std::size_t, 3> out;   // T', H', W'
    std::array<std::size_t, 3> stride, pad;
    std::size_t kdim;  // c_in * kT * kH * kW
    std::size_t cols;  // T' * H' * W'
};

template <typename T>
Conv3dGeom conv3d_geometry(const Tensor<T>& input, const Tensor<T>& weight,
                           const Conv3dSpec& spec) {
    if (input.rank() != 5 || weight.rank() != 5) {
        throw ConfigError("conv3d: want input [B,C,T,H,W] and weight "
                          "[C_out,C_in,kT,kH,kW], got " + shape_str(input.shape()) +
                          " and " + shape_str(weight.shape()));
    }
    if (input.shape()[1] != weight.shape()[1]) {
        throw ConfigError("conv3d: input channels of " + shape_str(input.shape()) +
                          " do not match weight " + shape_str(weight.shape()));
    }
    Conv3dGeom g;
    g.batch = input.shape()[0];
    g.c_in = input.shape()[1];
    g.c_out = weight.shape()[0];
    g.in = {input.shape()[2], input.shape()[3], input.shape()[4]};
    g.k = {weight.shape()[2], weight.shape()[3], weight.shape()[4]};
    g.stride = spec.stride;
    g.pad = spec.padding;
    for (int i = 0; i < 3; ++i) {
        if (g.stride[i] < 1) throw ConfigError("conv3d: stride must be >= 1");
        const std::size_t padded = g.in[i] + 2 * g.pad[i];
        if (padded < g.k[i]) {
            throw ConfigError("conv3d: kernel " + shape_str({g.k[0], g.k[1], g.k[2]}) +
                              " does not fit padded input axis " + std::to_string(i) +
                              " of " + shape_str(input.shape()));
        }
        g.out[i] = (padded - g.k[i]) / g.stride[i] + 1;
    }
    g.kdim = g.c_in * g.k[0] * g.k[1] * g.k[2];
    g.cols = g.out[0] * g.out[1] * g.out[2];
    return g;
}

// col[kdim, cols] for one sample; zero-padded positions become 0.
template <typename T>
void im2col(const Conv3dGeom& g, const T* x, T* col) {
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < g.c_in; ++ci)
        for (std::size_t kt = 0; kt < g.k[0]; ++kt)
            for (std::size_t kh = 0; kh < g.k[1]; ++kh)
                for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
                    T* dst = col + row * g.cols;
                    for (std::size_t ot = 0; ot < g.out[0]; ++ot) {
                        const std::ptrdiff_t it =
                            std::ptrdiff_t(ot * g.stride[0] + kt) - std::ptrdiff_t(g.pad[0]);
                        const bool t_ok = it >= 0 && it < std::ptrdiff_t(g.in[0]);
                        for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                            const std::ptrdiff_t ih =
                                std::ptrdiff_t(oh * g.stride[1] + kh) - std::ptrdiff_t(g.pad[1]);
                            const bool h_ok = ih >= 0 && ih < std::ptrdiff_t(g.in[1]);
                            for (std::size_t ow = 0; ow < g.out[2]; ++ow, ++dst) {
                                const std::ptrdiff_t iw =
                                    std::ptrdiff_t(ow * g.stride[2] + kw) -
                                    std::ptrdiff_t(g.pad[2]);
                                if (t_ok && h_ok && iw >= 0 &&
                                    iw < std::ptrdiff_t(g.in[2])) {
                                    *dst = x[(ci * g.in[0] + std::size_t(it)) * g.in[1] *
                                                 g.in[2] +
                                             std::size_t(ih) * g.in[2] + std::size_t(iw)];
                                } else {
                                    *dst = T(0);
                                }
                            }
                        }
                    }
                }
}

// Scatter-add of col-gradients back onto the input sample.
template <typename T>
void col2im_add(const Conv3dGeom& g, const T* col, T* gx) {
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < g.c_in; ++ci)
        for (std::size_t kt = 0; kt < g.k[0]; ++kt)
            for (std::size_t kh = 0; kh < g.k[1]; ++kh)
                for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
                    const T* src = col + row * g.cols;
                    for (std::size_t ot = 0; ot < g.out[0]; ++ot) {
                        const std::ptrdiff_t it =
                            std::ptrdiff_t(ot * g.stride[0] + kt) - std::ptrdiff_t(g.pad[0]);
                        if (it < 0 || it >= std::ptrdiff_t(g.in[0])) {
                            src += g.out[1] * g.out[2];
                            continue;
                        }
                        for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                            const std::ptrdiff_t ih =
                                std::ptrdiff_t(oh * g.stride[1] + kh) - std::ptrdiff_t(g.pad[1]);
                            if (ih < 0 || ih >= std::ptrdiff_t(g.in[1])) {
                                src += g.out[2];
                                continue;
                            }
                            for (std::size_t ow = 0; ow < g.out[2]; ++ow, ++src) {
                                const std::ptrdiff_t iw =
                                    std::ptrdiff_t(ow * g.stride[2] + kw) -
                                    std::ptrdiff_t(g.pad[2]);
                                if (iw >= 0 && iw < std::ptrdiff_t(g.in[2])) {
                                    gx[(ci * g.in[0] + std::size_t(it)) * g.in[1] * g.in[2] +
                                       std::size_t(ih) * g.in[2] + std::size_t(iw)] += *src;
                                }
                            }
                        }
                    }
                }
}

}  // namespace detail

// input [B,C_in,T,H,W], weight [C_out,C_in,kT,kH,kW], bias [C_out] (optional).
// out_dim = floor((in + 2*pad - k) / stride) + 1 per spatiotemporal axis.
template <typename T>
Tensor<T> conv3d(Tensor<T> input, Tensor<T> weight,
                 Tensor<T> bias, const Conv3dSpec& spec) {
    const detail::Conv3dGeom g = detail::conv3d_geometry(input, weight, spec);
    if (bias.defined() && bias.numel() != g.c_out) {
        throw ConfigError("conv3d: bias shape " + shape_str(bias.shape()) +
                          " does not match C_out " + std::to_string(g.c_out));
    }
    Tensor<T> out({g.batch, g.c_out, g.out[0], g.out[1], g.out[2]});
    const std::size_t in_stride = g.c_in * g.in[0] * g.in[1] * g.in[2];
    const std::size_t out_stride = g.c_out * g.cols;

    {
        std::vector<T> col(g.kdim * g.cols);
        for (std::size_t b = 0; b < g.batch; ++b) {
            detail::im2col(g, input.data() + b * in_stride, col.data());
            T* y = out.data() + b * out_stride;
            detail::gemm_nn(g.c_out, g.kdim, g.cols, weight.data(), col.data(), y,
                            false);
            if (bias.defined()) {
                for (std::size_t c = 0; c < g.c_out; ++c) {
                    const T bv = bias.data()[c];
                    T* row = y + c * g.cols;
                    for (std::size_t i = 0; i < g.cols; ++i) row[i] += bv;
                }
            }
        }
    }

    if (auto* tp = Tape<T>::active(); tp && detail::want_grad(input, weight, bias)) {
        out.mark_tracked();
        tp->record([input, weight, bias, out, g, in_stride, out_stride]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            std::vector<T> col(g.kdim * g.cols);
            std::vector<T> gcol(g.kdim * g.cols);
            for (std::size_t b = 0; b < g.batch; ++b) {
                const T* gy = go + b * out_stride;
                if (weight.needs_grad() || input.needs_grad()) {
                    detail::im2col(g, input.data() + b * in_stride, col.data());
                }
                if (weight.needs_grad()) {
                    detail::gemm_nt(g.c_out, g.kdim, g.cols, gy, col.data(),
                                    weight.grad().data(), true);
                }
                if (bias.defined() && bias.needs_grad()) {
                    T* gb = bias.grad().data();
                    for (std::size_t c = 0; c < g.c_out; ++c) {
                        T acc = T(0);
                        const T* row = gy + c * g.cols;
                        for (std::size_t i = 0; i < g.cols; ++i) acc += row[i];
                        gb[c] += acc;
                    }
                }
                if (input.needs_grad()) {
                    detail::gemm_tn(g.kdim, g.c_out, g.cols, weight.data(), gy,
                                    gcol.data(), false);
                    detail::col2im_add(g, gcol.data(),
                                       input.grad().data() + b * in_stride);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patch extraction (frame -> non-overlapping p x p patches)
// ---------------------------------------------------------------------------

// input [B,T,C,H,W] -> [B, T, (H/p)*(W/p), C*p*p]
template <typename T>
Tensor<T> extract_patches(Tensor<T> input, std::size_t p) {
    if (input.rank() != 5) {
        throw ConfigError("extract_patches: want [B,T,C,H,W], got " +
                          shape_str(input.shape()));
    }
    const std::size_t B = input.shape()[0], Tn = input.shape()[1],
                      C = input.shape()[2], H = input.shape()[3],
                      W = input.shape()[4];
    if (p == 0 || H % p != 0 || W % p != 0) {
        throw ConfigError("extract_patches: spatial dims of " +
                          shape_str(input.shape()) + " not divisible by patch size " +
                          std::to_string(p));
    }
    const std::size_t ph = H / p, pw = W / p, np = ph * pw, pd = C * p * p;
    Tensor<T> out({B, Tn, np, pd});
    for (std::size_t bt = 0; bt < B * Tn; ++bt) {
        const T* frame = input.data() + bt * C * H * W;
        T* patches = out.data() + bt * np * pd;
        for (std::size_t iph = 0; iph < ph; ++iph)
            for (std::size_t ipw = 0; ipw < pw; ++ipw) {
                T* patch = patches + (iph * pw + ipw) * pd;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t dy = 0; dy < p; ++dy)
                        for (std::size_t dx = 0; dx < p; ++dx)
                            patch[(c * p + dy) * p + dx] =
                                frame[(c * H + iph * p + dy) * W + ipw * p + dx];
            }
    }

    if (auto* tp = Tape<T>::active(); tp && input.needs_grad()) {
        out.mark_tracked();
        tp->record([input, out, B, Tn, C, H, W, p, ph, pw, np, pd]() mutable {
            if (!out.has_grad()) return;
            const T* go = out.grad_or_empty().data();
            T* gi = input.grad().data();
            for (std::size_t bt = 0; bt < B * Tn; ++bt) {
                const T* patches = go + bt * np * pd;
                T* frame = gi + bt * C * H * W;
                for (std::size_t iph = 0; iph < ph; ++iph)
                    for (std::size_t ipw = 0; ipw < pw; ++ipw) {
                        const T* patch = patches + (iph * pw + ipw) * pd;
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t dy = 0; dy < p; ++dy)
                                for (std::size_t dx = 0; dx < p; ++dx)
                                    frame[(c * H + iph * p + dy) * W + ipw * p + dx] +=
                                        patch[(c * p + dy) * p + dx];
                    }
            }
        });
    }
    return out;
}

}  // namespace fenet
