#pragma once

// Independent reference implementations used as test oracles. Everything here
// is written as directly as possible (nested loops, 64-bit arithmetic) and
// never calls the library's compute paths.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Direct six-nested-loop 3D convolution on [B,Cin,T,H,W] double data.
struct Conv3dRef {
    std::size_t b, c_in, c_out;
    std::array<std::size_t, 3> in, k, stride, pad, out;

    void resolve() {
        for (int i = 0; i < 3; ++i)
            out[i] = (in[i] + 2 * pad[i] - k[i]) / stride[i] + 1;
    }
};

inline std::vector<double> conv3d_ref(const Conv3dRef& g, const std::vector<double>& x,
                                      const std::vector<double>& w,
                                      const std::vector<double>& bias) {
    std::vector<double> y(g.b * g.c_out * g.out[0] * g.out[1] * g.out[2], 0.0);
    for (std::size_t b = 0; b < g.b; ++b)
        for (std::size_t co = 0; co < g.c_out; ++co)
            for (std::size_t ot = 0; ot < g.out[0]; ++ot)
                for (std::size_t oh = 0; oh < g.out[1]; ++oh)
                    for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                        double acc = bias.empty() ? 0.0 : bias[co];
                        for (std::size_t ci = 0; ci < g.c_in; ++ci)
                            for (std::size_t kt = 0; kt < g.k[0]; ++kt)
                                for (std::size_t kh = 0; kh < g.k[1]; ++kh)
                                    for (std::size_t kw = 0; kw < g.k[2]; ++kw) {
                                        const std::ptrdiff_t it =
                                            std::ptrdiff_t(ot * g.stride[0] + kt) -
                                            std::ptrdiff_t(g.pad[0]);
                                        const std::ptrdiff_t ih =
                                            std::ptrdiff_t(oh * g.stride[1] + kh) -
                                            std::ptrdiff_t(g.pad[1]);
                                        const std::ptrdiff_t iw =
                                            std::ptrdiff_t(ow * g.stride[2] + kw) -
                                            std::ptrdiff_t(g.pad[2]);
                                        if (it < 0 || it >= std::ptrdiff_t(g.in[0]) ||
                                            ih < 0 || ih >= std::ptrdiff_t(g.in[1]) ||
                                            iw < 0 || iw >= std::ptrdiff_t(g.in[2]))
                                            continue;
                                        acc += x[(((b * g.c_in + ci) * g.in[0] +
                                                   std::size_t(it)) * g.in[1] +
                                                  std::size_t(ih)) * g.in[2] +
                                                 std::size_t(iw)] *
                                               w[(((co * g.c_in + ci) * g.k[0] + kt) *
                                                  g.k[1] + kh) * g.k[2] + kw];
                                    }
                        y[(((b * g.c_out + co) * g.out[0] + ot) * g.out[1] + oh) *
                          g.out[2] + ow] = acc;
                    }
    return y;
}

// Naive double-loop affine map: y[r, o] = sum_i x[r, i] w[o, i] + b[o].
inline std::vector<double> linear_ref(const std::vector<double>& x, std::size_t rows,
                                      std::size_t d_in, const std::vector<double>& w,
                                      std::size_t d_out,
                                      const std::vector<double>& bias) {
    std::vector<double> y(rows * d_out, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < d_out; ++o) {
            double acc = bias.empty() ? 0.0 : bias[o];
            for (std::size_t i = 0; i < d_in; ++i) acc += x[r * d_in + i] * w[o * d_in + i];
            y[r * d_out + o] = acc;
        }
    return y;
}

// Direct softmax row evaluation (no max subtraction; callers keep inputs tame).
inline std::vector<double> softmax_ref(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i]);
        sum += y[i];
    }
    for (auto& v : y) v /= sum;
    return y;
}

// Mean over rows of -log softmax(logits)[label].
inline double cross_entropy_ref(const std::vector<double>& logits, std::size_t rows,
                                std::size_t k, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row(logits.begin() + std::ptrdiff_t(r * k),
                                logits.begin() + std::ptrdiff_t((r + 1) * k));
        // shift by max for stability, same math
        double m = row[0];
        for (double v : row) m = std::max(m, v);
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - m);
        total += -(row[std::size_t(labels[r])] - m - std::log(sum));
    }
    return total / double(rows);
}

// Full fused-attention reference for one sample: two tokens of width d.
// q = t W_q^T etc. (no biases), scores = q k^T / sqrt(d), softmax rows,
// attended mean over the two tokens, then the output projection.
inline std::vector<double> attention_fuse_ref(const std::vector<double>& tokens,
                                              std::size_t d,
                                              const std::vector<double>& wq,
                                              const std::vector<double>& wk,
                                              const std::vector<double>& wv,
                                              const std::vector<double>& wo) {
    const auto proj = [&](const std::vector<double>& w, std::size_t tok) {
        std::vector<double> out(d, 0.0);
        for (std::size_t o = 0; o < d; ++o)
            for (std::size_t i = 0; i < d; ++i)
                out[o] += tokens[tok * d + i] * w[o * d + i];
        return out;
    };
    std::array<std::vector<double>, 2> q{proj(wq, 0), proj(wq, 1)};
    std::array<std::vector<double>, 2> k{proj(wk, 0), proj(wk, 1)};
    std::array<std::vector<double>, 2> v{proj(wv, 0), proj(wv, 1)};
    const double inv = 1.0 / std::sqrt(double(d));
    std::array<std::array<double, 2>, 2> s{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (std::size_t e = 0; e < d; ++e) acc += q[i][e] * k[j][e];
            s[i][j] = acc * inv;
        }
    std::array<std::array<double, 2>, 2> a{};
    for (int i = 0; i < 2; ++i) {
        const double m = std::max(s[i][0], s[i][1]);
        const double e0 = std::exp(s[i][0] - m), e1 = std::exp(s[i][1] - m);
        a[i][0] = e0 / (e0 + e1);
        a[i][1] = e1 / (e0 + e1);
    }
    std::vector<double> pooled(d, 0.0);
    for (int i = 0; i < 2; ++i)
        for (std::size_t e = 0; e < d; ++e)
            pooled[e] += 0.5 * (a[i][0] * v[0][e] + a[i][1] * v[1][e]);
    std::vector<double> fused(d, 0.0);
    for (std::size_t o = 0; o < d; ++o)
        for (std::size_t i = 0; i < d; ++i) fused[o] += pooled[i] * wo[o * d + i];
    return fused;
}

// Hand-unrolled decoupled-weight-decay Adam on one scalar.
struct AdamWScalarRef {
    double m = 0.0, v = 0.0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, wd = 0.01;

    double step(double p, double g, double lr, int t) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double m_hat = m / (1.0 - std::pow(beta1, t));
        const double v_hat = v / (1.0 - std::pow(beta2, t));
        return p - lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * p);
    }
};

// One LSTM cell step (gate order: input, forget, candidate, output).
struct LstmStateRef {
    std::vector<double> h, c;
};

inline LstmStateRef lstm_step_ref(const std::vector<double>& x,
                                  const LstmStateRef& prev, std::size_t in_dim,
                                  std::size_t hidden, const std::vector<double>& w_ih,
                                  const std::vector<double>& w_hh,
                                  const std::vector<double>& b) {
    const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    std::vector<double> z(4 * hidden, 0.0);
    for (std::size_t r = 0; r < 4 * hidden; ++r) {
        double acc = b.empty() ? 0.0 : b[r];
        for (std::size_t i = 0; i < in_dim; ++i) acc += w_ih[r * in_dim + i] * x[i];
        for (std::size_t i = 0; i < hidden; ++i) acc += w_hh[r * hidden + i] * prev.h[i];
        z[r] = acc;
    }
    LstmStateRef next;
    next.h.resize(hidden);
    next.c.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        const double gi = sig(z[i]);
        const double gf = sig(z[hidden + i]);
        const double gg = std::tanh(z[2 * hidden + i]);
        const double go = sig(z[3 * hidden + i]);
        next.c[i] = gf * prev.c[i] + gi * gg;
        next.h[i] = go * std::tanh(next.c[i]);
    }
    return next;
}

// Per-pixel bilinear sample with pixel-center alignment and edge clamping.
inline double bilinear_ref(const std::vector<double>& src, std::size_t h,
                           std::size_t w, std::size_t th, std::size_t tw,
                           std::size_t y, std::size_t x) {
    double fy = (double(y) + 0.5) * double(h) / double(th) - 0.5;
    double fx = (double(x) + 0.5) * double(w) / double(tw) - 0.5;
    fy = std::min(std::max(fy, 0.0), double(h) - 1.0);
    fx = std::min(std::max(fx, 0.0), double(w) - 1.0);
    const std::size_t y0 = std::size_t(fy), x0 = std::size_t(fx);
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double wy = fy - double(y0), wx = fx - double(x0);
    return src[y0 * w + x0] * (1 - wy) * (1 - wx) + src[y0 * w + x1] * (1 - wy) * wx +
           src[y1 * w + x0] * wy * (1 - wx) + src[y1 * w + x1] * wy * wx;
}

}  // namespace oracle
