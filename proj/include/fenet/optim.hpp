#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fenet/errors.hpp"
#include "fenet/params.hpp"

namespace fenet {

// lr(t) = min_lr + 0.5 (base_lr - min_lr) (1 + cos(pi t / total_steps)),
// clamped to min_lr past the end of the schedule.
inline double cosine_lr(std::size_t t, std::size_t total_steps, double base_lr,
                        double min_lr) {
    if (t > total_steps) return min_lr;
    if (total_steps == 0) return base_lr;
    const double cosv = std::cos(3.14159265358979323846 * double(t) / double(total_steps));
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + cosv);
}

struct AdamWConfig {
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled-weight-decay Adam:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
template <typename T>
class AdamW {
public:
    AdamW(ParamRegistry<T>& params, AdamWConfig cfg)
        : params_(params), cfg_(cfg) {
        m_.resize(params.tensor_count());
        v_.resize(params.tensor_count());
        for (std::size_t i = 0; i < params.tensor_count(); ++i) {
            m_[i].assign(params.items()[i].tensor.numel(), T(0));
            v_[i].assign(params.items()[i].tensor.numel(), T(0));
        }
    }

    void step(double lr) {
        ++step_;
        const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2);
        const T bc1 = T(1) - T(std::pow(cfg_.beta1, double(step_)));
        const T bc2 = T(1) - T(std::pow(cfg_.beta2, double(step_)));
        const T eps = T(cfg_.eps), wd = T(cfg_.weight_decay), lrt = T(lr);
        for (std::size_t i = 0; i < params_.items().size(); ++i) {
            auto& p = params_.items()[i];
            const bool has_grad = p.tensor.has_grad();
            T* pv = p.tensor.data();
            const std::vector<T>& g = p.tensor.grad_or_empty();
            T* m = m_[i].data();
            T* v = v_[i].data();
            const std::size_t n = p.tensor.numel();
            for (std::size_t j = 0; j < n; ++j) {
                const T gj = has_grad ? g[j] : T(0);
                if (!std::isfinite(double(gj))) {
                    throw DataError("non-finite gradient in parameter " + p.name +
                                    " at step " + std::to_string(step_));
                }
                m[j] = b1 * m[j] + (T(1) - b1) * gj;
                v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
                const T m_hat = m[j] / bc1;
                const T v_hat = v[j] / bc2;
                pv[j] -= lrt * (m_hat / (std::sqrt(v_hat) + eps) + wd * pv[j]);
            }
        }
    }

    std::size_t step_count() const { return step_; }
    void set_step_count(std::size_t t) { step_ = t; }

    std::vector<std::vector<T>>& moments_m() { return m_; }
    std::vector<std::vector<T>>& moments_v() { return v_; }

private:
    ParamRegistry<T>& params_;
    AdamWConfig cfg_;
    std::vector<std::vector<T>> m_, v_;
    std::size_t step_ = 0;
};

}  // namespace fenet
