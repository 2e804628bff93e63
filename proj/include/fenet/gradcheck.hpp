#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fenet/params.hpp"
#include "fenet/rng.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Elements checked per tensor; tensors at or below this size are checked
    // exhaustively, larger ones at a seeded random subset.
    std::size_t max_elements_per_tensor = 0;  // 0 = all elements
    std::uint64_t seed = 0;
};

struct GradCheckEntry {
    std::string name;
    std::size_t index;
    double analytic;
    double numeric;
    double rel_err;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    GradCheckEntry worst{};
    std::vector<GradCheckEntry> failures;

    bool ok(double tol) const { return max_rel_err < tol; }
};

// Checks analytic gradients of `forward` (a tape-recorded scalar builder)
// against central finite differences. The numeric side re-evaluates the
// forward pass without any tape, so it stays independent of the recorded
// backward rules it validates.
inline GradCheckResult gradient_check(
    const std::function<Tensor<double>()>& forward,
    std::vector<ParamInfo<double>>& params, const GradCheckOptions& opt = {}) {
    GradCheckResult result;

    for (auto& p : params) p.tensor.zero_grad();
    Tape<double> tape;
    {
        typename Tape<double>::Scope scope(tape);
        Tensor<double> l = forward();
        tape.backward(l);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        p.tensor.ensure_grad();
        analytic.push_back(p.tensor.grad());
    }

    const auto eval = [&]() -> double { return forward().item(); };

    Rng rng = rng_for(opt.seed, "gradcheck-sample");
    const double h = opt.step;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& tensor = params[pi].tensor;
        const std::size_t n = tensor.numel();
        std::vector<std::size_t> indices;
        if (opt.max_elements_per_tensor == 0 || n <= opt.max_elements_per_tensor) {
            indices.resize(n);
            for (std::size_t i = 0; i < n; ++i) indices[i] = i;
        } else {
            indices.reserve(opt.max_elements_per_tensor);
            for (std::size_t i = 0; i < opt.max_elements_per_tensor; ++i)
                indices.push_back(std::size_t(rng.below(n)));
            std::sort(indices.begin(), indices.end());
            indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
        }
        for (std::size_t idx : indices) {
            const double saved = tensor.data()[idx];
            tensor.data()[idx] = saved + h;
            const double f_plus = eval();
            tensor.data()[idx] = saved - h;
            const double f_minus = eval();
            tensor.data()[idx] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[pi][idx];
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            ++result.checked;
            GradCheckEntry entry{params[pi].name, idx, a, numeric, rel};
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst = entry;
            }
            if (rel >= opt.tolerance) result.failures.push_back(entry);
        }
    }
    std::sort(result.failures.begin(), result.failures.end(),
              [](const GradCheckEntry& a, const GradCheckEntry& b) {
                  return a.rel_err > b.rel_err;
              });
    return result;
}

}  // namespace fenet
