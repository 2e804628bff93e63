#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fenet/ensemble.hpp"
#include "fenet/gradcheck.hpp"
#include "fenet/model.hpp"
#include "fenet/ops.hpp"
#include "fenet/rng.hpp"

namespace fenet {

struct GradSuiteEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

struct GradSuiteResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    bool ok = true;
    std::vector<GradSuiteEntry> entries;  // per unit, sorted worst-first on demand

    void absorb(const std::string& name, const GradCheckResult& r, double tol) {
        entries.push_back({name, r.max_rel_err, r.checked});
        checked += r.checked;
        if (r.max_rel_err > max_rel_err) max_rel_err = r.max_rel_err;
        if (!r.ok(tol)) ok = false;
    }

    std::vector<GradSuiteEntry> worst(std::size_t n = 5) const {
        auto sorted = entries;
        std::sort(sorted.begin(), sorted.end(),
                  [](const GradSuiteEntry& a, const GradSuiteEntry& b) {
                      return a.max_rel_err > b.max_rel_err;
                  });
        if (sorted.size() > n) sorted.resize(n);
        return sorted;
    }
};

namespace gradsuite_detail {

inline Tensor<double> rand_t(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.value()) v = rng.uniform(lo, hi);
    return t;
}

inline ParamInfo<double> param(const std::string& name, Tensor<double> t) {
    t.set_requires_grad(true);
    return {name, t, 1, ParamInit::UniformFanIn};
}

}  // namespace gradsuite_detail

// Central finite-difference verification of every recorded primitive on small
// random shapes, in 64-bit mode.
inline GradSuiteResult gradcheck_primitives(std::uint64_t seed, double tol = 1e-4) {
    using gradsuite_detail::param;
    using gradsuite_detail::rand_t;
    GradSuiteResult suite;
    Rng rng = rng_for(seed, "gradcheck-primitives");
    GradCheckOptions opt;
    opt.seed = seed;
    opt.tolerance = tol;

    const auto run = [&](const std::string& name,
                         std::vector<ParamInfo<double>> params,
                         const std::function<Tensor<double>(
                             std::vector<ParamInfo<double>>&)>& fwd) {
        const auto result = gradient_check(
            [&params, &fwd]() { return fwd(params); }, params, opt);
        suite.absorb(name, result, tol);
    };

    auto w34 = rand_t({3, 4}, rng);
    run("add", {param("a", rand_t({3, 4}, rng)), param("b", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(add(p[0].tensor, p[1].tensor), w34)); });
    run("sub", {param("a", rand_t({3, 4}, rng)), param("b", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(sub(p[0].tensor, p[1].tensor), w34)); });
    run("mul", {param("a", rand_t({3, 4}, rng)), param("b", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(mul(p[0].tensor, p[1].tensor), w34)); });
    run("scale", {param("a", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(scale(p[0].tensor, -1.7), w34)); });

    {
        Tensor<double> a({3, 4});
        for (auto& v : a.value()) {
            const double mag = 0.2 + rng.uniform();
            v = rng.uniform() < 0.5 ? -mag : mag;
        }
        run("relu", {param("a", a)},
            [&](auto& p) { return sum_all(mul(relu(p[0].tensor), w34)); });
    }
    run("sigmoid", {param("a", rand_t({3, 4}, rng, -2, 2))},
        [&](auto& p) { return sum_all(mul(sigmoid(p[0].tensor), w34)); });
    run("tanh", {param("a", rand_t({3, 4}, rng, -2, 2))},
        [&](auto& p) { return sum_all(mul(fenet::tanh(p[0].tensor), w34)); });

    auto w26 = rand_t({2, 6}, rng);
    run("reshape", {param("a", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(reshape(p[0].tensor, {2, 6}), w26)); });
    auto w43 = rand_t({4, 3}, rng);
    run("transpose", {param("a", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(transpose(p[0].tensor, 0, 1), w43)); });
    auto w25 = rand_t({2, 5}, rng);
    run("concat",
        {param("a", rand_t({2, 3}, rng)), param("b", rand_t({2, 2}, rng))},
        [&](auto& p) {
            return sum_all(mul(concat<double>({p[0].tensor, p[1].tensor}, 1), w25));
        });
    auto w22 = rand_t({2, 2}, rng);
    run("narrow", {param("a", rand_t({2, 4}, rng))},
        [&](auto& p) { return sum_all(mul(narrow(p[0].tensor, 1, 1, 2), w22)); });
    auto w4 = rand_t({4}, rng);
    run("select", {param("a", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(select(p[0].tensor, 0, 2), w4)); });
    auto w24 = rand_t({2, 4}, rng);
    run("mean_axis", {param("a", rand_t({2, 3, 4}, rng))},
        [&](auto& p) { return sum_all(mul(mean_axis(p[0].tensor, 1), w24)); });
    run("sum_all", {param("a", rand_t({3, 4}, rng))},
        [&](auto& p) { return sum_all(p[0].tensor); });

    auto w35 = rand_t({3, 5}, rng);
    run("softmax", {param("a", rand_t({3, 5}, rng, -2, 2))},
        [&](auto& p) { return sum_all(mul(softmax(p[0].tensor), w35)); });
    auto w46 = rand_t({4, 6}, rng);
    run("layer_norm",
        {param("a", rand_t({4, 6}, rng)), param("g", rand_t({6}, rng, 0.5, 1.5)),
         param("b", rand_t({6}, rng))},
        [&](auto& p) {
            return sum_all(
                mul(layer_norm(p[0].tensor, p[1].tensor, p[2].tensor), w46));
        });
    {
        const std::vector<int> labels{0, 3, 2};
        run("cross_entropy", {param("logits", rand_t({3, 5}, rng, -2, 2))},
            [labels](auto& p) {
                return cross_entropy_from_logits(p[0].tensor, labels);
            });
    }

    run("linear",
        {param("x", rand_t({3, 4}, rng)), param("w", rand_t({5, 4}, rng)),
         param("b", rand_t({5}, rng))},
        [&](auto& p) {
            return sum_all(mul(linear(p[0].tensor, p[1].tensor, p[2].tensor), w35));
        });
    auto w232 = rand_t({2, 3, 2}, rng);
    run("matmul",
        {param("a", rand_t({2, 3, 4}, rng)), param("b", rand_t({2, 4, 2}, rng))},
        [&](auto& p) {
            return sum_all(mul(matmul(p[0].tensor, p[1].tensor), w232));
        });
    run("matmul_shared",
        {param("a", rand_t({2, 3, 4}, rng)), param("b", rand_t({4, 2}, rng))},
        [&](auto& p) {
            return sum_all(mul(matmul(p[0].tensor, p[1].tensor), w232));
        });
    auto wconv = rand_t({2, 3, 3, 3, 3}, rng);
    run("conv3d",
        {param("x", rand_t({2, 2, 3, 6, 6}, rng)), param("w", rand_t({3, 2, 3, 3, 3}, rng)),
         param("b", rand_t({3}, rng))},
        [&](auto& p) {
            return sum_all(mul(conv3d(p[0].tensor, p[1].tensor, p[2].tensor,
                                      {{1, 2, 2}, {1, 1, 1}}),
                               wconv));
        });
    auto wpatch = rand_t({1, 2, 4, 8}, rng);
    run("extract_patches", {param("x", rand_t({1, 2, 2, 4, 4}, rng))},
        [&](auto& p) {
            return sum_all(mul(extract_patches(p[0].tensor, 2), wpatch));
        });

    return suite;
}

// Small but complete four-stream model used by the full-model check; every
// paradigm and temporal kind is exercised.
inline ModelConfig gradcheck_model_config() {
    ModelConfig cfg = default_model_config();
    cfg.num_classes = 3;
    cfg.rgb_size = 8;
    cfg.rdm_size = 8;
    cfg.temporal_dim = 8;
    cfg.transformer_heads = 2;
    for (auto& s : cfg.streams) {
        s.feature_dim = 8;
        s.channels = {3, 4};
        s.patch_size = 4;
        s.embed_dim = 8;
    }
    return cfg;
}

// Checks d(total_loss)/d(theta) for every parameter tensor of the complete
// four-stream model on one fixed random batch. Large tensors are checked at a
// seeded sample of elements so the sweep stays fast.
inline GradSuiteResult gradcheck_full_model(std::uint64_t seed, double tol = 1e-4,
                                            std::size_t max_per_tensor = 24) {
    GradSuiteResult suite;
    Model<double> model(gradcheck_model_config());
    model.init_params(split_seed(seed, "gradcheck-model-init"));

    Rng rng = rng_for(seed, "gradcheck-model-data");
    const std::size_t B = 2, T = 4;
    Tensor<double> rgb({B, T, 3, 8, 8});
    Tensor<double> rdm({B, 3, T, 1, 8, 8});
    for (auto& v : rgb.value()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : rdm.value()) v = rng.uniform(-1.0, 1.0);
    const std::vector<int> labels{0, 2};

    GradCheckOptions opt;
    opt.seed = seed;
    opt.tolerance = tol;
    opt.max_elements_per_tensor = max_per_tensor;

    const auto forward = [&]() {
        const auto out = model.forward(rgb, rdm);
        return total_loss(out.head_logits(), labels);
    };
    const auto result = gradient_check(forward, model.params().items(), opt);
    suite.absorb("full_model", result, tol);

    // Surface the worst parameter tensor by name for diagnostics.
    if (!result.failures.empty()) {
        suite.entries.push_back(
            {"worst: " + result.worst.name, result.worst.rel_err, 1});
    }
    return suite;
}

}  // namespace fenet
