#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fenet/data.hpp"
#include "fenet/errors.hpp"
#include "fenet/model.hpp"
#include "fenet/rng.hpp"

namespace fenet {

struct BenchReport {
    std::string op;
    std::string shape;
    double mean_ms = 0.0;
    std::size_t iterations = 0;
    std::string build;
};

inline nlohmann::json bench_report_to_json(const BenchReport& r) {
    nlohmann::json j;
    j["op"] = r.op;
    j["shape"] = r.shape;
    j["mean_ms"] = r.mean_ms;
    j["iterations"] = r.iterations;
    j["build"] = r.build;
    return j;
}

inline std::string build_id() {
    return hash_hex(detail::fnv1a64(std::string(__DATE__) + " " + __TIME__));
}

namespace bench_detail {

inline Tensor<float> random_tensor(Shape shape, Rng& rng) {
    Tensor<float> t(std::move(shape));
    for (auto& v : t.value()) v = float(rng.normal(0.0, 1.0));
    return t;
}

struct Case {
    std::string shape;
    std::function<void()> body;
};

// Timing-only workloads; "toy" matches the default training geometry,
// "micro" is a fast smoke preset.
inline Case make_case(const std::string& op, const std::string& preset) {
    const bool micro = preset == "micro";
    if (preset != "toy" && preset != "micro") {
        throw UsageError("unknown bench preset '" + preset + "' (want toy|micro)");
    }
    auto rng = std::make_shared<Rng>(7);
    if (op == "conv3d") {
        const std::size_t b = micro ? 1 : 4, c = micro ? 4 : 16, h = micro ? 8 : 16;
        auto x = std::make_shared<Tensor<float>>(
            random_tensor({b, 3, 8, h, h}, *rng));
        auto w = std::make_shared<Tensor<float>>(
            random_tensor({c, 3, 3, 3, 3}, *rng));
        auto bias = std::make_shared<Tensor<float>>(random_tensor({c}, *rng));
        return {shape_str(x->shape()), [=] {
                    conv3d(*x, *w, *bias, {{1, 2, 2}, {1, 1, 1}});
                }};
    }
    if (op == "linear") {
        const std::size_t rows = micro ? 16 : 128, d = micro ? 32 : 256;
        auto x = std::make_shared<Tensor<float>>(random_tensor({rows, d}, *rng));
        auto w = std::make_shared<Tensor<float>>(random_tensor({d, d}, *rng));
        auto bias = std::make_shared<Tensor<float>>(random_tensor({d}, *rng));
        return {shape_str(x->shape()), [=] { linear(*x, *w, *bias); }};
    }
    if (op == "softmax") {
        const std::size_t rows = micro ? 64 : 1024, d = micro ? 16 : 128;
        auto x = std::make_shared<Tensor<float>>(random_tensor({rows, d}, *rng));
        return {shape_str(x->shape()), [=] { softmax(*x); }};
    }
    if (op == "matmul") {
        const std::size_t n = micro ? 32 : 128;
        auto a = std::make_shared<Tensor<float>>(random_tensor({n, n}, *rng));
        auto b = std::make_shared<Tensor<float>>(random_tensor({n, n}, *rng));
        return {shape_str(a->shape()), [=] { matmul(*a, *b); }};
    }
    if (op == "attention_fuse") {
        const std::size_t b = micro ? 2 : 8, d = micro ? 16 : 64;
        auto reg = std::make_shared<ParamRegistry<float>>();
        auto fusion = std::make_shared<FusionModule<float>>(*reg, "bench.fusion", d);
        reg->initialize(7);
        auto tokens = std::make_shared<Tensor<float>>(random_tensor({b, 2, d}, *rng));
        return {shape_str(tokens->shape()), [=] { fusion->forward(*tokens); }};
    }
    if (op == "model_forward" || op == "model_forward_backward") {
        ModelConfig mc = default_model_config();
        if (micro) {
            mc.rgb_size = mc.rdm_size = 8;
            mc.temporal_dim = 16;
            for (auto& s : mc.streams) {
                s.feature_dim = 16;
                s.channels = {4, 8};
                s.embed_dim = 8;
            }
        }
        auto model = std::make_shared<Model<float>>(mc);
        model->init_params(7);
        const std::size_t b = 4, t = micro ? 4 : 8;
        auto rgb = std::make_shared<Tensor<float>>(
            random_tensor({b, t, 3, mc.rgb_size, mc.rgb_size}, *rng));
        auto rdm = std::make_shared<Tensor<float>>(
            random_tensor({b, 3, t, 1, mc.rdm_size, mc.rdm_size}, *rng));
        const bool backward = op == "model_forward_backward";
        std::vector<int> labels(b);
        for (std::size_t i = 0; i < b; ++i) labels[i] = int(i % mc.num_classes);
        return {shape_str(rgb->shape()), [=] {
                    if (backward) {
                        model->params().zero_grads();
                        Tape<float> tape;
                        Tensor<float> loss;
                        {
                            Tape<float>::Scope scope(tape);
                            auto out = model->forward(*rgb, *rdm);
                            loss = total_loss(out.head_logits(), labels);
                        }
                        tape.backward(loss);
                    } else {
                        model->forward(*rgb, *rdm);
                    }
                }};
    }
    throw UsageError("unknown bench op '" + op + "'");
}

}  // namespace bench_detail

inline const std::vector<std::string>& bench_ops() {
    static const std::vector<std::string> ops = {
        "conv3d",         "linear", "softmax", "matmul", "attention_fuse",
        "model_forward",  "model_forward_backward"};
    return ops;
}

inline BenchReport run_bench(const std::string& op, const std::string& preset,
                             std::size_t iterations = 30) {
    if (iterations < 30) iterations = 30;
    bench_detail::Case c = bench_detail::make_case(op, preset);
    for (int i = 0; i < 3; ++i) c.body();  // warmup, excluded
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < iterations; ++i) c.body();
    const double total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                  t0).count();
    BenchReport r;
    r.op = op;
    r.shape = c.shape;
    r.iterations = iterations;
    r.mean_ms = total_ms / double(iterations);
    r.build = build_id();
    return r;
}

inline void append_bench_report(const BenchReport& r,
                                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot append bench log: " + path.string());
    out << bench_report_to_json(r).dump() << '\n';
}

}  // namespace fenet
