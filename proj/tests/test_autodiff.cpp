#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "fenet/gradcheck.hpp"
#include "fenet/ops.hpp"
#include "fenet/rng.hpp"

#include "helpers.hpp"

using fenet::GradCheckOptions;
using fenet::ParamInfo;
using fenet::Tape;
using fenet::Tensor;
using testutil::random_tensor;

namespace {

ParamInfo<double> as_param(const std::string& name, Tensor<double> t) {
    t.set_requires_grad(true);
    return {name, t, 1, fenet::ParamInit::UniformFanIn};
}

// Projects an arbitrary-shape output to a scalar through fixed weights so
// every element contributes to the checked gradient.
Tensor<double> project(Tensor<double> out, const Tensor<double>& weights) {
    return fenet::sum_all(fenet::mul(out, weights));
}

void check(const std::string& name, std::vector<ParamInfo<double>>& params,
           const std::function<Tensor<double>()>& forward) {
    GradCheckOptions opt;
    opt.seed = 99;
    const auto result = fenet::gradient_check(forward, params, opt);
    INFO(name << ": worst " << result.worst.name << "[" << result.worst.index
              << "] analytic " << result.worst.analytic << " numeric "
              << result.worst.numeric);
    REQUIRE(result.checked > 0);
    REQUIRE(result.max_rel_err < 1e-4);
}

}  // namespace

TEST_CASE("backward of a plain sum yields all-ones gradients") {
    Tensor<float> p({4}, {0.5f, -1.0f, 2.0f, 3.0f});
    p.set_requires_grad(true);
    Tape<float> tape;
    Tensor<float> loss;
    {
        Tape<float>::Scope scope(tape);
        loss = fenet::sum_all(p);
    }
    tape.backward(loss);
    REQUIRE(p.grad() == std::vector<float>{1.0f, 1.0f, 1.0f, 1.0f});
}

TEST_CASE("backward of sum of squares") {
    Tensor<float> p({2}, {1.0f, -2.0f});
    p.set_requires_grad(true);
    Tape<float> tape;
    Tensor<float> loss;
    {
        Tape<float>::Scope scope(tape);
        loss = fenet::sum_all(fenet::mul(p, p));
    }
    tape.backward(loss);
    REQUIRE(p.grad() == std::vector<float>{2.0f, -4.0f});
}

TEST_CASE("backward accumulates when called twice without reset") {
    Tensor<float> p({2}, {1.0f, 1.0f});
    p.set_requires_grad(true);
    Tape<float> tape;
    Tensor<float> loss;
    {
        Tape<float>::Scope scope(tape);
        loss = fenet::sum_all(p);
    }
    tape.backward(loss);
    tape.backward(loss);
    REQUIRE(p.grad() == std::vector<float>{2.0f, 2.0f});
}

TEST_CASE("backward rejects non-scalar roots") {
    Tensor<float> p({2});
    p.set_requires_grad(true);
    Tape<float> tape;
    Tensor<float> y;
    {
        Tape<float>::Scope scope(tape);
        y = fenet::relu(p);
    }
    REQUIRE_THROWS_AS(tape.backward(y), fenet::UsageError);
}

TEST_CASE("no recording happens without an active tape") {
    Tensor<float> p({2}, {1.0f, 2.0f});
    p.set_requires_grad(true);
    Tape<float> tape;
    auto y = fenet::relu(p);  // outside any scope
    REQUIRE(tape.size() == 0);
    REQUIRE(!y.tracked());
}

TEST_CASE("finite differences validate every elementwise primitive") {
    fenet::Rng rng(7);
    auto w = random_tensor<double>({3, 4}, rng);

    SECTION("add sub mul scale") {
        auto a = random_tensor<double>({3, 4}, rng);
        auto b = random_tensor<double>({3, 4}, rng);
        std::vector<ParamInfo<double>> params{as_param("a", a), as_param("b", b)};
        check("add", params, [&] {
            return project(fenet::add(params[0].tensor, params[1].tensor), w);
        });
        check("sub", params, [&] {
            return project(fenet::sub(params[0].tensor, params[1].tensor), w);
        });
        check("mul", params, [&] {
            return project(fenet::mul(params[0].tensor, params[1].tensor), w);
        });
        check("scale", params, [&] {
            return project(fenet::scale(params[0].tensor, 2.5), w);
        });
    }

    SECTION("relu away from the kink") {
        Tensor<double> a({3, 4});
        for (std::size_t i = 0; i < a.numel(); ++i) {
            const double mag = 0.2 + rng.uniform();
            a.data()[i] = rng.uniform() < 0.5 ? -mag : mag;
        }
        std::vector<ParamInfo<double>> params{as_param("a", a)};
        check("relu", params, [&] { return project(fenet::relu(params[0].tensor), w); });
    }

    SECTION("sigmoid tanh") {
        auto a = random_tensor<double>({3, 4}, rng, -2.0, 2.0);
        std::vector<ParamInfo<double>> params{as_param("a", a)};
        check("sigmoid", params,
              [&] { return project(fenet::sigmoid(params[0].tensor), w); });
        check("tanh", params,
              [&] { return project(fenet::tanh(params[0].tensor), w); });
    }
}

TEST_CASE("finite differences validate shape-moving primitives") {
    fenet::Rng rng(13);
    SECTION("reshape transpose") {
        auto a = random_tensor<double>({2, 3, 4}, rng);
        auto w = random_tensor<double>({4, 6}, rng);
        std::vector<ParamInfo<double>> params{as_param("a", a)};
        check("reshape", params, [&] {
            return project(fenet::reshape(params[0].tensor, {4, 6}), w);
        });
        auto wt = random_tensor<double>({4, 3, 2}, rng);
        check("transpose", params, [&] {
            return project(fenet::transpose(params[0].tensor, 0, 2), wt);
        });
    }

    SECTION("concat narrow select") {
        auto a = random_tensor<double>({2, 3}, rng);
        auto b = random_tensor<double>({2, 2}, rng);
        auto w = random_tensor<double>({2, 5}, rng);
        std::vector<ParamInfo<double>> params{as_param("a", a), as_param("b", b)};
        check("concat", params, [&] {
            return project(
                fenet::concat<double>({params[0].tensor, params[1].tensor}, 1), w);
        });
        auto wn = random_tensor<double>({2, 2}, rng);
        check("narrow", params, [&] {
            return project(fenet::narrow(params[0].tensor, 1, 1, 2), wn);
        });
        auto ws = random_tensor<double>({3}, rng);
        check("select", params, [&] {
            return project(fenet::select(params[0].tensor, 0, 1), ws);
        });
    }

    SECTION("mean_axis sum_all extract_patches") {
        auto a = random_tensor<double>({2, 3, 4}, rng);
        auto w = random_tensor<double>({2, 4}, rng);
        std::vector<ParamInfo<double>> params{as_param("a", a)};
        check("mean_axis", params, [&] {
            return project(fenet::mean_axis(params[0].tensor, 1), w);
        });
        check("sum_all", params, [&] { return fenet::sum_all(params[0].tensor); });

        auto clip = random_tensor<double>({1, 2, 2, 4, 4}, rng);
        auto wp = random_tensor<double>({1, 2, 4, 8}, rng);
        std::vector<ParamInfo<double>> cparams{as_param("clip", clip)};
        check("extract_patches", cparams, [&] {
            return project(fenet::extract_patches(cparams[0].tensor, 2), wp);
        });
    }
}

TEST_CASE("finite differences validate normalization and losses") {
    fenet::Rng rng(19);
    SECTION("softmax") {
        auto a = random_tensor<double>({3, 5}, rng, -2.0, 2.0);
        auto w = random_tensor<double>({3, 5}, rng);
        std::vector<ParamInfo<double>> params{as_param("a", a)};
        check("softmax", params,
              [&] { return project(fenet::softmax(params[0].tensor), w); });
    }

    SECTION("layer_norm") {
        auto a = random_tensor<double>({4, 6}, rng);
        auto g = random_tensor<double>({6}, rng, 0.5, 1.5);
        auto b = random_tensor<double>({6}, rng);
        auto w = random_tensor<double>({4, 6}, rng);
        std::vector<ParamInfo<double>> params{as_param("a", a), as_param("g", g),
                                              as_param("b", b)};
        check("layer_norm_affine", params, [&] {
            return project(fenet::layer_norm(params[0].tensor, params[1].tensor,
                                             params[2].tensor),
                           w);
        });
        std::vector<ParamInfo<double>> plain{as_param("a", a)};
        check("layer_norm_plain", plain, [&] {
            return project(
                fenet::layer_norm(plain[0].tensor, Tensor<double>(), Tensor<double>()),
                w);
        });
    }

    SECTION("cross_entropy_from_logits") {
        auto logits = random_tensor<double>({3, 5}, rng, -2.0, 2.0);
        const std::vector<int> labels{0, 3, 2};
        std::vector<ParamInfo<double>> params{as_param("logits", logits)};
        check("cross_entropy", params, [&] {
            return fenet::cross_entropy_from_logits(params[0].tensor, labels);
        });
    }
}

TEST_CASE("finite differences validate affine maps and convolution") {
    fenet::Rng rng(29);
    SECTION("linear") {
        auto x = random_tensor<double>({3, 4}, rng);
        auto wgt = random_tensor<double>({5, 4}, rng);
        auto bias = random_tensor<double>({5}, rng);
        auto w = random_tensor<double>({3, 5}, rng);
        std::vector<ParamInfo<double>> params{as_param("x", x), as_param("w", wgt),
                                              as_param("b", bias)};
        check("linear", params, [&] {
            return project(
                fenet::linear(params[0].tensor, params[1].tensor, params[2].tensor), w);
        });
    }

    SECTION("matmul batched and shared") {
        auto a = random_tensor<double>({2, 3, 4}, rng);
        auto b = random_tensor<double>({2, 4, 2}, rng);
        auto w = random_tensor<double>({2, 3, 2}, rng);
        std::vector<ParamInfo<double>> params{as_param("a", a), as_param("b", b)};
        check("matmul", params, [&] {
            return project(fenet::matmul(params[0].tensor, params[1].tensor), w);
        });
        auto shared = random_tensor<double>({4, 2}, rng);
        std::vector<ParamInfo<double>> sparams{as_param("a", a),
                                               as_param("shared", shared)};
        check("matmul_shared", sparams, [&] {
            return project(fenet::matmul(sparams[0].tensor, sparams[1].tensor), w);
        });
    }

    SECTION("conv3d") {
        auto x = random_tensor<double>({2, 2, 3, 6, 6}, rng);
        auto wgt = random_tensor<double>({3, 2, 3, 3, 3}, rng);
        auto bias = random_tensor<double>({3}, rng);
        auto w = random_tensor<double>({2, 3, 3, 3, 3}, rng);
        std::vector<ParamInfo<double>> params{as_param("x", x), as_param("w", wgt),
                                              as_param("b", bias)};
        check("conv3d", params, [&] {
            return project(fenet::conv3d(params[0].tensor, params[1].tensor,
                                         params[2].tensor, {{1, 2, 2}, {1, 1, 1}}),
                           w);
        });
    }
}
