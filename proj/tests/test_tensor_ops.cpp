#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fenet/ops.hpp"
#include "fenet/rng.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

using fenet::Tensor;
using testutil::random_tensor;
using testutil::to_doubles;

TEST_CASE("conv3d degenerate one-element convolution") {
    Tensor<float> x({1, 1, 1, 1, 1}, {2.0f});
    Tensor<float> w({1, 1, 1, 1, 1}, {3.0f});
    Tensor<float> b({1}, {1.0f});
    auto y = fenet::conv3d(x, w, b, {{1, 1, 1}, {0, 0, 0}});
    REQUIRE(y.shape() == fenet::Shape{1, 1, 1, 1, 1});
    REQUIRE(y.data()[0] == Catch::Approx(7.0));
}

TEST_CASE("conv3d identity kernel is the identity map") {
    fenet::Rng rng(11);
    auto x = random_tensor<float>({2, 2, 3, 4, 4}, rng);
    // kernel 3x3x3 with a single 1 at the center of the matching channel
    Tensor<float> w({2, 2, 3, 3, 3});
    for (std::size_t c = 0; c < 2; ++c) w.data()[(c * 2 + c) * 27 + 13] = 1.0f;
    auto y = fenet::conv3d(x, w, Tensor<float>(), {{1, 1, 1}, {1, 1, 1}});
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        REQUIRE(std::abs(y.data()[i] - x.data()[i]) <= 1e-6f);
    }
}

TEST_CASE("conv3d matches the six-nested-loop reference") {
    fenet::Rng rng(5);
    auto x = random_tensor<float>({1, 2, 3, 4, 4}, rng);
    auto w = random_tensor<float>({2, 2, 2, 2, 2}, rng);
    auto b = random_tensor<float>({2}, rng);
    auto y = fenet::conv3d(x, w, b, {{1, 1, 1}, {0, 0, 0}});

    oracle::Conv3dRef g;
    g.b = 1;
    g.c_in = 2;
    g.c_out = 2;
    g.in = {3, 4, 4};
    g.k = {2, 2, 2};
    g.stride = {1, 1, 1};
    g.pad = {0, 0, 0};
    g.resolve();
    const auto ref = oracle::conv3d_ref(g, to_doubles(x), to_doubles(w), to_doubles(b));
    REQUIRE(y.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        REQUIRE(std::abs(double(y.data()[i]) - ref[i]) < 1e-5);
    }
}

TEST_CASE("conv3d with stride and padding matches the reference") {
    fenet::Rng rng(17);
    auto x = random_tensor<double>({2, 3, 4, 6, 6}, rng);
    auto w = random_tensor<double>({4, 3, 3, 3, 3}, rng);
    auto b = random_tensor<double>({4}, rng);
    auto y = fenet::conv3d(x, w, b, {{1, 2, 2}, {1, 1, 1}});

    oracle::Conv3dRef g;
    g.b = 2;
    g.c_in = 3;
    g.c_out = 4;
    g.in = {4, 6, 6};
    g.k = {3, 3, 3};
    g.stride = {1, 2, 2};
    g.pad = {1, 1, 1};
    g.resolve();
    const auto ref = oracle::conv3d_ref(g, x.value(), w.value(), b.value());
    REQUIRE(y.shape() == fenet::Shape{2, 4, 4, 3, 3});
    for (std::size_t i = 0; i < ref.size(); ++i) {
        REQUIRE(std::abs(y.data()[i] - ref[i]) < 1e-9);
    }
}

TEST_CASE("conv3d rejects channel mismatch naming both shapes") {
    Tensor<float> x({1, 3, 2, 4, 4});
    Tensor<float> w({2, 4, 1, 1, 1});
    REQUIRE_THROWS_MATCHES(
        fenet::conv3d(x, w, Tensor<float>(), {}), fenet::ConfigError,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("[1,3,2,4,4]") &&
            Catch::Matchers::ContainsSubstring("[2,4,1,1,1]")));
}

TEST_CASE("conv3d rejects oversized kernels") {
    Tensor<float> x({1, 1, 2, 4, 4});
    Tensor<float> w({1, 1, 3, 1, 1});
    REQUIRE_THROWS_AS(fenet::conv3d(x, w, Tensor<float>(), {{1, 1, 1}, {0, 0, 0}}),
                      fenet::ConfigError);
}

TEST_CASE("linear identity and hand arithmetic") {
    Tensor<float> x({2}, {1.0f, 0.0f});
    Tensor<float> w({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    Tensor<float> b({2}, {0.0f, 0.0f});
    auto y = fenet::linear(x, w, b);
    REQUIRE(y.value() == std::vector<float>{1.0f, 0.0f});

    Tensor<float> x2({2}, {1.0f, 1.0f});
    Tensor<float> w2({1, 2}, {2.0f, 3.0f});
    Tensor<float> b2({1}, {-5.0f});
    auto y2 = fenet::linear(x2, w2, b2);
    REQUIRE(y2.data()[0] == Catch::Approx(0.0).margin(1e-7));
}

TEST_CASE("linear matches the double-loop reference") {
    fenet::Rng rng(23);
    auto x = random_tensor<double>({4, 8}, rng);
    auto w = random_tensor<double>({5, 8}, rng);
    auto b = random_tensor<double>({5}, rng);
    auto y = fenet::linear(x, w, b);
    const auto ref = oracle::linear_ref(x.value(), 4, 8, w.value(), 5, b.value());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        REQUIRE(std::abs(y.data()[i] - ref[i]) < 1e-6);
    }
}

TEST_CASE("linear rejects trailing-dimension mismatch") {
    Tensor<float> x({3, 4});
    Tensor<float> w({2, 5});
    REQUIRE_THROWS_AS(fenet::linear(x, w), fenet::ConfigError);
}

TEST_CASE("softmax of uniform logits") {
    Tensor<float> x({4}, {0.0f, 0.0f, 0.0f, 0.0f});
    auto y = fenet::softmax(x);
    for (float v : y.value()) REQUIRE(v == Catch::Approx(0.25));
}

TEST_CASE("softmax shift invariance with 1:3 ratio") {
    for (double c : {-100.0, -3.0, 0.0, 7.5, 100.0}) {
        Tensor<double> x({2}, {c, c + std::log(3.0)});
        auto y = fenet::softmax(x);
        REQUIRE(y.data()[0] == Catch::Approx(0.25).margin(1e-9));
        REQUIRE(y.data()[1] == Catch::Approx(0.75).margin(1e-9));
    }
}

TEST_CASE("softmax matches direct 64-bit evaluation") {
    fenet::Rng rng(31);
    auto x = random_tensor<double>({7}, rng, -4.0, 4.0);
    auto y = fenet::softmax(x);
    const auto ref = oracle::softmax_ref(x.value());
    for (std::size_t i = 0; i < 7; ++i) {
        REQUIRE(std::abs(y.data()[i] - ref[i]) < 1e-9);
    }
}

TEST_CASE("softmax rows sum to one and shift invariance holds in f32") {
    fenet::Rng rng(37);
    auto x = random_tensor<float>({6, 9}, rng, -5.0, 5.0);
    auto y = fenet::softmax(x);
    for (std::size_t r = 0; r < 6; ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 9; ++i) {
            const float v = y.data()[r * 9 + i];
            REQUIRE(v > 0.0f);
            REQUIRE(v < 1.0f);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-6);
    }
    for (double c : {-100.0, -1.0, 42.0, 100.0}) {
        Tensor<float> shifted(x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i)
            shifted.data()[i] = x.data()[i] + float(c);
        auto y2 = fenet::softmax(shifted);
        for (std::size_t i = 0; i < y.numel(); ++i) {
            REQUIRE(std::abs(y2.data()[i] - y.data()[i]) < 1e-6f);
        }
    }
}

TEST_CASE("cross entropy of uniform two-class logits is ln 2") {
    Tensor<float> logits({1, 2}, {0.0f, 0.0f});
    auto loss = fenet::cross_entropy_from_logits(logits, {0});
    REQUIRE(loss.item() == Catch::Approx(std::log(2.0)).epsilon(1e-5));
}

TEST_CASE("cross entropy survives extreme logits") {
    Tensor<float> logits({1, 2}, {1000.0f, 0.0f});
    auto loss = fenet::cross_entropy_from_logits(logits, {0});
    REQUIRE(std::isfinite(loss.item()));
    REQUIRE(loss.item() == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("cross entropy matches the direct 64-bit reference") {
    fenet::Rng rng(41);
    auto logits = random_tensor<double>({3, 5}, rng, -3.0, 3.0);
    const std::vector<int> labels{4, 0, 2};
    auto loss = fenet::cross_entropy_from_logits(logits, labels);
    const double ref = oracle::cross_entropy_ref(logits.value(), 3, 5, labels);
    REQUIRE(std::abs(loss.item() - ref) < 1e-6);
}

TEST_CASE("cross entropy names the offending sample index") {
    Tensor<float> logits({2, 3});
    REQUIRE_THROWS_MATCHES(
        fenet::cross_entropy_from_logits(logits, {1, 7}), fenet::DataError,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("sample index 1")));
}

TEST_CASE("relu and concat basics") {
    Tensor<float> x({3}, {-1.0f, 0.0f, 2.0f});
    REQUIRE(fenet::relu(x).value() == std::vector<float>{0.0f, 0.0f, 2.0f});

    Tensor<float> a({2}, {1.0f, 2.0f});
    Tensor<float> b({1}, {3.0f});
    auto c = fenet::concat<float>({a, b}, 0);
    REQUIRE(c.value() == std::vector<float>{1.0f, 2.0f, 3.0f});
}

TEST_CASE("elementwise ops reject shape mismatches") {
    Tensor<float> a({2, 3});
    Tensor<float> b({3, 2});
    REQUIRE_THROWS_AS(fenet::add(a, b), fenet::ConfigError);
    REQUIRE_THROWS_AS(fenet::mul(a, b), fenet::ConfigError);
}

TEST_CASE("transpose reshape narrow select mean behave on a small case") {
    Tensor<float> x({2, 3}, {1, 2, 3, 4, 5, 6});
    auto xt = fenet::transpose(x, 0, 1);
    REQUIRE(xt.shape() == fenet::Shape{3, 2});
    REQUIRE(xt.value() == std::vector<float>{1, 4, 2, 5, 3, 6});

    auto flat = fenet::reshape(x, {6});
    REQUIRE(flat.value() == x.value());

    auto mid = fenet::narrow(x, 1, 1, 2);
    REQUIRE(mid.value() == std::vector<float>{2, 3, 5, 6});

    auto row1 = fenet::select(x, 0, 1);
    REQUIRE(row1.shape() == fenet::Shape{3});
    REQUIRE(row1.value() == std::vector<float>{4, 5, 6});

    auto m = fenet::mean_axis(x, 0);
    REQUIRE(m.value() == std::vector<float>{2.5f, 3.5f, 4.5f});

    REQUIRE(fenet::sum_all(x).item() == Catch::Approx(21.0));
}

TEST_CASE("batched matmul matches per-slice reference") {
    fenet::Rng rng(43);
    auto a = random_tensor<double>({2, 3, 4}, rng);
    auto b = random_tensor<double>({2, 4, 5}, rng);
    auto c = fenet::matmul(a, b);
    REQUIRE(c.shape() == fenet::Shape{2, 3, 5});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 4; ++k)
                    acc += a.data()[(n * 3 + i) * 4 + k] * b.data()[(n * 4 + k) * 5 + j];
                REQUIRE(c.data()[(n * 3 + i) * 5 + j] == Catch::Approx(acc).margin(1e-12));
            }

    auto shared = random_tensor<double>({4, 5}, rng);
    auto c2 = fenet::matmul(a, shared);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 4; ++k)
                    acc += a.data()[(n * 3 + i) * 4 + k] * shared.data()[k * 5 + j];
                REQUIRE(c2.data()[(n * 3 + i) * 5 + j] ==
                        Catch::Approx(acc).margin(1e-12));
            }
}

TEST_CASE("matmul rejects dimension mismatches") {
    Tensor<float> a({2, 3, 4});
    Tensor<float> b({2, 5, 6});
    REQUIRE_THROWS_AS(fenet::matmul(a, b), fenet::ConfigError);
    Tensor<float> c({3, 3, 4});
    Tensor<float> d({2, 4, 6});
    REQUIRE_THROWS_AS(fenet::matmul(c, d), fenet::ConfigError);
}

TEST_CASE("layer_norm normalizes the trailing axis") {
    fenet::Rng rng(47);
    auto x = random_tensor<double>({3, 6}, rng, -2.0, 5.0);
    auto y = fenet::layer_norm(x, Tensor<double>(), Tensor<double>());
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < 6; ++i) mean += y.data()[r * 6 + i];
        mean /= 6.0;
        for (std::size_t i = 0; i < 6; ++i) {
            const double d = y.data()[r * 6 + i] - mean;
            var += d * d;
        }
        var /= 6.0;
        REQUIRE(std::abs(mean) < 1e-9);
        REQUIRE(var == Catch::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("extract_patches splits frames into flattened patches") {
    // 1 frame, 1 channel, 4x4 image, patch 2 -> 4 patches of 4 values
    Tensor<float> x({1, 1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) x.data()[i] = float(i);
    auto p = fenet::extract_patches(x, 2);
    REQUIRE(p.shape() == fenet::Shape{1, 1, 4, 4});
    REQUIRE(p.value() == std::vector<float>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10,
                                            11, 14, 15});
    REQUIRE_THROWS_AS(fenet::extract_patches(x, 3), fenet::ConfigError);
}

TEST_CASE("forward ops are bitwise deterministic across repeat runs") {
    fenet::Rng rng(53);
    auto x = random_tensor<float>({2, 3, 4, 8, 8}, rng);
    auto w = random_tensor<float>({4, 3, 3, 3, 3}, rng);
    auto b = random_tensor<float>({4}, rng);
    auto y1 = fenet::conv3d(x, w, b, {{1, 2, 2}, {1, 1, 1}});
    auto y2 = fenet::conv3d(x, w, b, {{1, 2, 2}, {1, 1, 1}});
    REQUIRE(y1.value() == y2.value());
    auto s1 = fenet::softmax(x);
    auto s2 = fenet::softmax(x);
    REQUIRE(s1.value() == s2.value());
}
