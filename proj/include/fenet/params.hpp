#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fenet/errors.hpp"
#include "fenet/rng.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

enum class ParamInit { UniformFanIn, Zeros, Ones };

template <typename T>
struct ParamInfo {
    std::string name;
    Tensor<T> tensor;
    std::size_t fan_in;  // used by UniformFanIn
    ParamInit init = ParamInit::UniformFanIn;
};

// Owns every trainable tensor of a model in registration order. The order is
// fixed by construction order, which pins both initialization and the
// checkpoint layout.
template <typename T>
class ParamRegistry {
public:
    Tensor<T> add(std::string name, Shape shape, std::size_t fan_in) {
        if (fan_in == 0) throw UsageError("param " + name + ": fan_in must be >= 1");
        Tensor<T> t(std::move(shape));
        t.set_requires_grad(true);
        params_.push_back({std::move(name), t, fan_in, ParamInit::UniformFanIn});
        return t;
    }

    Tensor<T> add_zeros(std::string name, Shape shape) {
        Tensor<T> t(std::move(shape));
        t.set_requires_grad(true);
        params_.push_back({std::move(name), t, 0, ParamInit::Zeros});
        return t;
    }

    Tensor<T> add_ones(std::string name, Shape shape) {
        Tensor<T> t(std::move(shape));
        t.set_requires_grad(true);
        params_.push_back({std::move(name), t, 0, ParamInit::Ones});
        return t;
    }

    // Weights: uniform in (-s, s) with s = sqrt(6 / fan_in), drawn in
    // registration order from one seeded generator. Biases: zeros.
    void initialize(std::uint64_t seed) {
        Rng rng = rng_for(seed, "param-init");
        for (auto& p : params_) {
            switch (p.init) {
                case ParamInit::Zeros:
                    for (auto& v : p.tensor.value()) v = T(0);
                    break;
                case ParamInit::Ones:
                    for (auto& v : p.tensor.value()) v = T(1);
                    break;
                case ParamInit::UniformFanIn: {
                    const double s = std::sqrt(6.0 / double(p.fan_in));
                    for (auto& v : p.tensor.value()) v = T(rng.uniform(-s, s));
                    break;
                }
            }
        }
    }

    std::vector<ParamInfo<T>>& items() { return params_; }
    const std::vector<ParamInfo<T>>& items() const { return params_; }

    std::size_t tensor_count() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    const ParamInfo<T>& find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p;
        throw UsageError("no parameter named " + name);
    }

private:
    std::vector<ParamInfo<T>> params_;
};

}  // namespace fenet
