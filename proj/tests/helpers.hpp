#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fenet/config.hpp"
#include "fenet/model.hpp"
#include "fenet/rng.hpp"
#include "fenet/tensor.hpp"

namespace testutil {

// Self-cleaning unique temp directory.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("fenet_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

template <typename T>
fenet::Tensor<T> random_tensor(fenet::Shape shape, fenet::Rng& rng, double lo = -1.0,
                               double hi = 1.0) {
    fenet::Tensor<T> t(std::move(shape));
    for (auto& v : t.value()) v = T(rng.uniform(lo, hi));
    return t;
}

template <typename T>
std::vector<double> to_doubles(const fenet::Tensor<T>& t) {
    return std::vector<double>(t.value().begin(), t.value().end());
}

template <typename Src, typename Dst>
fenet::Tensor<Dst> cast_tensor(const fenet::Tensor<Src>& t) {
    fenet::Tensor<Dst> out(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) out.data()[i] = Dst(t.data()[i]);
    return out;
}

// Small but complete four-stream configuration for fast end-to-end tests and
// gradient checks: every paradigm and temporal kind is present.
inline fenet::RunConfig micro_run_config() {
    fenet::RunConfig cfg;
    cfg.seed = 42;
    cfg.data.synth.classes = 3;
    cfg.data.synth.frames = 4;
    cfg.data.synth.rgb_size = 8;
    cfg.data.synth.rdm_size = 8;
    cfg.data.synth.train_per_class = 4;
    cfg.data.synth.valid_per_class = 2;
    cfg.data.synth.test_per_class = 2;
    cfg.data.synth.noise_sigma = 0.05;
    cfg.data.synth.seed = cfg.seed;

    cfg.model = fenet::default_model_config();
    cfg.model.num_classes = 3;
    cfg.model.rgb_size = 8;
    cfg.model.rdm_size = 8;
    cfg.model.temporal_dim = 8;
    cfg.model.transformer_heads = 2;
    for (auto& s : cfg.model.streams) {
        s.feature_dim = 8;
        s.channels = {4, 6};
        s.patch_size = 4;
        s.embed_dim = 8;
    }

    cfg.train.epochs = 2;
    cfg.train.batch_size = 4;
    cfg.train.base_lr = 1e-3;
    return cfg;
}

}  // namespace testutil
