#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fenet/errors.hpp"
#include "fenet/fent_io.hpp"
#include "fenet/model.hpp"
#include "fenet/optim.hpp"
#include "fenet/rng.hpp"

namespace fenet {

// On disk a checkpoint is a directory: three FENT blobs (parameters and the
// two Adam moment sets, flattened in registration order) plus index.json
// carrying layout, counters, rng seed, and the full run config.
struct CheckpointMeta {
    std::size_t epoch = 0;  // completed epochs
    std::size_t step = 0;   // optimizer steps taken
    std::uint64_t seed = 0;
    std::string config_hash;
    double best_valid_top1 = -1.0;
    std::size_t best_epoch = 0;
    nlohmann::json run_config;  // resolved config this run was built from
};

inline std::string config_hash(const nlohmann::json& config) {
    return hash_hex(detail::fnv1a64(config.dump()));
}

namespace detail {

inline Tensor<float> flatten_params(const ParamRegistry<float>& reg) {
    std::size_t total = 0;
    for (const auto& p : reg.items()) total += p.tensor.numel();
    Tensor<float> flat({std::max<std::size_t>(total, 1)});
    std::size_t off = 0;
    for (const auto& p : reg.items()) {
        std::copy(p.tensor.data(), p.tensor.data() + p.tensor.numel(),
                  flat.data() + off);
        off += p.tensor.numel();
    }
    return flat;
}

inline Tensor<float> flatten_moments(const std::vector<std::vector<float>>& m) {
    std::size_t total = 0;
    for (const auto& v : m) total += v.size();
    Tensor<float> flat({std::max<std::size_t>(total, 1)});
    std::size_t off = 0;
    for (const auto& v : m) {
        std::copy(v.begin(), v.end(), flat.data() + off);
        off += v.size();
    }
    return flat;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, Model<float>& model,
                            AdamW<float>& opt, const CheckpointMeta& meta) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create checkpoint directory: " + dir.string());
    }
    write_fent(dir / "params.fent", detail::flatten_params(model.params()));
    write_fent(dir / "adam_m.fent", detail::flatten_moments(opt.moments_m()));
    write_fent(dir / "adam_v.fent", detail::flatten_moments(opt.moments_v()));

    nlohmann::json index;
    index["format_version"] = 1;
    index["epoch"] = meta.epoch;
    index["step"] = meta.step;
    index["seed"] = meta.seed;
    index["config_hash"] = meta.config_hash;
    index["best_valid_top1"] = meta.best_valid_top1;
    index["best_epoch"] = meta.best_epoch;
    index["run_config"] = meta.run_config;
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& p : model.params().items()) {
        nlohmann::json e;
        e["name"] = p.name;
        e["shape"] = p.tensor.shape();
        layout.push_back(e);
    }
    index["params"] = layout;
    std::ofstream out(dir / "index.json", std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint index: " +
                            (dir / "index.json").string());
    out << index.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + (dir / "index.json").string());
}

struct LoadedCheckpoint {
    CheckpointMeta meta;
    nlohmann::json layout;
    Tensor<float> params;
    Tensor<float> adam_m;
    Tensor<float> adam_v;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "index.json");
    if (!in) throw IoError("cannot open checkpoint index: " +
                           (dir / "index.json").string());
    nlohmann::json index;
    try {
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint index parse error: " + std::string(e.what()));
    }
    LoadedCheckpoint ck;
    try {
        ck.meta.epoch = index.at("epoch").get<std::size_t>();
        ck.meta.step = index.at("step").get<std::size_t>();
        ck.meta.seed = index.at("seed").get<std::uint64_t>();
        ck.meta.config_hash = index.at("config_hash").get<std::string>();
        ck.meta.best_valid_top1 = index.at("best_valid_top1").get<double>();
        ck.meta.best_epoch = index.at("best_epoch").get<std::size_t>();
        ck.meta.run_config = index.at("run_config");
        ck.layout = index.at("params");
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint index missing field: " + std::string(e.what()));
    }
    ck.params = read_fent(dir / "params.fent");
    ck.adam_m = read_fent(dir / "adam_m.fent");
    ck.adam_v = read_fent(dir / "adam_v.fent");
    return ck;
}

// Restores parameters and moments into a freshly built model/optimizer pair.
// Layout mismatches (names or shapes) are artifact mismatches.
inline void apply_checkpoint(const LoadedCheckpoint& ck, Model<float>& model,
                             AdamW<float>& opt) {
    const auto& items = model.params().items();
    if (ck.layout.size() != items.size()) {
        throw MismatchError("checkpoint has " + std::to_string(ck.layout.size()) +
                            " parameter tensors, model has " +
                            std::to_string(items.size()));
    }
    std::size_t off = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string name = ck.layout[i].at("name").get<std::string>();
        const auto shape = ck.layout[i].at("shape").get<Shape>();
        if (name != items[i].name || shape != items[i].tensor.shape()) {
            throw MismatchError("checkpoint parameter '" + name + "' " +
                                shape_str(shape) + " does not match model '" +
                                items[i].name + "' " +
                                shape_str(items[i].tensor.shape()));
        }
        off += items[i].tensor.numel();
    }
    if (ck.params.numel() != off || ck.adam_m.numel() != off ||
        ck.adam_v.numel() != off) {
        throw MismatchError("checkpoint blob sizes do not match parameter layout");
    }
    off = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& t = model.params().items()[i].tensor;
        const std::size_t n = t.numel();
        std::copy(ck.params.data() + off, ck.params.data() + off + n, t.data());
        std::copy(ck.adam_m.data() + off, ck.adam_m.data() + off + n,
                  opt.moments_m()[i].data());
        std::copy(ck.adam_v.data() + off, ck.adam_v.data() + off + n,
                  opt.moments_v()[i].data());
        off += n;
    }
    opt.set_step_count(ck.meta.step);
}

}  // namespace fenet
