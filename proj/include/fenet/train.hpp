#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fenet/checkpoint.hpp"
#include "fenet/config.hpp"
#include "fenet/data.hpp"
#include "fenet/ensemble.hpp"
#include "fenet/model.hpp"
#include "fenet/optim.hpp"

namespace fenet {

struct EpochLog {
    std::size_t epoch = 0;  // 1-based in logs
    double lr = 0.0;
    double train_loss = 0.0;
    double valid_top1_ensemble = 0.0;
    std::vector<double> valid_top1_heads;
    double seconds = 0.0;
};

inline nlohmann::json epoch_log_to_json(const EpochLog& e) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["train_loss"] = e.train_loss;
    j["valid_top1_ensemble"] = e.valid_top1_ensemble;
    j["valid_top1_heads"] = e.valid_top1_heads;
    j["seconds"] = e.seconds;
    return j;
}

struct TrainResult {
    std::vector<EpochLog> logs;
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
    double best_valid_top1 = -1.0;
    std::size_t best_epoch = 0;
    // Parameters that never saw a nonzero gradient during the first trained
    // epoch; should be empty for a healthy model.
    std::vector<std::string> silent_params;
};

// Deterministic full-split evaluation; parameters are never mutated.
inline EvalReport evaluate(const Model<float>& model,
                           const std::vector<MultimodalSample>& samples,
                           std::size_t batch_size, const std::string& split_name) {
    if (samples.empty()) throw UsageError("evaluate: split '" + split_name + "' is empty");
    const std::size_t k = model.config().num_classes;
    EvalReport report;
    report.split = split_name;
    report.n_samples = samples.size();
    report.num_classes = k;
    report.confusion.assign(k * k, 0);
    report.top1_per_head.assign(model.num_streams(), 0.0);

    std::size_t ensemble_hits = 0;
    std::vector<std::size_t> head_hits(model.num_streams(), 0);

    for (const auto& batch : batch_indices(samples.size(), batch_size, std::nullopt)) {
        const Batch b = assemble_batch(samples, batch);
        const ModelOutput<float> out = model.forward(b.rgb, b.rdm);
        std::vector<Tensor<float>> probs;
        probs.reserve(out.streams.size());
        for (const auto& s : out.streams) probs.push_back(softmax(s.logits));
        const Tensor<float> p_final = ensemble_average(probs);
        const std::vector<int> y_hat = predict(p_final);
        for (std::size_t h = 0; h < probs.size(); ++h) {
            const std::vector<int> head_pred = predict(probs[h]);
            for (std::size_t i = 0; i < head_pred.size(); ++i)
                if (head_pred[i] == b.labels[i]) ++head_hits[h];
        }
        for (std::size_t i = 0; i < y_hat.size(); ++i) {
            if (y_hat[i] == b.labels[i]) ++ensemble_hits;
            report.confusion[std::size_t(b.labels[i]) * k + std::size_t(y_hat[i])]++;
        }
    }
    report.top1_ensemble = double(ensemble_hits) / double(samples.size());
    for (std::size_t h = 0; h < head_hits.size(); ++h)
        report.top1_per_head[h] = double(head_hits[h]) / double(samples.size());
    return report;
}

// End-to-end training. All four streams run on both modalities, the summed
// per-head loss is backpropagated, AdamW steps with a per-epoch cosine
// schedule. Keeps the best-validation checkpoint plus the latest one for
// resume. Fully deterministic given (config, seed, dataset).
inline TrainResult train(const RunConfig& cfg, const DatasetManifest& manifest,
                         const std::filesystem::path& out_dir,
                         std::ostream* live_log = nullptr,
                         const std::optional<std::filesystem::path>& resume_from =
                             std::nullopt) {
    cfg.train.validate();
    if (manifest.classes.size() != cfg.model.num_classes) {
        throw MismatchError("manifest has " + std::to_string(manifest.classes.size()) +
                            " classes, config expects " +
                            std::to_string(cfg.model.num_classes));
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create output directory: " + out_dir.string());
    }

    const auto train_samples = load_split(manifest, "train", cfg.data.target_rgb_size,
                                          cfg.data.target_rdm_size);
    const auto valid_samples = load_split(manifest, "valid", cfg.data.target_rgb_size,
                                          cfg.data.target_rdm_size);

    Model<float> model(cfg.model);
    AdamW<float> opt(model.params(),
                     {cfg.train.weight_decay, cfg.train.beta1, cfg.train.beta2,
                      cfg.train.eps});

    const nlohmann::json config_json = run_config_to_json(cfg);
    const std::string cfg_hash = config_hash(config_json);

    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.config_hash = cfg_hash;
    meta.run_config = config_json;

    std::size_t start_epoch = 0;
    if (resume_from) {
        const LoadedCheckpoint ck = load_checkpoint(*resume_from);
        if (ck.meta.config_hash != cfg_hash) {
            const std::string field =
                json_diff_path(ck.meta.run_config, config_json);
            throw MismatchError("checkpoint config differs from run config at field " +
                                (field.empty() ? std::string("<hash>") : field));
        }
        apply_checkpoint(ck, model, opt);
        start_epoch = ck.meta.epoch;
        meta.best_valid_top1 = ck.meta.best_valid_top1;
        meta.best_epoch = ck.meta.best_epoch;
    } else {
        model.init_params(cfg.seed);
    }

    TrainResult result;
    result.best_valid_top1 = meta.best_valid_top1;
    result.best_epoch = meta.best_epoch;
    result.best_checkpoint = out_dir / "ckpt_best";
    result.last_checkpoint = out_dir / "ckpt_last";

    std::ofstream log_file(out_dir / "train_log.jsonl",
                           start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!log_file) throw IoError("cannot write train log in " + out_dir.string());

    const bool instrument = start_epoch == 0;
    std::vector<char> saw_grad(model.params().tensor_count(), 0);

    for (std::size_t epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cosine_lr(epoch, cfg.train.epochs, cfg.train.base_lr,
                                    cfg.train.min_lr);
        const auto batches = batch_indices(train_samples.size(), cfg.train.batch_size,
                                           split_seed(cfg.seed, "shuffle", epoch));
        double loss_sum = 0.0;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const Batch b = assemble_batch(train_samples, batches[step]);
            model.params().zero_grads();
            Tape<float> tape;
            Tensor<float> loss;
            {
                Tape<float>::Scope scope(tape);
                const ModelOutput<float> out = model.forward(b.rgb, b.rdm);
                loss = total_loss(out.head_logits(), b.labels);
            }
            const double loss_value = double(loss.item());
            if (!std::isfinite(loss_value)) {
                throw DataError("loss is not finite at epoch " +
                                std::to_string(epoch + 1) + " step " +
                                std::to_string(step + 1));
            }
            tape.backward(loss);
            if (instrument && epoch == 0) {
                const auto& items = model.params().items();
                for (std::size_t i = 0; i < items.size(); ++i) {
                    if (saw_grad[i]) continue;
                    for (const float g : items[i].tensor.grad_or_empty()) {
                        if (g != 0.0f) {
                            saw_grad[i] = 1;
                            break;
                        }
                    }
                }
            }
            opt.step(lr);
            loss_sum += loss_value;
        }

        const EvalReport valid_report =
            evaluate(model, valid_samples, cfg.train.batch_size, "valid");

        EpochLog log;
        log.epoch = epoch + 1;
        log.lr = lr;
        log.train_loss = loss_sum / double(batches.size());
        log.valid_top1_ensemble = valid_report.top1_ensemble;
        log.valid_top1_heads = valid_report.top1_per_head;
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                    t0).count();
        result.logs.push_back(log);
        const std::string line = epoch_log_to_json(log).dump();
        log_file << line << '\n';
        log_file.flush();
        if (live_log) (*live_log) << line << std::endl;

        meta.epoch = epoch + 1;
        meta.step = opt.step_count();
        if (valid_report.top1_ensemble > meta.best_valid_top1) {
            meta.best_valid_top1 = valid_report.top1_ensemble;
            meta.best_epoch = epoch + 1;
            save_checkpoint(result.best_checkpoint, model, opt, meta);
        }
        save_checkpoint(result.last_checkpoint, model, opt, meta);
    }

    result.best_valid_top1 = meta.best_valid_top1;
    result.best_epoch = meta.best_epoch;
    if (instrument) {
        const auto& items = model.params().items();
        for (std::size_t i = 0; i < items.size(); ++i)
            if (!saw_grad[i]) result.silent_params.push_back(items[i].name);
    }
    return result;
}

// Rebuilds the model a checkpoint was trained with and evaluates a split.
inline EvalReport evaluate_checkpoint(const LoadedCheckpoint& ck,
                                      const DatasetManifest& manifest,
                                      const std::string& split,
                                      std::size_t batch_size = 0) {
    const RunConfig cfg = parse_run_config(ck.meta.run_config);
    if (manifest.classes.size() != cfg.model.num_classes) {
        throw MismatchError("manifest has " + std::to_string(manifest.classes.size()) +
                            " classes, checkpoint model expects " +
                            std::to_string(cfg.model.num_classes));
    }
    Model<float> model(cfg.model);
    AdamW<float> opt(model.params(), {});
    apply_checkpoint(ck, model, opt);
    const auto samples = load_split(manifest, split, cfg.data.target_rgb_size,
                                    cfg.data.target_rdm_size);
    return evaluate(model, samples, batch_size ? batch_size : cfg.train.batch_size,
                    split);
}

}  // namespace fenet
