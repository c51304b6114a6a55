#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cpfean/adam.hpp"
#include "cpfean/alignment.hpp"
#include "cpfean/dataset.hpp"
#include "cpfean/eval.hpp"
#include "cpfean/image_encoder.hpp"
#include "cpfean/model.hpp"
#include "cpfean/tape.hpp"
#include "cpfean/text_encoder.hpp"

namespace cpfean {

struct TrainConfig {
    double margin = 0.2;
    double lr = 1e-5;
    std::uint32_t epochs = 30;
    std::uint32_t batch_size = 16;
    std::uint32_t decay_period = 15;
    std::uint64_t seed = 0;
    bool csf = true;
    bool pti = true;
    bool tgr = true;
    bool normalize_affinity = true;
    std::uint32_t D = 32;
    std::uint32_t checkpoint_every = 0;  // also checkpoints after the last epoch
    double target_rsum = 0;              // stop once validation rSum reaches this; 0 = off

    RunFlags flags() const { return RunFlags{csf, pti, tgr, normalize_affinity}; }

    void validate() const {
        require(margin >= 0, "train config: margin must be >= 0");
        require(lr >= 0, "train config: lr must be >= 0");
        require(batch_size >= 1, "train config: batch_size must be >= 1");
        require(decay_period >= 1, "train config: decay_period must be >= 1");
        require(D >= 1, "train config: D must be >= 1");
        require(target_rsum >= 0, "train config: target_rsum must be >= 0");
    }
};

struct EpochLog {
    std::uint32_t epoch = 0;  // 1-based in logs
    double mean_loss = 0;
    double lr = 0;
    MetricsReport metrics;
};

// S[a][b] = s(caption_a, image_of_pair_b) over one batch, on the tape.
// Images are encoded once per distinct image; every cell owns its fusion
// subgraph since Eq. 5 selection depends on the caption.
template <typename Real>
typename Tape<Real>::NodeId batch_similarity(Tape<Real>& tape, const Batch& batch,
                                             const Dataset<Real>& ds, ModelParams<Real>& params,
                                             const RunFlags& flags) {
    using NodeId = typename Tape<Real>::NodeId;
    require(batch.size() >= 1, "batch_similarity: empty batch");
    std::vector<NodeId> v_nodes;
    v_nodes.reserve(batch.image_ids.size());
    for (auto u : batch.image_ids)
        v_nodes.push_back(encode_image(tape, ds.images[u], params, !flags.pti));
    std::vector<NodeId> t_nodes;
    t_nodes.reserve(batch.size());
    for (auto c : batch.caption_ids)
        t_nodes.push_back(encode_text(tape, ds.captions[c], params, !flags.tgr,
                                      flags.normalize_affinity));

    const std::size_t B = batch.size();
    std::vector<NodeId> cells;
    cells.reserve(B * B);
    for (std::size_t a = 0; a < B; ++a)
        for (std::size_t b = 0; b < B; ++b)
            cells.push_back(pair_similarity(tape, v_nodes[batch.pair_image[b]], t_nodes[a],
                                            params.fusion, !flags.csf));
    return tape.stack_scalars(cells, B, B);
}

// Eq. 9 training loop: deterministic in config.seed, gradients zeroed between
// steps, epoch logs carry mean loss, effective lr, and validation metrics on
// the given dataset. Writes checkpoints under out_dir unless it is empty.
template <typename Real>
std::pair<ModelParams<Real>, std::vector<EpochLog>> fit(
    const Dataset<Real>& ds, const TrainConfig& cfg, const std::string& out_dir = "",
    const std::function<void(const EpochLog&)>& on_epoch = {}) {
    cfg.validate();
    const ModelConfig mc = ModelConfig::desk(ds.manifest.d_region, ds.manifest.d_word, cfg.D);
    ModelParams<Real> params = ModelParams<Real>::random_init(mc, cfg.seed);
    auto registry = params.parameters();
    AdamState<Real> opt(registry, cfg.lr, static_cast<int>(cfg.decay_period));
    const RunFlags flags = cfg.flags();

    const auto checkpoint = [&](const std::string& name) {
        if (out_dir.empty()) return;
        std::filesystem::create_directories(out_dir);
        save_checkpoint(params, (std::filesystem::path(out_dir) / name).string());
    };

    std::vector<EpochLog> logs;
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = batch_iter(ds.captions, ds.images, cfg.batch_size, cfg.seed, epoch);
        double loss_sum = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            Tape<Real> tape;
            const auto s = batch_similarity(tape, batches[bi], ds, params, flags);
            const auto loss = tape.triplet_loss_hard(s, Real(cfg.margin));
            const double loss_value = static_cast<double>(tape.value(loss)[0]);
            if (!std::isfinite(loss_value))
                throw NumericError("training: non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(bi + 1));
            params.zero_grads();
            tape.backward(loss);
            adam_step(opt, registry, static_cast<int>(epoch));
            loss_sum += loss_value;
        }

        EpochLog log;
        log.epoch = epoch + 1;
        log.mean_loss = loss_sum / static_cast<double>(batches.size());
        log.lr = opt.effective_lr(static_cast<int>(epoch));
        log.metrics = evaluate_split(ds, params, flags);
        logs.push_back(log);
        if (on_epoch) on_epoch(log);
        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            checkpoint("epoch" + std::to_string(epoch + 1) + ".ckpt");
        if (cfg.target_rsum > 0 && log.metrics.rsum_value >= cfg.target_rsum) break;
    }
    checkpoint("final.ckpt");
    return {std::move(params), std::move(logs)};
}

} // namespace cpfean
