#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "cpfean/rng.hpp"
#include "cpfean/synthetic.hpp"
#include "cpfean/training.hpp"

using namespace cpfean;
using doctest::Approx;

namespace {

double oracle_triplet(const Tensor<double>& s, double margin) {
    const std::size_t B = s.rows();
    double total = 0;
    for (std::size_t a = 0; a < B; ++a) {
        double row_max = -1e300, col_max = -1e300;
        for (std::size_t b = 0; b < B; ++b) {
            if (b == a) continue;
            row_max = std::max(row_max, s.at(a, b));
            col_max = std::max(col_max, s.at(b, a));
        }
        if (B > 1) {
            total += std::max(0.0, margin - s.at(a, a) + row_max);
            total += std::max(0.0, margin - s.at(a, a) + col_max);
        }
    }
    return total;
}

double loss_value(const Tensor<double>& s, double margin) {
    Tape<double> tape;
    return tape.value(tape.triplet_loss_hard(tape.constant(s), margin))[0];
}

Dataset<double> generated(const std::string& tag, SyntheticSpec spec) {
    const auto dir = (std::filesystem::temp_directory_path() / ("cpfean_" + tag)).string();
    std::filesystem::remove_all(dir);
    gen_synthetic(spec, dir);
    return load_dataset<double>(dir);
}

} // namespace

TEST_CASE("triplet_loss_hard closed forms") {
    auto easy = Tensor<double>::full({3, 3}, 0.5);
    for (std::size_t i = 0; i < 3; ++i) easy.at(i, i) = 0.9;
    CHECK(loss_value(easy, 0.2) == 0.0);

    auto hard = Tensor<double>::full({2, 2}, 0.6);
    hard.at(0, 0) = 0.5;
    hard.at(1, 1) = 0.5;
    CHECK(loss_value(hard, 0.2) == Approx(1.2).epsilon(1e-12));

    CHECK(loss_value(Tensor<double>::matrix({{-3.0}}), 0.2) == 0.0);

    Tape<double> tape;
    const auto rect = tape.constant(Tensor<double>::zeros({2, 3}));
    CHECK_THROWS_AS(tape.triplet_loss_hard(rect, 0.2), ValidationError);
}

TEST_CASE("triplet_loss_hard equals the brute-force oracle") {
    Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        auto s = Tensor<double>::zeros({4, 4});
        for (auto& v : s.data) v = rng.uniform(-1, 1);
        CHECK(loss_value(s, 0.2) == Approx(oracle_triplet(s, 0.2)).epsilon(1e-12));
    }
}

TEST_CASE("batch_similarity matches the single-pair path") {
    SyntheticSpec spec;
    spec.num_images = 3;
    spec.captions_per_image = 1;
    spec.m = 3;
    spec.n = 3;
    spec.d_region = 8;
    spec.d_word = 8;
    spec.concepts = 2;
    const auto ds = generated("batchsim", spec);
    auto mp = ModelParams<double>::random_init(ModelConfig::desk(8, 8, 8), 17);
    const RunFlags flags;

    const auto batches = batch_iter(ds.captions, ds.images, 3, 5, 0);
    REQUIRE(batches.size() == 1);
    const auto& batch = batches[0];

    Tape<double> tape;
    const auto s = tape.value(batch_similarity(tape, batch, ds, mp, flags));
    REQUIRE(s.rows() == 3);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            Tape<double> t2;
            const auto v = encode_image(t2, ds.images[batch.image_ids[batch.pair_image[b]]],
                                        mp, false);
            const auto t = encode_text(t2, ds.captions[batch.caption_ids[a]], mp, false, true);
            const auto cell = pair_similarity(t2, v, t, mp.fusion, false);
            CHECK(s.at(a, b) == Approx(t2.value(cell)[0]).epsilon(1e-6));
        }
    }
}

TEST_CASE("batch_similarity single and duplicated captions") {
    SyntheticSpec spec;
    spec.num_images = 2;
    spec.captions_per_image = 1;
    spec.m = 2;
    spec.n = 2;
    spec.d_region = 6;
    spec.d_word = 6;
    spec.concepts = 1;
    const auto ds = generated("batchone", spec);
    auto mp = ModelParams<double>::random_init(ModelConfig::desk(6, 6, 8), 23);
    const RunFlags flags;

    Batch one;
    one.caption_ids = {0};
    one.image_ids = {0};
    one.pair_image = {0};
    Tape<double> tape;
    const auto s1 = tape.value(batch_similarity(tape, one, ds, mp, flags));
    REQUIRE(s1.size() == 1);

    Tape<double> t2;
    const auto v = encode_image(t2, ds.images[0], mp, false);
    const auto t = encode_text(t2, ds.captions[0], mp, false, true);
    const auto fused = gated_fusion(t2, v, t, mp.fusion);
    const double direct = text_image_similarity(t2.value(t), t2.value(v),
                                                t2.value(fused.vstar));
    CHECK(s1[0] == Approx(direct).epsilon(1e-6));

    Batch dup;
    dup.caption_ids = {0, 0};
    dup.image_ids = {0, 1};
    dup.pair_image = {0, 1};
    Tape<double> t3;
    const auto s2 = t3.value(batch_similarity(t3, dup, ds, mp, flags));
    for (std::size_t b = 0; b < 2; ++b) CHECK(s2.at(0, b) == s2.at(1, b));

    Batch empty;
    Tape<double> t4;
    CHECK_THROWS_AS(batch_similarity(t4, empty, ds, mp, flags), ValidationError);
}

TEST_CASE("fit with lr=0 leaves parameters untouched") {
    SyntheticSpec spec;
    spec.num_images = 5;
    spec.captions_per_image = 1;
    spec.m = 2;
    spec.n = 2;
    spec.d_region = 6;
    spec.d_word = 6;
    spec.concepts = 1;
    const auto ds = generated("fitzero", spec);

    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 9;
    cfg.D = 8;
    auto [params, logs] = fit(ds, cfg);
    CHECK(logs.size() == 2);
    CHECK(std::isfinite(logs[0].mean_loss));
    CHECK(logs[0].mean_loss > 0.0);

    auto fresh = ModelParams<double>::random_init(ModelConfig::desk(6, 6, 8), 9);
    auto got = params.parameters();
    auto want = fresh.parameters();
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i]->value.data == want[i]->value.data);
}

TEST_CASE("fit is deterministic and honors target_rsum") {
    SyntheticSpec spec;
    spec.num_images = 8;
    spec.captions_per_image = 1;
    spec.m = 2;
    spec.n = 2;
    spec.d_region = 8;
    spec.d_word = 8;
    spec.concepts = 1;
    spec.noise = 0.0;
    spec.seed = 3;
    const auto ds = generated("fitdet", spec);

    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.epochs = 100;
    cfg.batch_size = 8;
    cfg.decay_period = 100;
    cfg.seed = 0;
    cfg.D = 8;
    cfg.target_rsum = 600;
    auto [p1, logs1] = fit(ds, cfg);
    CHECK(logs1.size() < 100);
    CHECK(logs1.back().metrics.rsum_value == 600.0);
    CHECK(logs1.back().epoch == logs1.size());

    auto [p2, logs2] = fit(ds, cfg);
    REQUIRE(logs2.size() == logs1.size());
    auto a = p1.parameters();
    auto b = p2.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.data == b[i]->value.data);
}

TEST_CASE("fit writes checkpoints at the configured cadence") {
    SyntheticSpec spec;
    spec.num_images = 5;
    spec.captions_per_image = 1;
    spec.m = 2;
    spec.n = 2;
    spec.d_region = 6;
    spec.d_word = 6;
    spec.concepts = 1;
    const auto ds = generated("fitckpt", spec);

    const auto out = std::filesystem::temp_directory_path() / "cpfean_ckpts";
    std::filesystem::remove_all(out);
    TrainConfig cfg;
    cfg.lr = 1e-4;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.D = 8;
    cfg.checkpoint_every = 1;
    auto [params, logs] = fit(ds, cfg, out.string());
    CHECK(std::filesystem::exists(out / "epoch1.ckpt"));
    CHECK(std::filesystem::exists(out / "epoch2.ckpt"));
    CHECK(std::filesystem::exists(out / "final.ckpt"));

    auto loaded = load_checkpoint<double>((out / "final.ckpt").string());
    CHECK(loaded.config.D == 8);
    auto got = loaded.parameters();
    auto want = params.parameters();
    for (std::size_t i = 0; i < got.size(); ++i) {
        REQUIRE(got[i]->value.shape == want[i]->value.shape);
        for (std::size_t k = 0; k < got[i]->value.size(); ++k)
            CHECK(got[i]->value.data[k] ==
                  static_cast<double>(static_cast<float>(want[i]->value.data[k])));
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.margin = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.margin = 0.2;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.batch_size = 16;
    cfg.decay_period = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.decay_period = 15;
    cfg.lr = -1e-5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
