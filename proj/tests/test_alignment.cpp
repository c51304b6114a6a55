#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <vector>

#include "cpfean/alignment.hpp"
#include "cpfean/gradcheck.hpp"
#include "cpfean/rng.hpp"
#include "cpfean/synthetic.hpp"
#include "cpfean/training.hpp"

using namespace cpfean;
using doctest::Approx;

namespace {

Parameter<double> param(const std::string& name, Tensor<double> v) {
    return Parameter<double>(name, std::move(v));
}

Tensor<double> random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    auto t = Tensor<double>::zeros({r, c});
    for (auto& v : t.data) v = rng.uniform(-1, 1);
    return t;
}

FusionParams<double> fusion(std::size_t D, double gate_fill, double h_fill) {
    FusionParams<double> p;
    p.gate_W_g = param("gate_W_g", Tensor<double>::full({2 * D, D}, gate_fill));
    p.gate_W_h = param("gate_W_h", Tensor<double>::full({2 * D, D}, h_fill));
    return p;
}

double plain_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    return dot / std::sqrt(na * nb);
}

std::vector<double> row_of(const Tensor<double>& t, std::size_t i) {
    std::vector<double> out(t.cols());
    for (std::size_t j = 0; j < t.cols(); ++j) out[j] = t.at(i, j);
    return out;
}

// Straight-line Eq. 5-8 with no code shared with the library.
double oracle_similarity(const Tensor<double>& V, const Tensor<double>& T,
                         const Tensor<double>& Wg, const Tensor<double>& Wh) {
    const std::size_t m = V.rows(), n = T.rows(), D = V.cols();
    std::vector<std::vector<double>> vstar(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto vi = row_of(V, i);
        std::size_t k = 0;
        double best = plain_cos(vi, row_of(T, 0));
        for (std::size_t j = 1; j < n; ++j) {
            const double c = plain_cos(vi, row_of(T, j));
            if (c > best) {
                best = c;
                k = j;
            }
        }
        std::vector<double> z = vi;
        const auto tk = row_of(T, k);
        z.insert(z.end(), tk.begin(), tk.end());
        vstar[i].resize(D);
        for (std::size_t j = 0; j < D; ++j) {
            double pg = 0, ph = 0;
            for (std::size_t u = 0; u < 2 * D; ++u) {
                pg += z[u] * Wg.at(u, j);
                ph += z[u] * Wh.at(u, j);
            }
            const double g = 1.0 / (1.0 + std::exp(-pg));
            vstar[i][j] = g * vi[j] + (1.0 - g) * std::tanh(ph);
        }
    }
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto ti = row_of(T, i);
        double best_v = plain_cos(ti, row_of(V, 0));
        double best_f = plain_cos(ti, vstar[0]);
        for (std::size_t j = 1; j < m; ++j) {
            best_v = std::max(best_v, plain_cos(ti, row_of(V, j)));
            best_f = std::max(best_f, plain_cos(ti, vstar[j]));
        }
        total += best_v + best_f;
    }
    return total;
}

double tape_similarity(const Tensor<double>& V, const Tensor<double>& T,
                       FusionParams<double>& p, bool ablate_csf = false) {
    Tape<double> tape;
    const auto s =
        pair_similarity(tape, tape.constant(V), tape.constant(T), p, ablate_csf);
    return tape.value(s)[0];
}

} // namespace

TEST_CASE("prominent_fragment picks the first max cosine") {
    const auto v = Tensor<double>::matrix({{1, 0}});
    const auto [k1, s1] =
        prominent_fragment(v, Tensor<double>::matrix({{0, 1}, {0.6, 0.8}}));
    CHECK(k1 == 1);
    CHECK(s1 == Approx(0.6).epsilon(1e-12));

    const auto [k2, s2] = prominent_fragment(v, Tensor<double>::matrix({{1, 0}, {1, 0}}));
    CHECK(k2 == 0);
    CHECK(s2 == Approx(1.0).epsilon(1e-12));

    const auto [k3, s3] = prominent_fragment(v, Tensor<double>::matrix({{-1, 0}}));
    CHECK(k3 == 0);
    CHECK(s3 == Approx(-1.0).epsilon(1e-12));

    CHECK_THROWS_AS(prominent_fragment(v, Tensor<double>()), ValidationError);
    CHECK_THROWS_AS(prominent_fragment(v, Tensor<double>::matrix({{1, 2, 3}})),
                    ValidationError);
}

TEST_CASE("gated_fusion limits") {
    const std::size_t D = 4;
    Rng rng(2);
    auto vv = Tensor<double>::zeros({3, D});
    auto tv = Tensor<double>::zeros({2, D});
    for (auto& x : vv.data) x = rng.uniform(0.1, 1.0);
    for (auto& x : tv.data) x = rng.uniform(0.1, 1.0);

    auto open = fusion(D, 40.0, 0.3);
    Tape<double> tape;
    const auto v = tape.constant(vv);
    const auto t = tape.constant(tv);
    const auto fused = gated_fusion(tape, v, t, open);
    const auto& vstar = tape.value(fused.vstar);
    REQUIRE(fused.word_of_region.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < D; ++j)
            CHECK(std::abs(vstar.at(i, j) - vv.at(i, j)) < 1e-6);

    auto closed = fusion(D, 0.0, 0.0);
    Tape<double> tape2;
    const auto f2 = gated_fusion(tape2, tape2.constant(vv), tape2.constant(tv), closed);
    const auto& half = tape2.value(f2.vstar);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < D; ++j) CHECK(half.at(i, j) == 0.5 * vv.at(i, j));

    Tape<double> tape3;
    const auto wide = tape3.constant(Tensor<double>::zeros({2, D + 1}));
    CHECK_THROWS_AS(gated_fusion(tape3, tape3.constant(vv), wide, open), ValidationError);
}

TEST_CASE("gated_fusion gradient matches finite differences") {
    const std::size_t D = 4;
    Rng rng(7);
    const auto vv = random_matrix(rng, 3, D);
    const auto tv = random_matrix(rng, 2, D);
    FusionParams<double> p;
    p.gate_W_g = param("gate_W_g", random_matrix(rng, 2 * D, D));
    p.gate_W_h = param("gate_W_h", random_matrix(rng, 2 * D, D));
    const auto rep = finite_difference_check<double>(
        [&](bool g) {
            Tape<double> tape;
            const auto fused =
                gated_fusion(tape, tape.constant(vv), tape.constant(tv), p);
            const auto loss = tape.sum_all(fused.vstar);
            if (g) tape.backward(loss);
            return tape.value(loss)[0];
        },
        {&p.gate_W_g, &p.gate_W_h}, 1e-5);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gate components stay strictly inside (0,1)") {
    const auto cfg = ModelConfig::desk(4, 3, 8);
    auto mp = ModelParams<double>::random_init(cfg, 3);
    Rng rng(9);
    const auto vv = random_matrix(rng, 4, 8);
    const auto tv = random_matrix(rng, 3, 8);
    Tape<double> tape;
    const auto fused = gated_fusion(tape, tape.constant(vv), tape.constant(tv), mp.fusion);
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t k = fused.word_of_region[i];
        for (std::size_t j = 0; j < 8; ++j) {
            double pre = 0;
            for (std::size_t u = 0; u < 8; ++u) {
                pre += vv.at(i, u) * mp.fusion.gate_W_g.value.at(u, j);
                pre += tv.at(k, u) * mp.fusion.gate_W_g.value.at(8 + u, j);
            }
            const double g = 1.0 / (1.0 + std::exp(-pre));
            CHECK(g > 0.0);
            CHECK(g < 1.0);
        }
    }
}

TEST_CASE("word_image_similarity sums the two max cosines") {
    const auto v08 = Tensor<double>::matrix({{0.8, 0.6}});
    const auto t = Tensor<double>::full({2}, 0.0);
    auto t10 = Tensor<double>::zeros({2});
    t10[0] = 1.0;
    CHECK(word_image_similarity(t10, v08, v08) == Approx(1.6).epsilon(1e-12));

    const auto ortho = Tensor<double>::matrix({{0, 1}, {0, -1}});
    CHECK(word_image_similarity(t10, ortho, ortho) == 0.0);

    const auto v = Tensor<double>::matrix({{1, 0}, {0, 1}});
    const auto vs = Tensor<double>::matrix({{-1, 0}, {0, -1}});
    CHECK(word_image_similarity(t10, v, vs) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("text_image_similarity sums over words") {
    const auto v = Tensor<double>::matrix({{0.8, 0.6}});
    auto T = Tensor<double>::zeros({3, 2});
    for (std::size_t i = 0; i < 3; ++i) T.at(i, 0) = 1.0;
    CHECK(text_image_similarity(T, v, v) == Approx(3 * 1.6).epsilon(1e-12));

    const auto single = Tensor<double>::matrix({{1, 0}});
    auto row = Tensor<double>::zeros({2});
    row[0] = 1.0;
    CHECK(text_image_similarity(single, v, v) == word_image_similarity(row, v, v));

    CHECK(text_image_similarity(single, v, v, true) == Approx(1.6).epsilon(1e-12));
    CHECK_THROWS_AS(text_image_similarity(Tensor<double>(), v, v), ValidationError);
}

TEST_CASE("pair similarity equals the straight-line oracle") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 1 + rng.below(6);
        const std::size_t n = 1 + rng.below(6);
        const std::size_t D = 2 + rng.below(7);
        const auto V = random_matrix(rng, m, D);
        const auto T = random_matrix(rng, n, D);
        FusionParams<double> p;
        p.gate_W_g = param("gate_W_g", random_matrix(rng, 2 * D, D));
        p.gate_W_h = param("gate_W_h", random_matrix(rng, 2 * D, D));
        const double got = tape_similarity(V, T, p);
        const double want = oracle_similarity(V, T, p.gate_W_g.value, p.gate_W_h.value);
        CHECK(got == Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("similarity is invariant to region and word order") {
    Rng rng(14);
    const std::size_t m = 5, n = 4, D = 6;
    const auto V = random_matrix(rng, m, D);
    const auto T = random_matrix(rng, n, D);
    FusionParams<double> p;
    p.gate_W_g = param("gate_W_g", random_matrix(rng, 2 * D, D));
    p.gate_W_h = param("gate_W_h", random_matrix(rng, 2 * D, D));
    const double base = tape_similarity(V, T, p);

    std::vector<std::size_t> vperm = {3, 0, 4, 1, 2};
    auto V2 = Tensor<double>::zeros({m, D});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < D; ++j) V2.at(i, j) = V.at(vperm[i], j);
    CHECK(std::abs(tape_similarity(V2, T, p) - base) < 1e-5);

    std::vector<std::size_t> tperm = {2, 3, 0, 1};
    auto T2 = Tensor<double>::zeros({n, D});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < D; ++j) T2.at(i, j) = T.at(tperm[i], j);
    CHECK(std::abs(tape_similarity(V, T2, p) - base) < 1e-5);
}

TEST_CASE("scaling a region row preserves Eq. 5 selections only") {
    Rng rng(26);
    const std::size_t m = 4, n = 3, D = 5;
    const auto V = random_matrix(rng, m, D);
    const auto T = random_matrix(rng, n, D);
    auto scaled = V;
    const std::size_t j = 2;
    for (std::size_t c = 0; c < D; ++c) scaled.at(j, c) *= 3.0;

    for (std::size_t i = 0; i < n; ++i) {
        const auto ti = Tensor<double>({1, D}, row_of(T, i));
        const auto [k1, s1] = prominent_fragment(ti, V);
        const auto [k2, s2] = prominent_fragment(ti, scaled);
        CHECK(k1 == k2);
        if (k1 != j) CHECK(s1 == Approx(s2).epsilon(1e-6));
    }

    FusionParams<double> p;
    p.gate_W_g = param("gate_W_g", random_matrix(rng, 2 * D, D));
    p.gate_W_h = param("gate_W_h", random_matrix(rng, 2 * D, D));
    CHECK(std::abs(tape_similarity(scaled, T, p) - tape_similarity(V, T, p)) > 1e-9);
}

TEST_CASE("alignment_report fields and determinism") {
    const auto dir = (std::filesystem::temp_directory_path() / "cpfean_align").string();
    std::filesystem::remove_all(dir);
    SyntheticSpec spec;
    spec.num_images = 2;
    spec.d_region = 8;
    spec.d_word = 8;
    spec.m = 4;
    spec.n = 3;
    gen_synthetic(spec, dir);
    const auto ds = load_dataset<double>(dir);
    auto mp = ModelParams<double>::random_init(ModelConfig::desk(8, 8, 8), 5);

    const RunFlags flags;
    const auto rep = alignment_report(ds.captions[0], ds.images[0], mp, flags);
    CHECK(rep.caption_id == ds.captions[0].id);
    CHECK(rep.image_id == ds.images[0].id);
    CHECK(rep.tokens.size() == 3);
    REQUIRE(rep.word_best_region.size() == 3);
    REQUIRE(rep.region_fused_word.size() == 4);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rep.word_best_region[i] < 4);
        CHECK(rep.word_best_region_fused[i] < 4);
        CHECK(std::abs(rep.word_best_value[i]) <= 1.0 + 1e-12);
        CHECK(std::abs(rep.word_best_value_fused[i]) <= 1.0 + 1e-12);
    }
    for (auto k : rep.region_fused_word) {
        CHECK(k >= 0);
        CHECK(k < 3);
    }

    const auto again = alignment_report(ds.captions[0], ds.images[0], mp, flags);
    CHECK(again.word_best_region == rep.word_best_region);
    CHECK(again.word_best_value == rep.word_best_value);
    CHECK(again.region_fused_word == rep.region_fused_word);

    RunFlags no_csf;
    no_csf.csf = false;
    const auto plain = alignment_report(ds.captions[0], ds.images[0], mp, no_csf);
    CHECK(plain.region_fused_word == std::vector<std::int64_t>(4, -1));
    CHECK(plain.word_best_region_fused == plain.word_best_region);
    CHECK(plain.word_best_value_fused == plain.word_best_value);

    const auto floored = alignment_report(ds.captions[0], ds.images[0], mp, flags, 2.0);
    CHECK(floored.region_fused_word == std::vector<std::int64_t>(4, -1));
    CHECK(floored.word_best_region == rep.word_best_region);
}

// A model whose image path routes each region's pooled label vector straight
// through Eq. 2 and the (zeroed) Transformer stacks, and whose text path is
// the identity embedding. Each planted word then lands on its planted region
// purely via the generator's label pairing.
TEST_CASE("planted pairs surface through a passthrough model") {
    const auto dir = (std::filesystem::temp_directory_path() / "cpfean_planted").string();
    std::filesystem::remove_all(dir);
    SyntheticSpec spec;
    spec.noise = 0.0;
    spec.seed = 3;
    const auto plan = gen_synthetic(spec, dir);
    const auto ds = load_dataset<double>(dir);

    const std::size_t d = spec.d_word;
    const auto cfg = ModelConfig::desk(spec.d_region, d, d);
    auto mp = ModelParams<double>::random_init(cfg, 0);
    for (auto& layer : mp.image.pre) {
        for (auto* w : {&layer.W_q, &layer.W_k, &layer.W_v, &layer.W_o, &layer.W_f1, &layer.W_f2})
            w->value = Tensor<double>::zeros(w->value.shape);
    }
    for (auto& layer : mp.image.post) {
        for (auto* w : {&layer.W_q, &layer.W_k, &layer.W_v, &layer.W_o, &layer.W_f1, &layer.W_f2})
            w->value = Tensor<double>::zeros(w->value.shape);
    }
    const std::size_t off = spec.d_region + 6;
    mp.image.W_r.value = Tensor<double>::zeros({off + d, 2 * d});
    mp.image.W_v.value = Tensor<double>::zeros({2 * d, 2 * d});
    mp.image.P.value = Tensor<double>::zeros({2 * d, d});
    mp.text.W_embed.value = Tensor<double>::zeros({d, d});
    for (std::size_t j = 0; j < d; ++j) {
        mp.image.W_r.value.at(off + j, j) = 1.0;
        mp.image.W_r.value.at(off + j, d + j) = -1.0;
        mp.image.W_v.value.at(j, j) = 1.0;
        mp.image.W_v.value.at(d + j, d + j) = 1.0;
        mp.image.P.value.at(j, j) = 1.0;
        mp.image.P.value.at(d + j, j) = -1.0;
        mp.text.W_embed.value.at(j, j) = 1.0;
    }

    RunFlags flags;
    flags.tgr = false;
    for (std::size_t i = 0; i < ds.captions.size(); ++i) {
        const auto img = ds.caption_image[i];
        const auto rep = alignment_report(ds.captions[i], ds.images[img], mp, flags);
        REQUIRE(plan.caption_rows[i].size() == plan.image_rows[img].size());
        for (std::size_t k = 0; k < plan.caption_rows[i].size(); ++k) {
            const std::size_t word_row = plan.caption_rows[i][k];
            CHECK(rep.tokens[word_row].rfind("concept", 0) == 0);
            CHECK(rep.word_best_region[word_row] == plan.image_rows[img][k]);
        }
    }
}
