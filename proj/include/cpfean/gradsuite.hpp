#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpfean/alignment.hpp"
#include "cpfean/dataset.hpp"
#include "cpfean/gradcheck.hpp"
#include "cpfean/image_encoder.hpp"
#include "cpfean/model.hpp"
#include "cpfean/param.hpp"
#include "cpfean/rng.hpp"
#include "cpfean/tape.hpp"
#include "cpfean/text_encoder.hpp"
#include "cpfean/training.hpp"

namespace cpfean {

struct GradCaseResult {
    std::string name;
    double max_rel_err = 0;
    std::size_t coords = 0;
    bool passed = false;
};

struct GradSuiteResult {
    double tolerance = 1e-4;
    std::vector<GradCaseResult> cases;
    bool all_pass = false;
};

namespace gradsuite_detail {

using DTape = Tape<double>;
using DNode = DTape::NodeId;

inline Tensor<double> random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                                    double hi = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline Parameter<double> random_param(Rng& rng, const std::string& name,
                                      std::vector<std::size_t> shape, double lo = -1.0,
                                      double hi = 1.0) {
    Parameter<double> p;
    p.name = name;
    p.value = random_tensor(rng, std::move(shape), lo, hi);
    p.zero_grad();
    return p;
}

// Weighted-sum readout so each output element sees a distinct upstream
// gradient; uniform upstream would mask index errors in structural ops.
inline DNode readout(DTape& tape, DNode out, const Tensor<double>& weights) {
    return tape.sum_all(tape.mul(out, tape.constant(weights)));
}

// Smallest gap between the best and second-best entry across rows of M.
inline double min_row_gap(const Tensor<double>& m) {
    if (m.cols() < 2) return 1e9;
    double gap = 1e9;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double best = m.at(i, 0), second = -1e300;
        for (std::size_t j = 1; j < m.cols(); ++j) {
            const double v = m.at(i, j);
            if (v > best) {
                second = best;
                best = v;
            } else if (v > second) {
                second = v;
            }
        }
        gap = std::min(gap, best - second);
    }
    return gap;
}

// Smallest |margin - S_aa + S_ab| style hinge pre-activation and argmax gap
// of the Eq. 9 loss at S; small values sit near a kink.
inline double hinge_margin(const Tensor<double>& s, double margin) {
    double worst = 1e9;
    const std::size_t B = s.rows();
    for (std::size_t a = 0; a < B; ++a) {
        double row_best = -1e300, col_best = -1e300;
        double row_second = -1e300, col_second = -1e300;
        for (std::size_t b = 0; b < B; ++b) {
            if (b == a) continue;
            const double rv = s.at(a, b);
            if (rv > row_best) {
                row_second = row_best;
                row_best = rv;
            } else if (rv > row_second) {
                row_second = rv;
            }
            const double cv = s.at(b, a);
            if (cv > col_best) {
                col_second = col_best;
                col_best = cv;
            } else if (cv > col_second) {
                col_second = cv;
            }
        }
        worst = std::min(worst, std::fabs(margin - s.at(a, a) + row_best));
        worst = std::min(worst, std::fabs(margin - s.at(a, a) + col_best));
        if (B > 2) {
            worst = std::min(worst, row_best - row_second);
            worst = std::min(worst, col_best - col_second);
        }
    }
    return worst;
}

struct CaseRunner {
    std::uint64_t seed;
    std::size_t instances;
    double tol;
    std::vector<GradCaseResult>* out;

    // body(instance_rng) -> GradCheckReport for one instance.
    void run(const std::string& name, std::uint64_t case_tag,
             const std::function<GradCheckReport(Rng&)>& body) const {
        GradCaseResult res;
        res.name = name;
        res.passed = true;
        for (std::size_t k = 0; k < instances; ++k) {
            Rng rng(derive_seed(derive_seed(seed, case_tag), k));
            const GradCheckReport rep = body(rng);
            res.coords += rep.coords_checked;
            if (rep.max_rel_err > res.max_rel_err) res.max_rel_err = rep.max_rel_err;
        }
        res.passed = res.max_rel_err < tol;
        out->push_back(res);
    }
};

} // namespace gradsuite_detail

// Finite-difference checks (f64, central differences, h = 1e-5) for every
// differentiable tape operation, every model block, and the full Eq. 9 loss.
// Instances are drawn deterministically from `seed`; instances landing too
// close to a kink (relu zero, max tie, hinge boundary) are redrawn, since
// central differences straddle the non-smooth point there.
inline GradSuiteResult run_gradient_suite(std::uint64_t seed, std::size_t instances = 20,
                                          double tol = 1e-4) {
    using namespace gradsuite_detail;
    constexpr double kH = 1e-5;
    GradSuiteResult suite;
    suite.tolerance = tol;
    CaseRunner runner{seed, instances, tol, &suite.cases};

    runner.run("matmul", 1, [&](Rng& rng) {
        auto a = random_param(rng, "A", {3, 4});
        auto b = random_param(rng, "B", {4, 2});
        const auto w = random_tensor(rng, {3, 2});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = tape.matmul(tape.parameter(a), tape.parameter(b));
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&a, &b}, kH);
    });

    runner.run("transpose", 2, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 4});
        const auto w = random_tensor(rng, {4, 3});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.transpose(tape.parameter(x)), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("add", 3, [&](Rng& rng) {
        auto a = random_param(rng, "A", {3, 3});
        auto b = random_param(rng, "B", {3, 3});
        const auto w = random_tensor(rng, {3, 3});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.add(tape.parameter(a), tape.parameter(b)), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&a, &b}, kH);
    });

    runner.run("mul", 4, [&](Rng& rng) {
        auto a = random_param(rng, "A", {3, 3});
        auto b = random_param(rng, "B", {3, 3});
        const auto w = random_tensor(rng, {3, 3});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.mul(tape.parameter(a), tape.parameter(b)), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&a, &b}, kH);
    });

    runner.run("affine", 5, [&](Rng& rng) {
        auto x = random_param(rng, "X", {2, 5});
        const auto w = random_tensor(rng, {2, 5});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.affine(tape.parameter(x), 1.7, -0.3), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("relu", 6, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 4});
        for (int tries = 0; tries < 100; ++tries) {
            bool near_kink = false;
            for (double v : x.value.data) near_kink = near_kink || std::fabs(v) < 1e-3;
            if (!near_kink) break;
            x.value = random_tensor(rng, {3, 4});
        }
        const auto w = random_tensor(rng, {3, 4});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.relu(tape.parameter(x)), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("tanh", 7, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 4});
        const auto w = random_tensor(rng, {3, 4});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.tanh_(tape.parameter(x)), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("sigmoid", 8, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 4});
        const auto w = random_tensor(rng, {3, 4});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.sigmoid(tape.parameter(x)), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("row_softmax", 9, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 5}, -2.0, 2.0);
        const auto w = random_tensor(rng, {3, 5});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.row_softmax(tape.parameter(x)), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("layer_norm", 10, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 6});
        auto gain = random_param(rng, "gain", {6}, 0.5, 1.5);
        auto bias = random_param(rng, "bias", {6}, -0.5, 0.5);
        const auto w = random_tensor(rng, {3, 6});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = tape.layer_norm(tape.parameter(x), tape.parameter(gain),
                                               tape.parameter(bias));
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x, &gain, &bias}, kH);
    });

    const auto run_max_axis = [&](const std::string& name, std::uint64_t tag, std::size_t axis) {
        runner.run(name, tag, [&, axis](Rng& rng) {
            auto x = random_param(rng, "X", {4, 5});
            for (int tries = 0; tries < 100; ++tries) {
                Tensor<double> probe = x.value;
                if (axis == 0) {
                    probe = Tensor<double>::zeros({x.value.cols(), x.value.rows()});
                    for (std::size_t i = 0; i < x.value.rows(); ++i)
                        for (std::size_t j = 0; j < x.value.cols(); ++j)
                            probe.at(j, i) = x.value.at(i, j);
                }
                if (min_row_gap(probe) > 1e-3) break;
                x.value = random_tensor(rng, {4, 5});
            }
            const auto w = random_tensor(rng, {axis == 1 ? std::size_t(4) : std::size_t(5)});
            return finite_difference_check<double>(
                [&](bool g) {
                    DTape tape;
                    const auto y = tape.max_over_axis(tape.parameter(x), axis);
                    const auto loss = tape.sum_all(tape.mul(y, tape.constant(w)));
                    if (g) tape.backward(loss);
                    return tape.value(loss)[0];
                },
                {&x}, kH);
        });
    };
    run_max_axis("max_over_axis.rows", 11, 1);
    run_max_axis("max_over_axis.cols", 12, 0);

    runner.run("sum_all", 13, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 4});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = tape.sum_all(tape.parameter(x));
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("concat_cols", 14, [&](Rng& rng) {
        auto a = random_param(rng, "A", {3, 2});
        auto b = random_param(rng, "B", {3, 4});
        const auto w = random_tensor(rng, {3, 6});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = tape.concat_cols(tape.parameter(a), tape.parameter(b));
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&a, &b}, kH);
    });

    runner.run("slice_cols", 15, [&](Rng& rng) {
        auto x = random_param(rng, "X", {3, 6});
        const auto w = random_tensor(rng, {3, 3});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = readout(tape, tape.slice_cols(tape.parameter(x), 1, 3), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("gather_rows", 16, [&](Rng& rng) {
        auto x = random_param(rng, "X", {5, 3});
        const auto w = random_tensor(rng, {4, 3});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = tape.gather_rows(tape.parameter(x), {0, 2, 2, 4});
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&x}, kH);
    });

    runner.run("stack_scalars", 17, [&](Rng& rng) {
        std::vector<Parameter<double>> ps;
        std::vector<Parameter<double>*> ptrs;
        for (int i = 0; i < 6; ++i)
            ps.push_back(random_param(rng, "s" + std::to_string(i), {1}));
        for (auto& p : ps) ptrs.push_back(&p);
        const auto w = random_tensor(rng, {2, 3});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                std::vector<DNode> ids;
                for (auto& p : ps) ids.push_back(tape.parameter(p));
                const auto loss = readout(tape, tape.stack_scalars(ids, 2, 3), w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            ptrs, kH);
    });

    runner.run("cosine", 18, [&](Rng& rng) {
        auto a = random_param(rng, "A", {3, 4});
        auto b = random_param(rng, "B", {5, 4});
        const auto w = random_tensor(rng, {3, 5});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = tape.cosine(tape.parameter(a), tape.parameter(b));
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&a, &b}, kH);
    });

    runner.run("triplet_loss_hard", 19, [&](Rng& rng) {
        auto s = random_param(rng, "S", {4, 4});
        for (int tries = 0; tries < 200; ++tries) {
            if (hinge_margin(s.value, 0.2) > 1e-3) break;
            s.value = random_tensor(rng, {4, 4});
        }
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = tape.triplet_loss_hard(tape.parameter(s), 0.2);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&s}, kH);
    });

    // ---- model blocks ----

    const ModelConfig tiny = [] {
        ModelConfig c;
        c.d_region = 5;
        c.d_word = 4;
        c.d_hidden = 8;
        c.D = 8;
        c.layers_pre = 1;
        c.layers_post = 1;
        c.heads = 2;
        c.ff_mult = 2;
        return c;
    }();

    const auto random_image = [](Rng& rng, const ModelConfig& mc, std::size_t m) {
        ImageFeatures<double> img;
        img.id = "gradimg";
        img.regions = random_tensor(rng, {m, mc.d_region});
        img.boxes = Tensor<double>::zeros({m, 4});
        img.image_w = 640;
        img.image_h = 480;
        for (std::size_t i = 0; i < m; ++i) {
            const double x1 = rng.uniform() * 640.0;
            const double y1 = rng.uniform() * 480.0;
            img.boxes.at(i, 0) = x1;
            img.boxes.at(i, 1) = y1;
            img.boxes.at(i, 2) = x1 + rng.uniform() * (640.0 - x1);
            img.boxes.at(i, 3) = y1 + rng.uniform() * (480.0 - y1);
        }
        for (std::size_t i = 0; i < m; ++i)
            img.label_words.push_back(i == 0 ? Tensor<double>()
                                             : random_tensor(rng, {2, mc.d_word}));
        return img;
    };

    const auto random_caption = [](Rng& rng, const ModelConfig& mc, std::size_t n,
                                   const std::string& image_id) {
        CaptionFeatures<double> cap;
        cap.id = "gradcap";
        cap.image_id = image_id;
        cap.words = random_tensor(rng, {n, mc.d_word});
        for (std::size_t i = 0; i < n; ++i) cap.tokens.push_back("w" + std::to_string(i));
        return cap;
    };

    runner.run("region_projection", 20, [&](Rng& rng) {
        ModelParams<double> mp = ModelParams<double>::random_init(tiny, rng.below(1u << 30));
        const auto x = random_tensor(rng, {3, tiny.concat_dim()});
        const auto w = random_tensor(rng, {3, tiny.d_hidden});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = region_projection(tape, tape.constant(x), mp.image);
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&mp.image.W_r, &mp.image.W_v}, kH);
    });

    runner.run("transformer_layer", 21, [&](Rng& rng) {
        auto layer = TransformerLayerParams<double>::make("layer", 8, 2, rng);
        auto x = random_param(rng, "x", {3, 8});
        const auto w = random_tensor(rng, {3, 8});
        std::vector<Parameter<double>*> ptrs = {&x};
        layer.collect(ptrs);
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = transformer_layer(tape, tape.parameter(x), layer, 2);
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            ptrs, kH, 24, derive_seed(seed, 210));
    });

    runner.run("encode_image", 22, [&](Rng& rng) {
        ModelParams<double> mp = ModelParams<double>::random_init(tiny, rng.below(1u << 30));
        const auto img = random_image(rng, tiny, 3);
        const auto w = random_tensor(rng, {3, tiny.D});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = encode_image(tape, img, mp, false);
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            mp.parameters(), kH, 12, derive_seed(seed, 220));
    });

    runner.run("encode_text", 23, [&](Rng& rng) {
        ModelParams<double> mp = ModelParams<double>::random_init(tiny, rng.below(1u << 30));
        const auto cap = random_caption(rng, tiny, 3, "gradimg");
        const auto w = random_tensor(rng, {3, tiny.D});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto y = encode_text(tape, cap, mp, false, true);
                const auto loss = readout(tape, y, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            mp.parameters(), kH, 12, derive_seed(seed, 230));
    });

    runner.run("gated_fusion", 24, [&](Rng& rng) {
        ModelParams<double> mp = ModelParams<double>::random_init(tiny, rng.below(1u << 30));
        auto v = random_param(rng, "V", {3, tiny.D});
        auto t = random_param(rng, "T", {4, tiny.D});
        for (int tries = 0; tries < 100; ++tries) {
            if (min_row_gap(cosine_matrix(v.value, t.value, kCosineEps)) > 1e-3) break;
            v.value = random_tensor(rng, {3, tiny.D});
            t.value = random_tensor(rng, {4, tiny.D});
        }
        const auto w = random_tensor(rng, {3, tiny.D});
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto fused =
                    gated_fusion(tape, tape.parameter(v), tape.parameter(t), mp.fusion);
                const auto loss = readout(tape, fused.vstar, w);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&v, &t, &mp.fusion.gate_W_g, &mp.fusion.gate_W_h}, kH);
    });

    runner.run("pair_similarity", 25, [&](Rng& rng) {
        ModelParams<double> mp = ModelParams<double>::random_init(tiny, rng.below(1u << 30));
        auto v = random_param(rng, "V", {3, tiny.D});
        auto t = random_param(rng, "T", {4, tiny.D});
        const auto side_gaps = [&]() {
            DTape probe;
            const auto fused =
                gated_fusion(probe, probe.parameter(v), probe.parameter(t), mp.fusion);
            const double g1 = min_row_gap(cosine_matrix(v.value, t.value, kCosineEps));
            const double g2 = min_row_gap(cosine_matrix(t.value, v.value, kCosineEps));
            const double g3 =
                min_row_gap(cosine_matrix(t.value, probe.value(fused.vstar), kCosineEps));
            return std::min({g1, g2, g3});
        };
        for (int tries = 0; tries < 100; ++tries) {
            if (side_gaps() > 1e-3) break;
            v.value = random_tensor(rng, {3, tiny.D});
            t.value = random_tensor(rng, {4, tiny.D});
        }
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto loss = pair_similarity(tape, tape.parameter(v), tape.parameter(t),
                                                  mp.fusion, false);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            {&v, &t, &mp.fusion.gate_W_g, &mp.fusion.gate_W_h}, kH);
    });

    runner.run("eq9_full_loss", 26, [&](Rng& rng) {
        Dataset<double> ds;
        ds.manifest = {1, tiny.d_region, tiny.d_word, 1};
        Batch batch;
        for (std::size_t i = 0; i < 3; ++i) {
            auto img = random_image(rng, tiny, 3);
            img.id = "img" + std::to_string(i);
            auto cap = random_caption(rng, tiny, 3, img.id);
            cap.id = "cap" + std::to_string(i);
            ds.images.push_back(std::move(img));
            ds.captions.push_back(std::move(cap));
            ds.image_index.emplace(ds.images.back().id, i);
            ds.caption_image.push_back(i);
            batch.caption_ids.push_back(i);
            batch.image_ids.push_back(i);
            batch.pair_image.push_back(i);
        }
        ModelParams<double> mp;
        const RunFlags flags;
        for (int tries = 0; tries < 100; ++tries) {
            mp = ModelParams<double>::random_init(tiny, rng.below(1u << 30));
            DTape probe;
            const auto s = batch_similarity(probe, batch, ds, mp, flags);
            if (hinge_margin(probe.value(s), 0.2) > 1e-3) break;
        }
        return finite_difference_check<double>(
            [&](bool g) {
                DTape tape;
                const auto s = batch_similarity(tape, batch, ds, mp, flags);
                const auto loss = tape.triplet_loss_hard(s, 0.2);
                if (g) tape.backward(loss);
                return tape.value(loss)[0];
            },
            mp.parameters(), kH, 10, derive_seed(seed, 260));
    });

    suite.all_pass = true;
    for (const auto& c : suite.cases) suite.all_pass = suite.all_pass && c.passed;
    return suite;
}

} // namespace cpfean
