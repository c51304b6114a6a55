#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "cpfean/dataset.hpp"
#include "cpfean/model.hpp"
#include "cpfean/tape.hpp"

namespace cpfean {

// Eq. 1: rs = [x1/w, y1/h, x2/w, y2/h, (x2-x1)/w, (y2-y1)/h].
template <typename Real>
std::array<Real, 6> spatial_features(Real x1, Real y1, Real x2, Real y2, Real w, Real h) {
    require(w > 0 && h > 0, "spatial_features: image size must be positive");
    return {x1 / w, y1 / h, x2 / w, y2 / h, (x2 - x1) / w, (y2 - y1) / h};
}

// Elementwise max over the label word vectors of one region; a region with no
// labels gets a zero vector.
template <typename Real>
Tensor<Real> label_semantic_feature(const Tensor<Real>& labels, std::size_t d_word) {
    if (labels.data.empty()) return Tensor<Real>::zeros({d_word});
    require(labels.rank() == 2 && labels.cols() == d_word,
            "label_semantic_feature: labels must be [k x d_word]");
    Tensor<Real> rt = Tensor<Real>::zeros({d_word});
    for (std::size_t j = 0; j < d_word; ++j) {
        Real best = labels.at(0, j);
        for (std::size_t i = 1; i < labels.rows(); ++i) best = std::max(best, labels.at(i, j));
        rt[j] = best;
    }
    return rt;
}

// The [m x (d_region + 6 + d_word)] input of Eq. 2: each row is {r_i, rs_i,
// rt_i}. Pure data assembly, no gradient flows into it.
template <typename Real>
Tensor<Real> region_inputs(const ImageFeatures<Real>& img, bool ablate_pti, std::size_t d_word) {
    const std::size_t m = img.region_count();
    const std::size_t d_region = img.regions.cols();
    require(img.label_words.size() == m,
            "region_inputs: label_words count != region count for image '" + img.id + "'");
    Tensor<Real> x = Tensor<Real>::zeros({m, d_region + 6 + d_word});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d_region; ++j) x.at(i, j) = img.regions.at(i, j);
        const auto rs = spatial_features(img.boxes.at(i, 0), img.boxes.at(i, 1),
                                         img.boxes.at(i, 2), img.boxes.at(i, 3), img.image_w,
                                         img.image_h);
        for (std::size_t j = 0; j < 6; ++j) x.at(i, d_region + j) = rs[j];
        if (!ablate_pti) {
            const auto rt = label_semantic_feature(img.label_words[i], d_word);
            for (std::size_t j = 0; j < d_word; ++j) x.at(i, d_region + 6 + j) = rt[j];
        }
    }
    return x;
}

// Eq. 2 over all m regions at once: relu(X . W_r) . W_v.
template <typename Real>
typename Tape<Real>::NodeId region_projection(Tape<Real>& tape, typename Tape<Real>::NodeId x,
                                              ImageEncoderParams<Real>& p) {
    const auto h = tape.relu(tape.matmul(x, tape.parameter(p.W_r)));
    return tape.matmul(h, tape.parameter(p.W_v));
}

// One pre-norm Transformer encoder layer at the width of x.
template <typename Real>
typename Tape<Real>::NodeId transformer_layer(Tape<Real>& tape, typename Tape<Real>::NodeId x,
                                              TransformerLayerParams<Real>& p,
                                              std::size_t heads) {
    using NodeId = typename Tape<Real>::NodeId;
    const std::size_t width = tape.value(x).cols();
    require(width % heads == 0, "transformer_layer: width " + std::to_string(width) +
                                    " not divisible by heads " + std::to_string(heads));
    const std::size_t dh = width / heads;

    const NodeId h1 =
        tape.layer_norm(x, tape.parameter(p.ln1_gain), tape.parameter(p.ln1_bias));
    const NodeId q = tape.matmul(h1, tape.parameter(p.W_q));
    const NodeId k = tape.matmul(h1, tape.parameter(p.W_k));
    const NodeId v = tape.matmul(h1, tape.parameter(p.W_v));

    NodeId heads_out = 0;
    for (std::size_t j = 0; j < heads; ++j) {
        const NodeId qj = tape.slice_cols(q, j * dh, dh);
        const NodeId kj = tape.slice_cols(k, j * dh, dh);
        const NodeId vj = tape.slice_cols(v, j * dh, dh);
        const NodeId logits =
            tape.scale(tape.matmul(qj, tape.transpose(kj)), Real(1) / std::sqrt(Real(dh)));
        const NodeId oj = tape.matmul(tape.row_softmax(logits), vj);
        heads_out = j == 0 ? oj : tape.concat_cols(heads_out, oj);
    }
    x = tape.add(x, tape.matmul(heads_out, tape.parameter(p.W_o)));

    const NodeId h2 =
        tape.layer_norm(x, tape.parameter(p.ln2_gain), tape.parameter(p.ln2_bias));
    const NodeId f =
        tape.matmul(tape.relu(tape.matmul(h2, tape.parameter(p.W_f1))), tape.parameter(p.W_f2));
    return tape.add(x, f);
}

// ImageFeatures -> V [m x D]: Eq. 1 + label pooling + Eq. 2, L_pre Transformer
// layers, linear projection, L_post Transformer layers. ablate_pti zeroes
// every rt_i (Table III "w/o PTI").
template <typename Real>
typename Tape<Real>::NodeId encode_image(Tape<Real>& tape, const ImageFeatures<Real>& img,
                                         ModelParams<Real>& mp, bool ablate_pti) {
    using NodeId = typename Tape<Real>::NodeId;
    const ModelConfig& cfg = mp.config;
    require(img.regions.cols() == cfg.d_region,
            "encode_image: image '" + img.id + "' regions are " +
                std::to_string(img.regions.cols()) + "-dim, model d_region is " +
                std::to_string(cfg.d_region));

    const NodeId x = tape.constant(region_inputs(img, ablate_pti, cfg.d_word));
    NodeId h = region_projection(tape, x, mp.image);
    for (auto& layer : mp.image.pre) h = transformer_layer(tape, h, layer, cfg.heads);
    h = tape.layer_norm(h, tape.parameter(mp.image.pre_ln_gain),
                        tape.parameter(mp.image.pre_ln_bias));
    h = tape.matmul(h, tape.parameter(mp.image.P));
    for (auto& layer : mp.image.post) h = transformer_layer(tape, h, layer, cfg.heads);
    return tape.layer_norm(h, tape.parameter(mp.image.post_ln_gain),
                           tape.parameter(mp.image.post_ln_bias));
}

} // namespace cpfean
