#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpfean/dataset.hpp"
#include "cpfean/image_encoder.hpp"
#include "cpfean/model.hpp"
#include "cpfean/tape.hpp"
#include "cpfean/text_encoder.hpp"

namespace cpfean {

// Eq. 5: first index achieving the max cosine to the query, and that value.
template <typename Real>
std::pair<std::size_t, Real> prominent_fragment(const Tensor<Real>& query,
                                                const Tensor<Real>& candidates) {
    require(candidates.rank() == 2 && candidates.rows() >= 1,
            "prominent_fragment: candidates must be a non-empty [q x D] matrix");
    Tensor<Real> q = query;
    if (q.rank() == 1) q.shape = {1, q.size()};
    require(q.rank() == 2 && q.rows() == 1 && q.cols() == candidates.cols(),
            "prominent_fragment: query dim " + shape_string(query.shape) +
                " does not match candidates " + shape_string(candidates.shape));
    const Tensor<Real> c = cosine_matrix(q, candidates, Real(kCosineEps));
    const std::size_t k = argmax_in_row(c, 0);
    return {k, c.at(0, k)};
}

template <typename Real>
struct FusionResult {
    typename Tape<Real>::NodeId vstar;        // [m x D]
    std::vector<std::size_t> word_of_region;  // Eq. 5 selection per region
};

// Eq. 6. For each region the prominent word t_k is selected by cosine on the
// current values (gradient does not flow through the selection itself), then
//   g_i = sigmoid({v_i, t_k} . W_g),  v_i* = g_i (.) v_i + (1 - g_i) (.) tanh({v_i, t_k} . W_h)
template <typename Real>
FusionResult<Real> gated_fusion(Tape<Real>& tape, typename Tape<Real>::NodeId v,
                                typename Tape<Real>::NodeId t, FusionParams<Real>& p) {
    using NodeId = typename Tape<Real>::NodeId;
    const auto& V = tape.value(v);
    const auto& T = tape.value(t);
    require(V.rank() == 2 && T.rank() == 2 && V.cols() == T.cols(),
            "gated_fusion: V " + shape_string(V.shape) + " and T " + shape_string(T.shape) +
                " must share width D");
    const std::size_t m = V.rows();
    const std::size_t D = V.cols();

    const Tensor<Real> c = cosine_matrix(V, T, Real(kCosineEps));
    FusionResult<Real> out;
    out.word_of_region.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.word_of_region.push_back(argmax_in_row(c, i));

    const NodeId t_sel = tape.gather_rows(t, out.word_of_region);
    const NodeId z = tape.concat_cols(v, t_sel);
    const NodeId g = tape.sigmoid(tape.matmul(z, tape.parameter(p.gate_W_g)));
    const NodeId h = tape.tanh_(tape.matmul(z, tape.parameter(p.gate_W_h)));
    const NodeId ones = tape.constant(Tensor<Real>::full({m, D}, Real(1)));
    const NodeId one_minus_g = tape.add(ones, tape.scale(g, Real(-1)));
    out.vstar = tape.add(tape.mul(g, v), tape.mul(one_minus_g, h));
    return out;
}

// Eqs. 7-8 on the tape: s(T, V) = sum_i [max_j cos(t_i, v_j) + max_j cos(t_i, v_j*)].
// With csf disabled the second term is replaced by a copy of the first
// (2 * max over V), keeping the scale.
template <typename Real>
typename Tape<Real>::NodeId pair_similarity(Tape<Real>& tape, typename Tape<Real>::NodeId v,
                                            typename Tape<Real>::NodeId t,
                                            FusionParams<Real>& p, bool ablate_csf) {
    const auto to_v = tape.sum_all(tape.max_over_axis(tape.cosine(t, v), 1));
    if (ablate_csf) return tape.scale(to_v, Real(2));
    const auto fused = gated_fusion(tape, v, t, p);
    const auto to_vstar = tape.sum_all(tape.max_over_axis(tape.cosine(t, fused.vstar), 1));
    return tape.add(to_v, to_vstar);
}

// Value-level Eq. 7 for one word row.
template <typename Real>
Real word_image_similarity(const Tensor<Real>& t, const Tensor<Real>& V,
                           const Tensor<Real>& Vstar) {
    const auto [k1, s1] = prominent_fragment(t, V);
    const auto [k2, s2] = prominent_fragment(t, Vstar);
    return s1 + s2;
}

// Value-level Eq. 8 given precomputed V and V*. ablate_csf doubles the V term
// and ignores Vstar.
template <typename Real>
Real text_image_similarity(const Tensor<Real>& T, const Tensor<Real>& V,
                           const Tensor<Real>& Vstar, bool ablate_csf = false) {
    require(T.rank() == 2 && T.rows() >= 1, "text_image_similarity: T must be [n x D], n >= 1");
    Real total = 0;
    for (std::size_t i = 0; i < T.rows(); ++i) {
        Tensor<Real> row = Tensor<Real>::zeros({T.cols()});
        for (std::size_t j = 0; j < T.cols(); ++j) row[j] = T.at(i, j);
        if (ablate_csf) {
            const auto [k, s] = prominent_fragment(row, V);
            total += Real(2) * s;
        } else {
            total += word_image_similarity(row, V, Vstar);
        }
    }
    return total;
}

struct AlignmentReport {
    std::string caption_id;
    std::string image_id;
    std::vector<std::string> tokens;
    // Per region: index of the word fused by Eq. 6, -1 meaning "none".
    std::vector<std::int64_t> region_fused_word;
    // Per word: Eq. 5 argmax region into V and into V*, with cosine values.
    std::vector<std::size_t> word_best_region;
    std::vector<double> word_best_value;
    std::vector<std::size_t> word_best_region_fused;
    std::vector<double> word_best_value_fused;
};

// Runs the full pair pipeline and records the selections. fuse_floor, when
// set, marks regions whose best cosine falls below it as "none" in the report
// (the fusion itself is unaffected; default has no floor). With flags.csf
// false the fused columns mirror the plain ones and every region reports
// "none".
template <typename Real>
AlignmentReport alignment_report(const CaptionFeatures<Real>& cap, const ImageFeatures<Real>& img,
                                 ModelParams<Real>& mp, const RunFlags& flags,
                                 std::optional<double> fuse_floor = std::nullopt) {
    Tape<Real> tape;
    const auto v = encode_image(tape, img, mp, !flags.pti);
    const auto t = encode_text(tape, cap, mp, !flags.tgr, flags.normalize_affinity);
    const Tensor<Real>& V = tape.value(v);
    const Tensor<Real>& T = tape.value(t);

    AlignmentReport rep;
    rep.caption_id = cap.id;
    rep.image_id = img.id;
    rep.tokens = cap.tokens;

    Tensor<Real> vstar = V;
    if (flags.csf) {
        const auto fused = gated_fusion(tape, v, t, mp.fusion);
        vstar = tape.value(fused.vstar);
        const Tensor<Real> c = cosine_matrix(V, T, Real(kCosineEps));
        for (std::size_t i = 0; i < V.rows(); ++i) {
            const std::size_t k = fused.word_of_region[i];
            const bool floored = fuse_floor.has_value() &&
                                 static_cast<double>(c.at(i, k)) < *fuse_floor;
            rep.region_fused_word.push_back(floored ? -1 : static_cast<std::int64_t>(k));
        }
    } else {
        rep.region_fused_word.assign(V.rows(), -1);
    }

    for (std::size_t i = 0; i < T.rows(); ++i) {
        Tensor<Real> row = Tensor<Real>::zeros({T.cols()});
        for (std::size_t j = 0; j < T.cols(); ++j) row[j] = T.at(i, j);
        const auto [k1, s1] = prominent_fragment(row, V);
        const auto [k2, s2] = prominent_fragment(row, vstar);
        rep.word_best_region.push_back(k1);
        rep.word_best_value.push_back(static_cast<double>(s1));
        rep.word_best_region_fused.push_back(k2);
        rep.word_best_value_fused.push_back(static_cast<double>(s2));
    }
    return rep;
}

} // namespace cpfean
