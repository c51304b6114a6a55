#pragma once

#include "cpfean/dataset.hpp"
#include "cpfean/model.hpp"
#include "cpfean/tape.hpp"

namespace cpfean {

// S_hat = words . W_embed, no bias.
template <typename Real>
typename Tape<Real>::NodeId embed_words(Tape<Real>& tape, typename Tape<Real>::NodeId words,
                                        TextEncoderParams<Real>& p) {
    return tape.matmul(words, tape.parameter(p.W_embed));
}

// Eq. 3: R = (S_hat . W_phi) (S_hat . W_psi)^T, row-vector convention.
template <typename Real>
typename Tape<Real>::NodeId affinity_matrix(Tape<Real>& tape, typename Tape<Real>::NodeId s_hat,
                                            TextEncoderParams<Real>& p) {
    const auto phi = tape.matmul(s_hat, tape.parameter(p.W_phi));
    const auto psi = tape.matmul(s_hat, tape.parameter(p.W_psi));
    return tape.matmul(phi, tape.transpose(psi));
}

// Eq. 4: T = ((M . S_hat) . W_g) . W_r + S_hat, with M = row_softmax(R) when
// normalize, else M = R (literal form).
template <typename Real>
typename Tape<Real>::NodeId gcn_residual(Tape<Real>& tape, typename Tape<Real>::NodeId s_hat,
                                         typename Tape<Real>::NodeId r,
                                         TextEncoderParams<Real>& p, bool normalize) {
    const auto& R = tape.value(r);
    require(R.rank() == 2 && R.rows() == R.cols() && R.rows() == tape.value(s_hat).rows(),
            "gcn_residual: affinity must be [n x n] matching S_hat rows");
    const auto m = normalize ? tape.row_softmax(r) : r;
    const auto mixed = tape.matmul(tape.matmul(m, s_hat), tape.parameter(p.gcn_W_g));
    return tape.add(tape.matmul(mixed, tape.parameter(p.gcn_W_r)), s_hat);
}

// CaptionFeatures -> T [n x D]. ablate_tgr returns S_hat unchanged (Table III
// "w/o TGR").
template <typename Real>
typename Tape<Real>::NodeId encode_text(Tape<Real>& tape, const CaptionFeatures<Real>& cap,
                                        ModelParams<Real>& mp, bool ablate_tgr,
                                        bool normalize_affinity) {
    require(cap.words.cols() == mp.config.d_word,
            "encode_text: caption '" + cap.id + "' words are " +
                std::to_string(cap.words.cols()) + "-dim, model d_word is " +
                std::to_string(mp.config.d_word));
    const auto words = tape.constant(cap.words);
    const auto s_hat = embed_words(tape, words, mp.text);
    if (ablate_tgr) return s_hat;
    const auto r = affinity_matrix(tape, s_hat, mp.text);
    return gcn_residual(tape, s_hat, r, mp.text, normalize_affinity);
}

} // namespace cpfean
