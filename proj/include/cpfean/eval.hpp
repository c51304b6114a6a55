#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpfean/alignment.hpp"
#include "cpfean/dataset.hpp"
#include "cpfean/model.hpp"
#include "cpfean/tensor.hpp"

namespace cpfean {

enum class Direction { TextRetrieval, ImageRetrieval };

struct SimilarityMatrix {
    Tensor<double> scores;                   // [num_captions x num_images]
    std::vector<std::size_t> caption_image;  // ground-truth column per caption row

    void validate() const {
        require(scores.rank() == 2, "similarity: scores must be rank 2");
        require(caption_image.size() == scores.rows(),
                "similarity: ground truth covers " + std::to_string(caption_image.size()) +
                    " captions for " + std::to_string(scores.rows()) + " rows");
        for (auto b : caption_image)
            require(b < scores.cols(), "similarity: ground-truth image column " +
                                           std::to_string(b) + " out of range");
    }
};

// Rank position of `target` among `count` candidates scored by `score(j)`,
// descending, ties broken toward the lower index.
template <typename ScoreFn>
std::size_t rank_of(std::size_t target, std::size_t count, ScoreFn&& score) {
    const double s = score(target);
    std::size_t rank = 0;
    for (std::size_t j = 0; j < count; ++j) {
        if (j == target) continue;
        const double v = score(j);
        if (v > s || (v == s && j < target)) ++rank;
    }
    return rank;
}

// R@K percentage. image_retrieval ranks image columns per caption row;
// text_retrieval ranks caption rows per image column, a hit when ANY of the
// image's captions lands in the top K.
inline double recall_at_k(const SimilarityMatrix& sim, Direction dir, std::size_t K) {
    sim.validate();
    require(K >= 1, "recall_at_k: K must be >= 1");
    const std::size_t nc = sim.scores.rows();
    const std::size_t ni = sim.scores.cols();

    if (dir == Direction::ImageRetrieval) {
        require(K <= ni, "recall_at_k: K = " + std::to_string(K) + " exceeds " +
                             std::to_string(ni) + " image candidates");
        std::size_t hits = 0;
        for (std::size_t a = 0; a < nc; ++a) {
            const auto rank = rank_of(sim.caption_image[a], ni,
                                      [&](std::size_t j) { return sim.scores.at(a, j); });
            if (rank < K) ++hits;
        }
        return 100.0 * static_cast<double>(hits) / static_cast<double>(nc);
    }

    require(K <= nc, "recall_at_k: K = " + std::to_string(K) + " exceeds " +
                         std::to_string(nc) + " caption candidates");
    std::size_t hits = 0;
    for (std::size_t b = 0; b < ni; ++b) {
        bool hit = false;
        for (std::size_t a = 0; a < nc && !hit; ++a) {
            if (sim.caption_image[a] != b) continue;
            const auto rank =
                rank_of(a, nc, [&](std::size_t j) { return sim.scores.at(j, b); });
            hit = rank < K;
        }
        if (hit) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ni);
}

// Eq. 10, exact left-to-right sum, text trio then image trio.
inline double rsum(double r1_text, double r5_text, double r10_text, double r1_image,
                   double r5_image, double r10_image) {
    return r1_text + r5_text + r10_text + r1_image + r5_image + r10_image;
}

// Desk variant for sets too small for K=10: the four K \in {1,5} recalls
// scaled by 6/4 onto the Eq. 10 range, reported as desk-rSum.
inline double desk_rsum(double r1_text, double r5_text, double r1_image, double r5_image) {
    return (r1_text + r5_text + r1_image + r5_image) * 1.5;
}

struct MetricsReport {
    double r1_text = 0, r5_text = 0, r10_text = 0;
    double r1_image = 0, r5_image = 0, r10_image = 0;
    bool desk_mode = false;  // true: R@10 not computed, rsum_value is desk-rSum
    double rsum_value = 0;
};

inline MetricsReport evaluate_matrix(const SimilarityMatrix& sim) {
    MetricsReport rep;
    rep.r1_text = recall_at_k(sim, Direction::TextRetrieval, 1);
    rep.r5_text = recall_at_k(sim, Direction::TextRetrieval, 5);
    rep.r1_image = recall_at_k(sim, Direction::ImageRetrieval, 1);
    rep.r5_image = recall_at_k(sim, Direction::ImageRetrieval, 5);
    rep.desk_mode = sim.scores.rows() < 10 || sim.scores.cols() < 10;
    if (rep.desk_mode) {
        rep.rsum_value = desk_rsum(rep.r1_text, rep.r5_text, rep.r1_image, rep.r5_image);
    } else {
        rep.r10_text = recall_at_k(sim, Direction::TextRetrieval, 10);
        rep.r10_image = recall_at_k(sim, Direction::ImageRetrieval, 10);
        rep.rsum_value = rsum(rep.r1_text, rep.r5_text, rep.r10_text, rep.r1_image, rep.r5_image,
                              rep.r10_image);
    }
    return rep;
}

// Full caption x image similarity matrix with frozen params.
template <typename Real>
SimilarityMatrix compute_similarity_matrix(const Dataset<Real>& ds, ModelParams<Real>& params,
                                           const RunFlags& flags) {
    using NodeId = typename Tape<Real>::NodeId;
    Tape<Real> tape;
    std::vector<NodeId> v_nodes;
    v_nodes.reserve(ds.images.size());
    for (const auto& img : ds.images) v_nodes.push_back(encode_image(tape, img, params, !flags.pti));
    std::vector<NodeId> t_nodes;
    t_nodes.reserve(ds.captions.size());
    for (const auto& cap : ds.captions)
        t_nodes.push_back(encode_text(tape, cap, params, !flags.tgr, flags.normalize_affinity));

    SimilarityMatrix sim;
    sim.scores = Tensor<double>::zeros({ds.captions.size(), ds.images.size()});
    sim.caption_image = ds.caption_image;
    for (std::size_t a = 0; a < ds.captions.size(); ++a)
        for (std::size_t b = 0; b < ds.images.size(); ++b) {
            const NodeId cell =
                pair_similarity(tape, v_nodes[b], t_nodes[a], params.fusion, !flags.csf);
            sim.scores.at(a, b) = static_cast<double>(tape.value(cell)[0]);
        }
    return sim;
}

template <typename Real>
MetricsReport evaluate_split(const Dataset<Real>& ds, ModelParams<Real>& params,
                             const RunFlags& flags) {
    const auto sim = compute_similarity_matrix(ds, params, flags);
    const auto rep = evaluate_matrix(sim);
    require(rep.rsum_value == rep.rsum_value, "evaluate_split: non-finite rSum");
    return rep;
}

} // namespace cpfean
