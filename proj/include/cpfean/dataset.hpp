#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpfean/tensor.hpp"

namespace cpfean {

struct DatasetManifest {
    std::uint32_t version = 1;
    std::uint32_t d_region = 0;
    std::uint32_t d_word = 0;
    std::uint32_t captions_per_image = 0;
};

// Region features for one image. label_words[i] is [k_i x d_word]; a region
// with no labels keeps a default-constructed (empty) tensor there.
template <typename Real>
struct ImageFeatures {
    std::string id;
    Tensor<Real> regions;     // [m x d_region]
    Tensor<Real> boxes;       // [m x 4], (x1, y1, x2, y2) in pixels
    Real image_w = 0;
    Real image_h = 0;
    std::vector<Tensor<Real>> label_words;

    std::size_t region_count() const { return regions.rows(); }
};

template <typename Real>
struct CaptionFeatures {
    std::string id;
    std::string image_id;
    Tensor<Real> words; // [n x d_word]
    std::vector<std::string> tokens;

    std::size_t word_count() const { return words.rows(); }
};

template <typename Real>
struct Dataset {
    DatasetManifest manifest;
    std::vector<ImageFeatures<Real>> images;
    std::vector<CaptionFeatures<Real>> captions;
    std::unordered_map<std::string, std::size_t> image_index; // image id -> position
    std::vector<std::size_t> caption_image;                   // caption pos -> image pos
};

// One mini-batch of positive pairs. Images are deduplicated: captions of the
// same image share one slot in image_ids, and pair_image[b] points caption b
// at its image's slot.
struct Batch {
    std::vector<std::size_t> caption_ids; // indices into dataset captions
    std::vector<std::size_t> image_ids;   // deduplicated indices into dataset images
    std::vector<std::size_t> pair_image;  // per caption, position within image_ids

    std::size_t size() const { return caption_ids.size(); }
};

// Directory layout: <dir>/manifest.json plus one container file per image and
// caption. Manifest fields: version, d_region, d_word, captions_per_image,
// images[] ({id, file}), captions[] ({id, image_id, file, tokens}).
// Feature files hold f32 regardless of Real.
template <typename Real>
Dataset<Real> load_dataset(const std::string& dir);

template <typename Real>
void save_dataset(const std::string& dir, const DatasetManifest& manifest,
                  const std::vector<ImageFeatures<Real>>& images,
                  const std::vector<CaptionFeatures<Real>>& captions);

// Deterministic per (seed, epoch): shuffles caption order, cuts into chunks of
// B, keeps the short tail batch.
template <typename Real>
std::vector<Batch> batch_iter(const std::vector<CaptionFeatures<Real>>& captions,
                              const std::vector<ImageFeatures<Real>>& images, std::size_t B,
                              std::uint64_t seed, std::uint64_t epoch);

} // namespace cpfean
