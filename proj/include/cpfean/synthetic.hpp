#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpfean/dataset.hpp"
#include "cpfean/tensor.hpp"

namespace cpfean {

struct SyntheticSpec {
    std::uint32_t num_images = 8;
    std::uint32_t captions_per_image = 2;
    std::uint32_t m = 6;
    std::uint32_t n = 5;
    std::uint32_t d_region = 32;
    std::uint32_t d_word = 32;
    std::uint32_t concepts = 3;
    double noise = 0.05;
    std::uint64_t seed = 7;
};

// Where the generator planted things, for tests and reports.
struct SyntheticPlan {
    Tensor<float> region_concepts;                           // [C x d_region], unit rows
    Tensor<float> word_concepts;                             // [C x d_word], unit rows, paired by row
    std::vector<std::vector<std::uint32_t>> image_concepts;  // per image, embedded concept ids
    std::vector<std::vector<std::uint32_t>> image_rows;      // per image, region row per concept
    std::vector<std::vector<std::uint32_t>> caption_rows;    // per caption, word row per concept
};

// Writes manifest.json plus feature files under out_dir. Deterministic in the
// spec: same spec gives byte-identical output.
SyntheticPlan gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

} // namespace cpfean
