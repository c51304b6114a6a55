#include "cpfean/synthetic.hpp"

#include <cmath>

#include "cpfean/errors.hpp"
#include "cpfean/rng.hpp"

namespace cpfean {

namespace {

constexpr double kImageW = 640.0;
constexpr double kImageH = 480.0;

std::vector<float> unit_vector(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    double norm_sq = 0;
    for (auto& x : v) {
        x = rng.normal();
        norm_sq += x * x;
    }
    const double norm = std::sqrt(norm_sq);
    std::vector<float> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

std::vector<float> noisy_copy(Rng& rng, const Tensor<float>& concepts, std::size_t row,
                              double sigma) {
    std::vector<float> out(concepts.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(concepts.at(row, i)) +
                                    sigma * rng.normal());
    return out;
}

std::vector<std::uint32_t> pick_distinct(Rng& rng, std::uint32_t count, std::uint32_t pool) {
    std::vector<std::uint32_t> ids(pool);
    for (std::uint32_t i = 0; i < pool; ++i) ids[i] = i;
    rng.shuffle(ids);
    ids.resize(count);
    return ids;
}

std::string pad4(std::uint32_t v) {
    std::string s = std::to_string(v);
    while (s.size() < 4) s.insert(s.begin(), '0');
    return s;
}

} // namespace

SyntheticPlan gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    require(spec.num_images >= 1, "gen_synthetic: num_images must be >= 1");
    require(spec.captions_per_image >= 1, "gen_synthetic: captions_per_image must be >= 1");
    require(spec.m >= 1 && spec.n >= 1, "gen_synthetic: m and n must be >= 1");
    require(spec.d_region >= 1 && spec.d_word >= 1,
            "gen_synthetic: d_region and d_word must be >= 1");
    require(spec.concepts >= 1, "gen_synthetic: concepts must be >= 1");
    require(spec.concepts <= spec.m && spec.concepts <= spec.n,
            "gen_synthetic: concepts must be <= min(m, n)");
    require(spec.noise >= 0, "gen_synthetic: noise must be >= 0");

    Rng rng(spec.seed);
    SyntheticPlan plan;
    plan.region_concepts = Tensor<float>::zeros({spec.concepts, spec.d_region});
    plan.word_concepts = Tensor<float>::zeros({spec.concepts, spec.d_word});
    for (std::uint32_t c = 0; c < spec.concepts; ++c) {
        const auto rc = unit_vector(rng, spec.d_region);
        const auto wc = unit_vector(rng, spec.d_word);
        for (std::size_t i = 0; i < rc.size(); ++i) plan.region_concepts.at(c, i) = rc[i];
        for (std::size_t i = 0; i < wc.size(); ++i) plan.word_concepts.at(c, i) = wc[i];
    }

    std::vector<ImageFeatures<float>> images;
    std::vector<CaptionFeatures<float>> captions;

    for (std::uint32_t ii = 0; ii < spec.num_images; ++ii) {
        const std::uint32_t subset = 1 + static_cast<std::uint32_t>(rng.below(spec.concepts));
        const auto concept_ids = pick_distinct(rng, subset, spec.concepts);
        const auto rows = pick_distinct(rng, subset, spec.m);
        plan.image_concepts.push_back(concept_ids);
        plan.image_rows.push_back(rows);

        std::vector<std::int64_t> concept_of_row(spec.m, -1);
        for (std::uint32_t k = 0; k < subset; ++k) concept_of_row[rows[k]] = concept_ids[k];

        ImageFeatures<float> img;
        img.id = "img" + pad4(ii);
        img.regions = Tensor<float>::zeros({spec.m, spec.d_region});
        img.boxes = Tensor<float>::zeros({spec.m, 4});
        img.image_w = static_cast<float>(kImageW);
        img.image_h = static_cast<float>(kImageH);
        for (std::uint32_t r = 0; r < spec.m; ++r) {
            const std::int64_t c = concept_of_row[r];
            const auto row = c >= 0
                                 ? noisy_copy(rng, plan.region_concepts,
                                              static_cast<std::size_t>(c), spec.noise)
                                 : unit_vector(rng, spec.d_region);
            for (std::size_t i = 0; i < row.size(); ++i) img.regions.at(r, i) = row[i];

            const double x1 = rng.uniform() * kImageW;
            const double x2 = x1 + rng.uniform() * (kImageW - x1);
            const double y1 = rng.uniform() * kImageH;
            const double y2 = y1 + rng.uniform() * (kImageH - y1);
            img.boxes.at(r, 0) = static_cast<float>(x1);
            img.boxes.at(r, 1) = static_cast<float>(y1);
            img.boxes.at(r, 2) = static_cast<float>(x2);
            img.boxes.at(r, 3) = static_cast<float>(y2);

            Tensor<float> label = Tensor<float>::zeros({1, spec.d_word});
            const auto lw = c >= 0 ? noisy_copy(rng, plan.word_concepts,
                                                static_cast<std::size_t>(c), spec.noise)
                                   : unit_vector(rng, spec.d_word);
            for (std::size_t i = 0; i < lw.size(); ++i) label.at(0, i) = lw[i];
            img.label_words.push_back(std::move(label));
        }
        images.push_back(std::move(img));

        for (std::uint32_t jj = 0; jj < spec.captions_per_image; ++jj) {
            const auto word_rows = pick_distinct(rng, subset, spec.n);
            plan.caption_rows.push_back(word_rows);
            std::vector<std::int64_t> concept_of_word(spec.n, -1);
            for (std::uint32_t k = 0; k < subset; ++k) concept_of_word[word_rows[k]] = concept_ids[k];

            CaptionFeatures<float> cap;
            cap.id = "cap" + pad4(ii) + "_" + std::to_string(jj);
            cap.image_id = "img" + pad4(ii);
            cap.words = Tensor<float>::zeros({spec.n, spec.d_word});
            for (std::uint32_t r = 0; r < spec.n; ++r) {
                const std::int64_t c = concept_of_word[r];
                const auto row = c >= 0 ? noisy_copy(rng, plan.word_concepts,
                                                     static_cast<std::size_t>(c), spec.noise)
                                        : unit_vector(rng, spec.d_word);
                for (std::size_t i = 0; i < row.size(); ++i) cap.words.at(r, i) = row[i];
                cap.tokens.push_back(c >= 0 ? "concept" + std::to_string(c)
                                            : "filler" + std::to_string(r));
            }
            captions.push_back(std::move(cap));
        }
    }

    DatasetManifest manifest;
    manifest.version = 1;
    manifest.d_region = spec.d_region;
    manifest.d_word = spec.d_word;
    manifest.captions_per_image = spec.captions_per_image;
    save_dataset<float>(out_dir, manifest, images, captions);
    return plan;
}

} // namespace cpfean
