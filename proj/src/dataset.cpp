#include "cpfean/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cpfean/container.hpp"
#include "cpfean/errors.hpp"
#include "cpfean/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace cpfean {

namespace {

ordered_json parse_manifest(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "dataset: cannot open manifest " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("dataset: manifest " + path + " is not valid JSON: " + e.what());
    }
    return j;
}

std::uint32_t manifest_uint(const ordered_json& j, const char* field, const std::string& path) {
    require(j.contains(field),
            "dataset: manifest " + path + " missing field '" + std::string(field) + "'");
    const auto& v = j.at(field);
    require(v.is_number_integer() && v.template get<std::int64_t>() >= 1,
            "dataset: manifest " + path + " field '" + std::string(field) +
                "' must be a positive integer");
    return v.template get<std::uint32_t>();
}

std::string entry_string(const ordered_json& j, const char* field, const std::string& where) {
    require(j.contains(field) && j.at(field).is_string(),
            "dataset: " + where + " missing string field '" + std::string(field) + "'");
    return j.at(field).template get<std::string>();
}

template <typename Real>
Tensor<Real> tensor_from_entry(const TensorEntry& e, const std::string& where) {
    require(e.dims.size() == 2, "dataset: entry '" + e.name + "' in " + where + " is not rank 2");
    Tensor<Real> t;
    t.shape = {static_cast<std::size_t>(e.dims[0]), static_cast<std::size_t>(e.dims[1])};
    t.data.reserve(e.data.size());
    for (float f : e.data) t.data.push_back(static_cast<Real>(f));
    return t;
}

template <typename Real>
TensorEntry entry_from_tensor(const std::string& name, const Tensor<Real>& t) {
    TensorEntry e;
    e.name = name;
    for (auto d : t.shape) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.data.reserve(t.data.size());
    for (Real v : t.data) e.data.push_back(static_cast<float>(v));
    return e;
}

template <typename Real>
void check_finite(const Tensor<Real>& t, const std::string& what) {
    require(t.all_finite(), "dataset: non-finite value in " + what);
}

} // namespace

template <typename Real>
Dataset<Real> load_dataset(const std::string& dir) {
    const std::string mpath = (fs::path(dir) / "manifest.json").string();
    const ordered_json j = parse_manifest(mpath);
    require(j.is_object(), "dataset: manifest " + mpath + " must be a JSON object");
    static const std::set<std::string> allowed = {"version",  "d_region", "d_word",
                                                  "captions_per_image", "images", "captions"};
    for (auto it = j.begin(); it != j.end(); ++it)
        require(allowed.count(it.key()) > 0,
                "dataset: manifest " + mpath + " has unknown field '" + it.key() + "'");

    Dataset<Real> ds;
    ds.manifest.version = manifest_uint(j, "version", mpath);
    require(ds.manifest.version == 1, "dataset: manifest " + mpath + " has unsupported version " +
                                          std::to_string(ds.manifest.version));
    ds.manifest.d_region = manifest_uint(j, "d_region", mpath);
    ds.manifest.d_word = manifest_uint(j, "d_word", mpath);
    ds.manifest.captions_per_image = manifest_uint(j, "captions_per_image", mpath);

    require(j.contains("images") && j.at("images").is_array(),
            "dataset: manifest " + mpath + " missing array field 'images'");
    require(j.contains("captions") && j.at("captions").is_array(),
            "dataset: manifest " + mpath + " missing array field 'captions'");
    require(!j.at("images").empty(), "dataset: no images listed in " + mpath);
    require(!j.at("captions").empty(), "dataset: no captions listed in " + mpath);

    const auto d_region = static_cast<std::size_t>(ds.manifest.d_region);
    const auto d_word = static_cast<std::size_t>(ds.manifest.d_word);

    for (const auto& rec : j.at("images")) {
        ImageFeatures<Real> img;
        img.id = entry_string(rec, "id", "image entry in " + mpath);
        require(ds.image_index.count(img.id) == 0, "dataset: duplicate image id '" + img.id + "'");
        const std::string file = entry_string(rec, "file", "image '" + img.id + "'");
        const std::string fpath = (fs::path(dir) / file).string();
        const auto entries = read_container(fpath);

        img.regions = tensor_from_entry<Real>(find_entry(entries, "regions", fpath), fpath);
        require(img.regions.rows() >= 1, "dataset: image '" + img.id + "' has no regions");
        require(img.regions.cols() == d_region,
                "dataset: image '" + img.id + "' regions have " +
                    std::to_string(img.regions.cols()) + " columns, manifest d_region is " +
                    std::to_string(d_region));
        check_finite(img.regions, "regions of image '" + img.id + "'");

        img.boxes = tensor_from_entry<Real>(find_entry(entries, "boxes", fpath), fpath);
        require(img.boxes.rows() == img.regions.rows() && img.boxes.cols() == 4,
                "dataset: image '" + img.id + "' boxes must be [m x 4]");
        check_finite(img.boxes, "boxes of image '" + img.id + "'");

        const auto& size_entry = find_entry(entries, "image_size", fpath);
        require(size_entry.element_count() == 2,
                "dataset: image '" + img.id + "' image_size must hold 2 values");
        img.image_w = static_cast<Real>(size_entry.data[0]);
        img.image_h = static_cast<Real>(size_entry.data[1]);
        require(img.image_w > 0 && img.image_h > 0,
                "dataset: image '" + img.id + "' has non-positive image_size");

        for (std::size_t i = 0; i < img.regions.rows(); ++i) {
            const Real x1 = img.boxes.at(i, 0), y1 = img.boxes.at(i, 1);
            const Real x2 = img.boxes.at(i, 2), y2 = img.boxes.at(i, 3);
            require(Real(0) <= x1 && x1 <= x2 && x2 <= img.image_w && Real(0) <= y1 && y1 <= y2 &&
                        y2 <= img.image_h,
                    "dataset: image '" + img.id + "' box " + std::to_string(i) +
                        " violates 0 <= x1 <= x2 <= w, 0 <= y1 <= y2 <= h");
            const TensorEntry* le = find_entry_opt(entries, "labels." + std::to_string(i));
            if (le == nullptr) {
                img.label_words.emplace_back();
                continue;
            }
            auto lw = tensor_from_entry<Real>(*le, fpath);
            require(lw.cols() == d_word, "dataset: image '" + img.id + "' labels." +
                                             std::to_string(i) + " have " +
                                             std::to_string(lw.cols()) +
                                             " columns, manifest d_word is " +
                                             std::to_string(d_word));
            check_finite(lw, "labels of image '" + img.id + "'");
            img.label_words.push_back(std::move(lw));
        }

        ds.image_index.emplace(img.id, ds.images.size());
        ds.images.push_back(std::move(img));
    }

    std::set<std::string> caption_ids;
    std::vector<std::size_t> captions_seen(ds.images.size(), 0);
    for (const auto& rec : j.at("captions")) {
        CaptionFeatures<Real> cap;
        cap.id = entry_string(rec, "id", "caption entry in " + mpath);
        require(caption_ids.insert(cap.id).second,
                "dataset: duplicate caption id '" + cap.id + "'");
        cap.image_id = entry_string(rec, "image_id", "caption '" + cap.id + "'");
        const auto it = ds.image_index.find(cap.image_id);
        require(it != ds.image_index.end(), "dataset: caption '" + cap.id +
                                                "' references unknown image_id '" + cap.image_id +
                                                "'");
        const std::string file = entry_string(rec, "file", "caption '" + cap.id + "'");
        const std::string fpath = (fs::path(dir) / file).string();
        const auto entries = read_container(fpath);
        cap.words = tensor_from_entry<Real>(find_entry(entries, "words", fpath), fpath);
        require(cap.words.rows() >= 1, "dataset: caption '" + cap.id + "' has no words");
        require(cap.words.cols() == d_word,
                "dataset: caption '" + cap.id + "' words have " +
                    std::to_string(cap.words.cols()) + " columns, manifest d_word is " +
                    std::to_string(d_word));
        check_finite(cap.words, "words of caption '" + cap.id + "'");
        if (rec.contains("tokens")) {
            require(rec.at("tokens").is_array(),
                    "dataset: caption '" + cap.id + "' field 'tokens' must be an array");
            for (const auto& t : rec.at("tokens")) {
                require(t.is_string(), "dataset: caption '" + cap.id + "' has non-string token");
                cap.tokens.push_back(t.template get<std::string>());
            }
            require(cap.tokens.size() == cap.words.rows(),
                    "dataset: caption '" + cap.id + "' has " + std::to_string(cap.tokens.size()) +
                        " tokens for " + std::to_string(cap.words.rows()) + " words");
        }
        captions_seen[it->second] += 1;
        ds.caption_image.push_back(it->second);
        ds.captions.push_back(std::move(cap));
    }

    for (std::size_t i = 0; i < ds.images.size(); ++i)
        require(captions_seen[i] == ds.manifest.captions_per_image,
                "dataset: image '" + ds.images[i].id + "' has " +
                    std::to_string(captions_seen[i]) + " captions, manifest captions_per_image is " +
                    std::to_string(ds.manifest.captions_per_image));
    return ds;
}

template <typename Real>
void save_dataset(const std::string& dir, const DatasetManifest& manifest,
                  const std::vector<ImageFeatures<Real>>& images,
                  const std::vector<CaptionFeatures<Real>>& captions) {
    require(!images.empty(), "dataset: refusing to save with no images");
    fs::create_directories(dir);

    ordered_json j;
    j["version"] = manifest.version;
    j["d_region"] = manifest.d_region;
    j["d_word"] = manifest.d_word;
    j["captions_per_image"] = manifest.captions_per_image;
    j["images"] = ordered_json::array();
    j["captions"] = ordered_json::array();

    for (const auto& img : images) {
        const std::string file = img.id + ".bin";
        std::vector<TensorEntry> entries;
        entries.push_back(entry_from_tensor("regions", img.regions));
        entries.push_back(entry_from_tensor("boxes", img.boxes));
        TensorEntry size_entry;
        size_entry.name = "image_size";
        size_entry.dims = {2};
        size_entry.data = {static_cast<float>(img.image_w), static_cast<float>(img.image_h)};
        entries.push_back(std::move(size_entry));
        for (std::size_t i = 0; i < img.label_words.size(); ++i)
            if (!img.label_words[i].data.empty())
                entries.push_back(
                    entry_from_tensor("labels." + std::to_string(i), img.label_words[i]));
        write_container((fs::path(dir) / file).string(), entries);
        j["images"].push_back({{"id", img.id}, {"file", file}});
    }

    for (const auto& cap : captions) {
        const std::string file = cap.id + ".bin";
        write_container((fs::path(dir) / file).string(), {entry_from_tensor("words", cap.words)});
        ordered_json rec = {{"id", cap.id}, {"image_id", cap.image_id}, {"file", file}};
        rec["tokens"] = cap.tokens;
        j["captions"].push_back(std::move(rec));
    }

    std::ofstream out((fs::path(dir) / "manifest.json").string(), std::ios::trunc);
    require(out.good(), "dataset: cannot write manifest in " + dir);
    out << j.dump(2) << "\n";
    require(out.good(), "dataset: manifest write failed in " + dir);
}

template <typename Real>
std::vector<Batch> batch_iter(const std::vector<CaptionFeatures<Real>>& captions,
                              const std::vector<ImageFeatures<Real>>& images, std::size_t B,
                              std::uint64_t seed, std::uint64_t epoch) {
    require(B >= 1, "batch_iter: B must be >= 1");
    std::unordered_map<std::string, std::size_t> image_index;
    for (std::size_t i = 0; i < images.size(); ++i) image_index.emplace(images[i].id, i);

    std::vector<std::size_t> order(captions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, epoch));
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += B) {
        Batch batch;
        const std::size_t stop = std::min(order.size(), start + B);
        std::unordered_map<std::size_t, std::size_t> slot_of;
        for (std::size_t k = start; k < stop; ++k) {
            const std::size_t c = order[k];
            const auto it = image_index.find(captions[c].image_id);
            require(it != image_index.end(), "batch_iter: caption '" + captions[c].id +
                                                 "' references unknown image_id '" +
                                                 captions[c].image_id + "'");
            auto [slot, inserted] = slot_of.try_emplace(it->second, batch.image_ids.size());
            if (inserted) batch.image_ids.push_back(it->second);
            batch.caption_ids.push_back(c);
            batch.pair_image.push_back(slot->second);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

template Dataset<float> load_dataset<float>(const std::string&);
template Dataset<double> load_dataset<double>(const std::string&);
template void save_dataset<float>(const std::string&, const DatasetManifest&,
                                  const std::vector<ImageFeatures<float>>&,
                                  const std::vector<CaptionFeatures<float>>&);
template void save_dataset<double>(const std::string&, const DatasetManifest&,
                                   const std::vector<ImageFeatures<double>>&,
                                   const std::vector<CaptionFeatures<double>>&);
template std::vector<Batch> batch_iter<float>(const std::vector<CaptionFeatures<float>>&,
                                              const std::vector<ImageFeatures<float>>&,
                                              std::size_t, std::uint64_t, std::uint64_t);
template std::vector<Batch> batch_iter<double>(const std::vector<CaptionFeatures<double>>&,
                                               const std::vector<ImageFeatures<double>>&,
                                               std::size_t, std::uint64_t, std::uint64_t);

} // namespace cpfean
