#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "cpfean/container.hpp"
#include "cpfean/dataset.hpp"
#include "cpfean/rng.hpp"
#include "cpfean/synthetic.hpp"

using namespace cpfean;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("cpfean_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string thrown_message(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

// A 2-image, 4-caption fixture small enough to corrupt by hand.
void write_tiny_dataset(const fs::path& dir, std::size_t caption_d_word = 3) {
    DatasetManifest manifest;
    manifest.version = 1;
    manifest.d_region = 4;
    manifest.d_word = 3;
    manifest.captions_per_image = 2;

    std::vector<ImageFeatures<float>> images;
    for (int i = 0; i < 2; ++i) {
        ImageFeatures<float> img;
        img.id = "i" + std::to_string(i);
        img.regions = Tensor<float>::full({2, 4}, 0.5f + static_cast<float>(i));
        img.boxes = Tensor<float>::matrix({{0, 0, 10, 10}, {1, 2, 3, 4}});
        img.image_w = 20;
        img.image_h = 20;
        img.label_words.push_back(Tensor<float>::full({1, 3}, 1.0f));
        img.label_words.emplace_back();
        images.push_back(std::move(img));
    }
    std::vector<CaptionFeatures<float>> captions;
    for (int i = 0; i < 4; ++i) {
        CaptionFeatures<float> cap;
        cap.id = "c" + std::to_string(i);
        cap.image_id = "i" + std::to_string(i / 2);
        cap.words = Tensor<float>::full({2, caption_d_word}, 0.25f * static_cast<float>(i + 1));
        cap.tokens = {"a", "b"};
        captions.push_back(std::move(cap));
    }
    save_dataset(dir.string(), manifest, images, captions);
}

} // namespace

TEST_CASE("container round-trips entries bitwise") {
    const auto dir = scratch("container");
    const auto path = (dir / "weights.bin").string();

    std::vector<TensorEntry> entries(2);
    entries[0].name = "alpha";
    entries[0].dims = {2, 3};
    entries[0].data = {1.5f, -2.25f, 0.0f, 3.75f, 1e-30f, -1e30f};
    entries[1].name = "beta";
    entries[1].dims = {4};
    entries[1].data = {9.0f, 8.0f, 7.0f, 6.0f};
    write_container(path, entries);

    const auto back = read_container(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "alpha");
    CHECK(back[0].dims == entries[0].dims);
    CHECK(back[0].data == entries[0].data);
    CHECK(back[1].name == "beta");
    CHECK(back[1].data == entries[1].data);

    entries[1].name = "alpha";
    CHECK_THROWS_AS(write_container(path + ".dup", entries), ValidationError);
}

TEST_CASE("container rejects corruption") {
    const auto dir = scratch("corrupt");
    const auto path = dir / "w.bin";
    TensorEntry e;
    e.name = "t";
    e.dims = {2, 2};
    e.data = {1, 2, 3, 4};
    write_container(path.string(), {e});

    auto bytes = slurp(path);
    auto flipped = bytes;
    flipped[flipped.size() - 6] ^= 0x40;
    spit(path, flipped);
    const auto crc_msg = thrown_message([&] { read_container(path.string()); });
    CHECK(crc_msg.find("CRC mismatch") != std::string::npos);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    bad_magic[1] = 'X';
    bad_magic[2] = 'X';
    bad_magic[3] = 'X';
    spit(path, bad_magic);
    CHECK_THROWS_AS(read_container(path.string()), ValidationError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    spit(path, truncated);
    CHECK_THROWS_AS(read_container(path.string()), ValidationError);

    CHECK_THROWS_AS(read_container((dir / "absent.bin").string()), ValidationError);
}

TEST_CASE("load_dataset round-trips gen_synthetic output") {
    const auto dir = scratch("load");
    SyntheticSpec spec;
    gen_synthetic(spec, dir.string());
    const auto ds = load_dataset<float>(dir.string());
    CHECK(ds.images.size() == 8);
    CHECK(ds.captions.size() == 16);
    CHECK(ds.manifest.d_region == 32);
    CHECK(ds.manifest.captions_per_image == 2);
    for (std::size_t i = 0; i < ds.captions.size(); ++i)
        CHECK(ds.images[ds.caption_image[i]].id == ds.captions[i].image_id);
}

TEST_CASE("load_dataset validation failures") {
    const auto dir = scratch("badcap");
    write_tiny_dataset(dir, 2);
    const auto msg = thrown_message([&] { load_dataset<float>(dir.string()); });
    CHECK(msg.find("c0") != std::string::npos);
    CHECK(msg.find("d_word") != std::string::npos);

    const auto empty = scratch("noimages");
    std::ofstream(empty / "manifest.json")
        << R"({"version":1,"d_region":4,"d_word":3,"captions_per_image":2,"images":[],"captions":[]})";
    const auto msg2 = thrown_message([&] { load_dataset<float>(empty.string()); });
    CHECK(msg2.find("no images") != std::string::npos);

    const auto dangling = scratch("dangling");
    write_tiny_dataset(dangling);
    auto manifest = slurp(dangling / "manifest.json");
    std::string text(manifest.begin(), manifest.end());
    const auto pos = text.find("\"i1\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 4, "\"i9\"");
    std::ofstream(dangling / "manifest.json", std::ios::trunc) << text;
    const auto msg3 = thrown_message([&] { load_dataset<float>(dangling.string()); });
    CHECK(msg3.find("unknown image_id") != std::string::npos);

    const auto unknown = scratch("unknownfield");
    write_tiny_dataset(unknown);
    auto m2 = slurp(unknown / "manifest.json");
    std::string t2(m2.begin(), m2.end());
    t2.insert(1, "\"extra\": 1,");
    std::ofstream(unknown / "manifest.json", std::ios::trunc) << t2;
    const auto msg4 = thrown_message([&] { load_dataset<float>(unknown.string()); });
    CHECK(msg4.find("extra") != std::string::npos);
}

TEST_CASE("gen_synthetic plants exact pairs at zero noise") {
    const auto dir = scratch("plant");
    SyntheticSpec spec;
    spec.num_images = 2;
    spec.captions_per_image = 1;
    spec.m = 2;
    spec.n = 2;
    spec.d_region = 6;
    spec.d_word = 5;
    spec.concepts = 1;
    spec.noise = 0.0;
    spec.seed = 3;
    const auto plan = gen_synthetic(spec, dir.string());
    const auto ds = load_dataset<float>(dir.string());

    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const auto concept_id = plan.image_concepts[i][0];
        const auto region_row = plan.image_rows[i][0];
        const auto word_row = plan.caption_rows[i][0];
        for (std::size_t j = 0; j < spec.d_region; ++j)
            CHECK(ds.images[i].regions.at(region_row, j) ==
                  plan.region_concepts.at(concept_id, j));
        for (std::size_t j = 0; j < spec.d_word; ++j) {
            CHECK(ds.captions[i].words.at(word_row, j) == plan.word_concepts.at(concept_id, j));
            CHECK(ds.images[i].label_words[region_row].at(0, j) ==
                  plan.word_concepts.at(concept_id, j));
        }
        CHECK(ds.captions[i].tokens[word_row] == "concept" + std::to_string(concept_id));
    }
}

TEST_CASE("gen_synthetic is byte-identical per seed") {
    const auto a = scratch("gen_a");
    const auto b = scratch("gen_b");
    SyntheticSpec spec;
    spec.num_images = 3;
    spec.seed = 91;
    gen_synthetic(spec, a.string());
    gen_synthetic(spec, b.string());
    for (const auto& entry : fs::directory_iterator(a)) {
        const auto other = b / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(entry.path()) == slurp(other));
    }
}

TEST_CASE("load accepts every generated spec") {
    Rng rng(23);
    for (int trial = 0; trial < 6; ++trial) {
        SyntheticSpec spec;
        spec.num_images = 1 + static_cast<std::uint32_t>(rng.below(5));
        spec.captions_per_image = 1 + static_cast<std::uint32_t>(rng.below(3));
        spec.m = 2 + static_cast<std::uint32_t>(rng.below(4));
        spec.n = 2 + static_cast<std::uint32_t>(rng.below(4));
        spec.d_region = 3 + static_cast<std::uint32_t>(rng.below(6));
        spec.d_word = 3 + static_cast<std::uint32_t>(rng.below(6));
        spec.concepts = 1 + static_cast<std::uint32_t>(rng.below(std::min(spec.m, spec.n)));
        spec.noise = rng.uniform(0.0, 0.2);
        spec.seed = rng.next_u64();
        const auto dir = scratch("prop" + std::to_string(trial));
        gen_synthetic(spec, dir.string());
        const auto ds = load_dataset<float>(dir.string());
        CHECK(ds.images.size() == spec.num_images);
        CHECK(ds.captions.size() == spec.num_images * spec.captions_per_image);
    }
}

TEST_CASE("batch_iter shapes and determinism") {
    const auto dir = scratch("batches");
    SyntheticSpec spec;
    spec.num_images = 8;
    spec.captions_per_image = 2;
    gen_synthetic(spec, dir.string());
    const auto ds = load_dataset<float>(dir.string());

    const auto one = batch_iter(ds.captions, ds.images, 16, 7, 0);
    REQUIRE(one.size() == 1);
    CHECK(one[0].size() == 16);

    SyntheticSpec tiny;
    tiny.num_images = 5;
    tiny.captions_per_image = 1;
    const auto tdir = scratch("batches5");
    gen_synthetic(tiny, tdir.string());
    const auto tds = load_dataset<float>(tdir.string());
    const auto chunks = batch_iter(tds.captions, tds.images, 2, 7, 0);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].size() == 2);
    CHECK(chunks[1].size() == 2);
    CHECK(chunks[2].size() == 1);

    const auto again = batch_iter(tds.captions, tds.images, 2, 7, 0);
    for (std::size_t i = 0; i < chunks.size(); ++i)
        CHECK(chunks[i].caption_ids == again[i].caption_ids);

    std::multiset<std::size_t> seen;
    for (const auto& b : one)
        for (auto c : b.caption_ids) seen.insert(c);
    CHECK(seen.size() == ds.captions.size());
    std::multiset<std::size_t> expected;
    for (std::size_t i = 0; i < ds.captions.size(); ++i) expected.insert(i);
    CHECK(seen == expected);
}

TEST_CASE("batch_iter deduplicates shared images") {
    const auto dir = scratch("dedup");
    SyntheticSpec spec;
    spec.num_images = 1;
    spec.captions_per_image = 2;
    gen_synthetic(spec, dir.string());
    const auto ds = load_dataset<float>(dir.string());
    const auto batches = batch_iter(ds.captions, ds.images, 2, 0, 0);
    REQUIRE(batches.size() == 1);
    const auto& b = batches[0];
    CHECK(b.image_ids.size() == 1);
    CHECK(b.pair_image == std::vector<std::size_t>{0, 0});
    for (std::size_t k = 0; k < b.size(); ++k)
        CHECK(ds.captions[b.caption_ids[k]].image_id == ds.images[b.image_ids[b.pair_image[k]]].id);
}
