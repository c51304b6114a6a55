#include "cpfean/configio.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

#include "cpfean/errors.hpp"

using nlohmann::json;

namespace cpfean {

namespace {

json parse_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("config: " + path + " is not valid JSON: " + e.what());
    }
    require(j.is_object(), "config: " + path + " must be a JSON object");
    return j;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
        require(allowed.count(it.key()) > 0,
                "config: " + path + " has unknown key '" + it.key() + "'");
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ValidationError("config: " + path + " key '" + std::string(key) +
                              "' has the wrong type");
    }
}

} // namespace

TrainConfig load_train_config(const std::string& path) {
    const json j = parse_file(path);
    reject_unknown(j,
                   {"margin", "lr", "epochs", "batch_size", "decay_period", "seed", "csf", "pti",
                    "tgr", "normalize_affinity", "D", "checkpoint_every", "target_rsum"},
                   path);
    TrainConfig cfg;
    read_field(j, "margin", cfg.margin, path);
    read_field(j, "lr", cfg.lr, path);
    read_field(j, "epochs", cfg.epochs, path);
    read_field(j, "batch_size", cfg.batch_size, path);
    read_field(j, "decay_period", cfg.decay_period, path);
    read_field(j, "seed", cfg.seed, path);
    read_field(j, "csf", cfg.csf, path);
    read_field(j, "pti", cfg.pti, path);
    read_field(j, "tgr", cfg.tgr, path);
    read_field(j, "normalize_affinity", cfg.normalize_affinity, path);
    read_field(j, "D", cfg.D, path);
    read_field(j, "checkpoint_every", cfg.checkpoint_every, path);
    read_field(j, "target_rsum", cfg.target_rsum, path);
    cfg.validate();
    return cfg;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    const json j = parse_file(path);
    reject_unknown(j,
                   {"num_images", "captions_per_image", "m", "n", "d_region", "d_word", "concepts",
                    "noise", "seed"},
                   path);
    SyntheticSpec spec;
    read_field(j, "num_images", spec.num_images, path);
    read_field(j, "captions_per_image", spec.captions_per_image, path);
    read_field(j, "m", spec.m, path);
    read_field(j, "n", spec.n, path);
    read_field(j, "d_region", spec.d_region, path);
    read_field(j, "d_word", spec.d_word, path);
    read_field(j, "concepts", spec.concepts, path);
    read_field(j, "noise", spec.noise, path);
    read_field(j, "seed", spec.seed, path);
    return spec;
}

} // namespace cpfean
