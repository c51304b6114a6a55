#include "cpfean/report.hpp"

#include <json.hpp>

#include <sstream>

using nlohmann::ordered_json;

namespace cpfean {

namespace {

ordered_json metrics_json(const MetricsReport& rep) {
    ordered_json j;
    j["r1_text"] = rep.r1_text;
    j["r5_text"] = rep.r5_text;
    j["r10_text"] = rep.desk_mode ? ordered_json(nullptr) : ordered_json(rep.r10_text);
    j["r1_image"] = rep.r1_image;
    j["r5_image"] = rep.r5_image;
    j["r10_image"] = rep.desk_mode ? ordered_json(nullptr) : ordered_json(rep.r10_image);
    j["rsum_kind"] = rep.desk_mode ? "desk-rSum" : "rSum";
    j["rsum"] = rep.rsum_value;
    return j;
}

} // namespace

std::string metrics_to_text(const MetricsReport& rep) { return metrics_json(rep).dump(2); }

std::string epoch_log_line(const EpochLog& log) {
    ordered_json j;
    j["epoch"] = log.epoch;
    j["mean_loss"] = log.mean_loss;
    j["lr"] = log.lr;
    const ordered_json m = metrics_json(log.metrics);
    for (auto& [key, value] : m.items()) j[key] = value;
    return j.dump();
}

std::string alignment_to_text(const AlignmentReport& rep) {
    ordered_json j;
    j["caption_id"] = rep.caption_id;
    j["image_id"] = rep.image_id;
    j["tokens"] = rep.tokens;
    j["region_fused_word"] = ordered_json::array();
    for (auto k : rep.region_fused_word)
        j["region_fused_word"].push_back(k < 0 ? ordered_json("none") : ordered_json(k));
    j["word_best_region"] = rep.word_best_region;
    j["word_best_value"] = rep.word_best_value;
    j["word_best_region_fused"] = rep.word_best_region_fused;
    j["word_best_value_fused"] = rep.word_best_value_fused;
    return j.dump(2);
}

std::string gradsuite_to_text(const GradSuiteResult& suite) {
    std::ostringstream out;
    for (const auto& c : suite.cases) {
        out << (c.passed ? "pass" : "FAIL") << "  " << c.name << "  max_rel_err "
            << c.max_rel_err << "  coords " << c.coords << "\n";
    }
    if (suite.all_pass)
        out << "gradcheck: all cases passed (tolerance " << suite.tolerance << ")\n";
    else
        out << "gradcheck: failures above tolerance " << suite.tolerance << "\n";
    return out.str();
}

} // namespace cpfean
