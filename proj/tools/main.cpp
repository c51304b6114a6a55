#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cpfean/configio.hpp"
#include "cpfean/dataset.hpp"
#include "cpfean/errors.hpp"
#include "cpfean/eval.hpp"
#include "cpfean/gradsuite.hpp"
#include "cpfean/model.hpp"
#include "cpfean/report.hpp"
#include "cpfean/synthetic.hpp"
#include "cpfean/training.hpp"

namespace fs = std::filesystem;
using namespace cpfean;

namespace {

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    bool f64 = false;
    bool no_csf = false;
    bool no_pti = false;
    bool no_tgr = false;
    bool literal_affinity = false;

    RunFlags run_flags() const {
        RunFlags f;
        f.csf = !no_csf;
        f.pti = !no_pti;
        f.tgr = !no_tgr;
        f.normalize_affinity = !literal_affinity;
        return f;
    }
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--seed", flags.seed, "Override the seed");
    cmd->add_flag("--f64", flags.f64, "Run in double precision (checkpoints stay f32)");
    cmd->add_flag("--no-csf", flags.no_csf, "Disable cross-modal semantic fusion (Eq. 6)");
    cmd->add_flag("--no-pti", flags.no_pti, "Zero the label semantic features (Eq. 2 rt)");
    cmd->add_flag("--no-tgr", flags.no_tgr, "Skip textual graph reasoning (Eqs. 3-4)");
    cmd->add_flag("--literal-affinity", flags.literal_affinity,
                  "Use Eq. 4 without row-softmax normalization");
}

template <typename Real>
int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const CommonFlags& flags) {
    TrainConfig cfg = load_train_config(config_path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.no_csf) cfg.csf = false;
    if (flags.no_pti) cfg.pti = false;
    if (flags.no_tgr) cfg.tgr = false;
    if (flags.literal_affinity) cfg.normalize_affinity = false;

    const Dataset<Real> ds = load_dataset<Real>(data_dir);
    fs::create_directories(out_dir);
    std::ofstream log_file(fs::path(out_dir) / "train_log.jsonl", std::ios::trunc);
    require(log_file.good(), "train: cannot write log in " + out_dir);

    auto [params, logs] = fit<Real>(ds, cfg, out_dir, [&](const EpochLog& log) {
        const std::string line = epoch_log_line(log);
        log_file << line << "\n";
        std::cout << line << "\n";
    });
    require(!logs.empty(), "train: config ran zero epochs");
    std::cout << metrics_to_text(logs.back().metrics) << "\n";
    return 0;
}

template <typename Real>
int run_eval(const std::string& ckpt, const std::string& data_dir, const CommonFlags& flags) {
    ModelParams<Real> params = load_checkpoint<Real>(ckpt);
    const Dataset<Real> ds = load_dataset<Real>(data_dir);
    const MetricsReport rep = evaluate_split(ds, params, flags.run_flags());
    std::cout << metrics_to_text(rep) << "\n";
    return 0;
}

template <typename Real>
int run_align(const std::string& ckpt, const std::string& data_dir, const std::string& caption_id,
              const std::string& image_id, const CommonFlags& flags) {
    ModelParams<Real> params = load_checkpoint<Real>(ckpt);
    const Dataset<Real> ds = load_dataset<Real>(data_dir);

    const CaptionFeatures<Real>* cap = nullptr;
    for (const auto& c : ds.captions)
        if (c.id == caption_id) cap = &c;
    require(cap != nullptr, "align: no caption with id '" + caption_id + "' in " + data_dir);
    const ImageFeatures<Real>* img = nullptr;
    for (const auto& i : ds.images)
        if (i.id == image_id) img = &i;
    require(img != nullptr, "align: no image with id '" + image_id + "' in " + data_dir);

    std::cout << alignment_to_text(alignment_report(*cap, *img, params, flags.run_flags()))
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CPFEAN image-text matching: synthetic data, training, retrieval eval"};
    app.require_subcommand(1);

    CommonFlags gen_flags, train_flags, eval_flags, grad_flags, align_flags;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    std::string gen_config, gen_out;
    gen->add_option("--config", gen_config, "SyntheticSpec JSON file")->required();
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    add_common(gen, gen_flags);

    auto* train = app.add_subcommand("train", "Train from a TrainConfig file");
    std::string train_config, train_data, train_out;
    train->add_option("--config", train_config, "TrainConfig JSON file")->required();
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--out", train_out, "Checkpoint and log directory")->required();
    add_common(train, train_flags);

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
    add_common(eval_cmd, eval_flags);

    auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
    std::size_t grad_instances = 20;
    grad->add_option("--instances", grad_instances, "Instances per case (default 20)");
    add_common(grad, grad_flags);

    auto* align = app.add_subcommand("align", "Report Eq. 5 alignments for one pair");
    std::string align_ckpt, align_data, align_caption, align_image;
    align->add_option("--checkpoint", align_ckpt, "Checkpoint file")->required();
    align->add_option("--data", align_data, "Dataset directory")->required();
    align->add_option("--caption", align_caption, "Caption id")->required();
    align->add_option("--image", align_image, "Image id")->required();
    add_common(align, align_flags);

    try {
        app.parse(argc, argv);

        if (gen->parsed()) {
            SyntheticSpec spec = load_synthetic_spec(gen_config);
            if (gen_flags.seed) spec.seed = *gen_flags.seed;
            gen_synthetic(spec, gen_out);
            std::cout << "wrote " << spec.num_images << " images, "
                      << spec.num_images * spec.captions_per_image << " captions to " << gen_out
                      << "\n";
            return 0;
        }
        if (train->parsed())
            return train_flags.f64
                       ? run_train<double>(train_config, train_data, train_out, train_flags)
                       : run_train<float>(train_config, train_data, train_out, train_flags);
        if (eval_cmd->parsed())
            return eval_flags.f64 ? run_eval<double>(eval_ckpt, eval_data, eval_flags)
                                  : run_eval<float>(eval_ckpt, eval_data, eval_flags);
        if (grad->parsed()) {
            const auto suite = run_gradient_suite(grad_flags.seed.value_or(0), grad_instances);
            std::cout << gradsuite_to_text(suite);
            return suite.all_pass ? 0 : 2;
        }
        if (align->parsed())
            return align_flags.f64 ? run_align<double>(align_ckpt, align_data, align_caption,
                                                       align_image, align_flags)
                                   : run_align<float>(align_ckpt, align_data, align_caption,
                                                      align_image, align_flags);
        return 1;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
