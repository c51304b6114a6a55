#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cpfean/container.hpp"
#include "cpfean/errors.hpp"
#include "cpfean/param.hpp"
#include "cpfean/rng.hpp"

namespace cpfean {

// All linear maps are biasless (Eq. 2 convention); layer norms carry gain and
// bias. Transformer encoder layers are pre-norm with a final layer norm per
// stack:
//   x += W_o . MHSA(LN1(x));  x += W_f2 . relu(W_f1 . LN2(x));  out = LNf(x)
struct ModelConfig {
    std::uint32_t d_region = 32;
    std::uint32_t d_word = 32;
    std::uint32_t d_hidden = 64;
    std::uint32_t D = 32;
    std::uint32_t layers_pre = 1;
    std::uint32_t layers_post = 1;
    std::uint32_t heads = 2;
    std::uint32_t ff_mult = 2;

    std::uint32_t concat_dim() const { return d_region + 6 + d_word; }

    void validate() const {
        require(d_region >= 1 && d_word >= 1 && d_hidden >= 1 && D >= 1,
                "model: all dims must be >= 1");
        require(heads >= 1 && ff_mult >= 1, "model: heads and ff_mult must be >= 1");
        require(d_hidden % heads == 0, "model: d_hidden " + std::to_string(d_hidden) +
                                           " not divisible by heads " + std::to_string(heads));
        require(D % heads == 0, "model: D " + std::to_string(D) + " not divisible by heads " +
                                    std::to_string(heads));
    }

    // Desk defaults derived from the dataset dims and joint dim.
    static ModelConfig desk(std::uint32_t d_region, std::uint32_t d_word, std::uint32_t D) {
        ModelConfig c;
        c.d_region = d_region;
        c.d_word = d_word;
        c.D = D;
        c.d_hidden = 2 * D;
        return c;
    }
};

// Runtime switches: the Table III ablations plus the affinity-normalization
// mode. All default to the full model.
struct RunFlags {
    bool csf = true;
    bool pti = true;
    bool tgr = true;
    bool normalize_affinity = true;
};

template <typename Real>
struct TransformerLayerParams {
    Parameter<Real> ln1_gain, ln1_bias;
    Parameter<Real> W_q, W_k, W_v, W_o;
    Parameter<Real> ln2_gain, ln2_bias;
    Parameter<Real> W_f1, W_f2;

    static TransformerLayerParams make(const std::string& prefix, std::size_t width,
                                       std::size_t ff_mult, Rng& rng) {
        TransformerLayerParams p;
        p.ln1_gain = make_gain<Real>(prefix + ".ln1.gain", width);
        p.ln1_bias = make_bias<Real>(prefix + ".ln1.bias", width);
        p.W_q = make_weight<Real>(prefix + ".W_q", width, width, rng);
        p.W_k = make_weight<Real>(prefix + ".W_k", width, width, rng);
        p.W_v = make_weight<Real>(prefix + ".W_v", width, width, rng);
        p.W_o = make_weight<Real>(prefix + ".W_o", width, width, rng);
        p.ln2_gain = make_gain<Real>(prefix + ".ln2.gain", width);
        p.ln2_bias = make_bias<Real>(prefix + ".ln2.bias", width);
        p.W_f1 = make_weight<Real>(prefix + ".W_f1", width, width * ff_mult, rng);
        p.W_f2 = make_weight<Real>(prefix + ".W_f2", width * ff_mult, width, rng);
        return p;
    }

    void collect(std::vector<Parameter<Real>*>& out) {
        for (auto* p : {&ln1_gain, &ln1_bias, &W_q, &W_k, &W_v, &W_o, &ln2_gain, &ln2_bias, &W_f1,
                        &W_f2})
            out.push_back(p);
    }
};

template <typename Real>
struct ImageEncoderParams {
    Parameter<Real> W_r, W_v; // Eq. 2
    std::vector<TransformerLayerParams<Real>> pre;
    Parameter<Real> pre_ln_gain, pre_ln_bias;
    Parameter<Real> P; // linear projection d_hidden -> D
    std::vector<TransformerLayerParams<Real>> post;
    Parameter<Real> post_ln_gain, post_ln_bias;
};

template <typename Real>
struct TextEncoderParams {
    Parameter<Real> W_embed; // [d_word x D]
    Parameter<Real> W_phi, W_psi; // Eq. 3
    Parameter<Real> gcn_W_g, gcn_W_r; // Eq. 4
};

template <typename Real>
struct FusionParams {
    Parameter<Real> gate_W_g, gate_W_h; // Eq. 6, [2D x D]
};

template <typename Real>
struct ModelParams {
    ModelConfig config;
    ImageEncoderParams<Real> image;
    TextEncoderParams<Real> text;
    FusionParams<Real> fusion;

    static ModelParams random_init(const ModelConfig& config, std::uint64_t seed) {
        config.validate();
        Rng rng(seed);
        ModelParams mp;
        mp.config = config;
        const std::size_t din = config.concat_dim();
        const std::size_t dh = config.d_hidden;
        const std::size_t D = config.D;

        mp.image.W_r = make_weight<Real>("image.proj.W_r", din, dh, rng);
        mp.image.W_v = make_weight<Real>("image.proj.W_v", dh, dh, rng);
        for (std::uint32_t l = 0; l < config.layers_pre; ++l)
            mp.image.pre.push_back(TransformerLayerParams<Real>::make(
                "image.pre." + std::to_string(l), dh, config.ff_mult, rng));
        mp.image.pre_ln_gain = make_gain<Real>("image.pre.final_ln.gain", dh);
        mp.image.pre_ln_bias = make_bias<Real>("image.pre.final_ln.bias", dh);
        mp.image.P = make_weight<Real>("image.P", dh, D, rng);
        for (std::uint32_t l = 0; l < config.layers_post; ++l)
            mp.image.post.push_back(TransformerLayerParams<Real>::make(
                "image.post." + std::to_string(l), D, config.ff_mult, rng));
        mp.image.post_ln_gain = make_gain<Real>("image.post.final_ln.gain", D);
        mp.image.post_ln_bias = make_bias<Real>("image.post.final_ln.bias", D);

        mp.text.W_embed = make_weight<Real>("text.W_embed", config.d_word, D, rng);
        mp.text.W_phi = make_weight<Real>("text.W_phi", D, D, rng);
        mp.text.W_psi = make_weight<Real>("text.W_psi", D, D, rng);
        mp.text.gcn_W_g = make_weight<Real>("text.gcn.W_g", D, D, rng);
        mp.text.gcn_W_r = make_weight<Real>("text.gcn.W_r", D, D, rng);

        mp.fusion.gate_W_g = make_weight<Real>("gate.W_g", 2 * D, D, rng);
        mp.fusion.gate_W_h = make_weight<Real>("gate.W_h", 2 * D, D, rng);
        return mp;
    }

    std::vector<Parameter<Real>*> parameters() {
        std::vector<Parameter<Real>*> out;
        out.push_back(&image.W_r);
        out.push_back(&image.W_v);
        for (auto& layer : image.pre) layer.collect(out);
        out.push_back(&image.pre_ln_gain);
        out.push_back(&image.pre_ln_bias);
        out.push_back(&image.P);
        for (auto& layer : image.post) layer.collect(out);
        out.push_back(&image.post_ln_gain);
        out.push_back(&image.post_ln_bias);
        out.push_back(&text.W_embed);
        out.push_back(&text.W_phi);
        out.push_back(&text.W_psi);
        out.push_back(&text.gcn_W_g);
        out.push_back(&text.gcn_W_r);
        out.push_back(&fusion.gate_W_g);
        out.push_back(&fusion.gate_W_h);
        return out;
    }

    void zero_grads() {
        for (auto* p : parameters()) p->zero_grad();
    }

    template <typename Other>
    ModelParams<Other> cast() const {
        ModelParams<Other> out = ModelParams<Other>::random_init(config, 0);
        auto src = const_cast<ModelParams*>(this)->parameters();
        auto dst = out.parameters();
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i]->value = src[i]->value.template cast<Other>();
            dst[i]->zero_grad();
        }
        return out;
    }
};

inline std::vector<float> arch_payload(const ModelConfig& c) {
    return {static_cast<float>(c.d_region),   static_cast<float>(c.d_word),
            static_cast<float>(c.d_hidden),   static_cast<float>(c.D),
            static_cast<float>(c.layers_pre), static_cast<float>(c.layers_post),
            static_cast<float>(c.heads),      static_cast<float>(c.ff_mult)};
}

inline ModelConfig arch_from_payload(const std::vector<float>& v, const std::string& file) {
    require(v.size() == 8, "checkpoint: meta.arch must hold 8 values in " + file);
    ModelConfig c;
    c.d_region = static_cast<std::uint32_t>(v[0]);
    c.d_word = static_cast<std::uint32_t>(v[1]);
    c.d_hidden = static_cast<std::uint32_t>(v[2]);
    c.D = static_cast<std::uint32_t>(v[3]);
    c.layers_pre = static_cast<std::uint32_t>(v[4]);
    c.layers_post = static_cast<std::uint32_t>(v[5]);
    c.heads = static_cast<std::uint32_t>(v[6]);
    c.ff_mult = static_cast<std::uint32_t>(v[7]);
    c.validate();
    return c;
}

// Checkpoints hold f32 values plus a meta.arch entry carrying ModelConfig.
template <typename Real>
void save_checkpoint(ModelParams<Real>& params, const std::string& path) {
    std::vector<TensorEntry> entries;
    TensorEntry meta;
    meta.name = "meta.arch";
    meta.dims = {8};
    meta.data = arch_payload(params.config);
    entries.push_back(std::move(meta));
    for (auto* p : params.parameters()) {
        TensorEntry e;
        e.name = p->name;
        for (auto d : p->value.shape) e.dims.push_back(static_cast<std::uint32_t>(d));
        e.data.reserve(p->value.size());
        for (Real v : p->value.data) e.data.push_back(static_cast<float>(v));
        entries.push_back(std::move(e));
    }
    write_container(path, entries);
}

template <typename Real>
ModelParams<Real> load_checkpoint(const std::string& path) {
    const auto entries = read_container(path);
    const auto& meta = find_entry(entries, "meta.arch", path);
    const ModelConfig config = arch_from_payload(meta.data, path);
    ModelParams<Real> mp = ModelParams<Real>::random_init(config, 0);
    std::size_t used = 1;
    for (auto* p : mp.parameters()) {
        const auto& e = find_entry(entries, p->name, path);
        require(e.dims.size() == p->value.shape.size() &&
                    e.element_count() == p->value.size(),
                "checkpoint: entry '" + p->name + "' has wrong shape in " + path);
        for (std::size_t k = 0; k < e.dims.size(); ++k)
            require(e.dims[k] == p->value.shape[k],
                    "checkpoint: entry '" + p->name + "' has wrong shape in " + path);
        for (std::size_t k = 0; k < e.data.size(); ++k)
            p->value.data[k] = static_cast<Real>(e.data[k]);
        p->zero_grad();
        ++used;
    }
    require(used == entries.size(), "checkpoint: " + path + " holds " +
                                        std::to_string(entries.size() - used) +
                                        " unknown entries");
    return mp;
}

} // namespace cpfean
