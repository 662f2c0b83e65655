#pragma once

#include <json.hpp>

#include "mmf/model/config.hpp"

namespace mmf {

struct TrainConfig {
    double lr0 = 0.005;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int effective_batch = 24;
    int physical_batch = 4;
    int epochs = 100;
    long steps = 0;  // > 0 overrides epochs with an absolute optimizer-step budget
    double poly_power = 0.9;
    std::uint64_t seed = 0;
    int crop = 512;
    double scale_min = 0.5, scale_max = 1.5;
    int jpeg_qf_min = 30, jpeg_qf_max = 100;
    bool augment_scale = true;
    bool augment_jpeg = true;
    long quota = 0;  // per-source samples per epoch; 0 = smallest dataset
    bool sample_with_replacement = false;
    bool bayar_trainable = false;  // fusion runs keep the pretrained taps frozen
    int bn_group = 0;  // batch-stat window; 0 tracks the physical batch size
    double conf_loss_weight = 1.0;
    double det_loss_weight = 1.0;

    void validate() const {
        if (effective_batch < 1 || physical_batch < 1 || effective_batch % physical_batch != 0)
            throw std::invalid_argument("train: effective batch must be a multiple of physical");
        if (scale_min > scale_max || scale_min <= 0)
            throw std::invalid_argument("train: bad scale range");
        if (jpeg_qf_min > jpeg_qf_max || jpeg_qf_min < 1 || jpeg_qf_max > 100)
            throw std::invalid_argument("train: bad jpeg quality range");
        if (crop % 32 != 0) throw std::invalid_argument("train: crop must be a multiple of 32");
        if (lr0 <= 0 || poly_power <= 0) throw std::invalid_argument("train: bad lr schedule");
    }

    static TrainConfig toy() {
        TrainConfig c;
        c.crop = 64;
        c.effective_batch = 8;
        c.physical_batch = 8;
        c.steps = 200;
        c.epochs = 0;
        c.augment_scale = false;
        c.augment_jpeg = false;
        return c;
    }
};

struct FiltersConfig {
    std::string srm_kernels = "data/srm_kernels.txt";
    double srm_truncation = 2.0;
    std::string noiseprint_provider = "proxy";  // proxy | precomputed | network
    std::string noiseprint_store;               // precomputed root or weights file
    std::string bayar_import;                   // optional pretrained bayar checkpoint
};

struct RunConfig {
    std::string profile = "toy";
    ModelConfig model = ModelConfig::toy();
    TrainConfig train = TrainConfig::toy();
    FiltersConfig filters;

    void validate() const {
        model.validate();
        train.validate();
    }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization; unknown keys are rejected to catch typos
// ---------------------------------------------------------------------------

namespace detail {

template <typename T2>
void get_if(const nlohmann::json& j, const char* key, T2& out) {
    if (j.contains(key)) out = j.at(key).get<T2>();
}

inline void get_arr4(const nlohmann::json& j, const char* key, std::array<int, 4>& out) {
    if (!j.contains(key)) return;
    auto a = j.at(key);
    if (!a.is_array() || a.size() != 4) throw std::invalid_argument(std::string(key) + ": need 4 ints");
    for (int i = 0; i < 4; ++i) out[i] = a[i].get<int>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ModelConfig& m) {
    nlohmann::ordered_json j;
    j["channels"] = m.channels;
    j["depths"] = m.depths;
    j["heads"] = m.heads;
    j["sr_ratios"] = m.sr_ratios;
    j["mlp_ratio"] = m.mlp_ratio;
    j["fusion"] = fusion_name(m.fusion);
    j["single_aux"] = aux_name(m.single_aux);
    j["share_rgb_branch"] = m.share_rgb_branch;
    j["frm_lambda"] = m.frm_lambda;
    j["frm_reduction"] = m.frm_reduction;
    j["use_frd"] = m.use_frd;
    j["dropout"] = m.dropout_rate;
    j["efm_widths"] = m.efm_widths;
    j["decoder_embed"] = m.decoder_embed;
    j["detector_hidden"] = m.detector_hidden;
    j["bayar_kernel"] = m.bayar_kernel;
    return j;
}

inline void from_json_model(const nlohmann::json& j, ModelConfig& m) {
    detail::get_arr4(j, "channels", m.channels);
    detail::get_arr4(j, "depths", m.depths);
    detail::get_arr4(j, "heads", m.heads);
    detail::get_arr4(j, "sr_ratios", m.sr_ratios);
    detail::get_arr4(j, "efm_widths", m.efm_widths);
    detail::get_if(j, "mlp_ratio", m.mlp_ratio);
    if (j.contains("fusion")) m.fusion = fusion_from_name(j.at("fusion").get<std::string>());
    if (j.contains("single_aux")) m.single_aux = aux_from_name(j.at("single_aux").get<std::string>());
    detail::get_if(j, "share_rgb_branch", m.share_rgb_branch);
    detail::get_if(j, "frm_lambda", m.frm_lambda);
    detail::get_if(j, "frm_reduction", m.frm_reduction);
    detail::get_if(j, "use_frd", m.use_frd);
    detail::get_if(j, "dropout", m.dropout_rate);
    detail::get_if(j, "decoder_embed", m.decoder_embed);
    detail::get_if(j, "detector_hidden", m.detector_hidden);
    detail::get_if(j, "bayar_kernel", m.bayar_kernel);
}

inline nlohmann::ordered_json to_json(const TrainConfig& t) {
    nlohmann::ordered_json j;
    j["lr0"] = t.lr0;
    j["momentum"] = t.momentum;
    j["weight_decay"] = t.weight_decay;
    j["effective_batch"] = t.effective_batch;
    j["physical_batch"] = t.physical_batch;
    j["epochs"] = t.epochs;
    j["steps"] = t.steps;
    j["poly_power"] = t.poly_power;
    j["seed"] = t.seed;
    j["crop"] = t.crop;
    j["scale_range"] = {t.scale_min, t.scale_max};
    j["jpeg_qf_range"] = {t.jpeg_qf_min, t.jpeg_qf_max};
    j["augment_scale"] = t.augment_scale;
    j["augment_jpeg"] = t.augment_jpeg;
    j["quota"] = t.quota;
    j["sample_with_replacement"] = t.sample_with_replacement;
    j["bayar_trainable"] = t.bayar_trainable;
    j["bn_group"] = t.bn_group;
    j["conf_loss_weight"] = t.conf_loss_weight;
    j["det_loss_weight"] = t.det_loss_weight;
    return j;
}

inline void from_json_train(const nlohmann::json& j, TrainConfig& t) {
    detail::get_if(j, "lr0", t.lr0);
    detail::get_if(j, "momentum", t.momentum);
    detail::get_if(j, "weight_decay", t.weight_decay);
    detail::get_if(j, "effective_batch", t.effective_batch);
    detail::get_if(j, "physical_batch", t.physical_batch);
    detail::get_if(j, "epochs", t.epochs);
    detail::get_if(j, "steps", t.steps);
    detail::get_if(j, "poly_power", t.poly_power);
    detail::get_if(j, "seed", t.seed);
    detail::get_if(j, "crop", t.crop);
    if (j.contains("scale_range")) {
        t.scale_min = j.at("scale_range")[0].get<double>();
        t.scale_max = j.at("scale_range")[1].get<double>();
    }
    if (j.contains("jpeg_qf_range")) {
        t.jpeg_qf_min = j.at("jpeg_qf_range")[0].get<int>();
        t.jpeg_qf_max = j.at("jpeg_qf_range")[1].get<int>();
    }
    detail::get_if(j, "augment_scale", t.augment_scale);
    detail::get_if(j, "augment_jpeg", t.augment_jpeg);
    detail::get_if(j, "quota", t.quota);
    detail::get_if(j, "sample_with_replacement", t.sample_with_replacement);
    detail::get_if(j, "bayar_trainable", t.bayar_trainable);
    detail::get_if(j, "bn_group", t.bn_group);
    detail::get_if(j, "conf_loss_weight", t.conf_loss_weight);
    detail::get_if(j, "det_loss_weight", t.det_loss_weight);
}

inline nlohmann::ordered_json to_json(const RunConfig& r) {
    nlohmann::ordered_json j;
    j["profile"] = r.profile;
    j["model"] = to_json(r.model);
    j["train"] = to_json(r.train);
    nlohmann::ordered_json f;
    f["srm_kernels"] = r.filters.srm_kernels;
    f["srm_truncation"] = r.filters.srm_truncation;
    f["noiseprint_provider"] = r.filters.noiseprint_provider;
    f["noiseprint_store"] = r.filters.noiseprint_store;
    f["bayar_import"] = r.filters.bayar_import;
    j["filters"] = f;
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig r;
    if (j.contains("profile")) {
        r.profile = j.at("profile").get<std::string>();
        r.model = ModelConfig::profile(r.profile);
        if (r.profile == "toy") r.train = TrainConfig::toy();
    }
    if (j.contains("model")) from_json_model(j.at("model"), r.model);
    if (j.contains("train")) from_json_train(j.at("train"), r.train);
    if (j.contains("filters")) {
        const auto& f = j.at("filters");
        detail::get_if(f, "srm_kernels", r.filters.srm_kernels);
        detail::get_if(f, "srm_truncation", r.filters.srm_truncation);
        detail::get_if(f, "noiseprint_provider", r.filters.noiseprint_provider);
        detail::get_if(f, "noiseprint_store", r.filters.noiseprint_store);
        detail::get_if(f, "bayar_import", r.filters.bayar_import);
    }
    r.validate();
    return r;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return run_config_from_json(j);
}

// FNV-1a over the canonical JSON form; embedded in every report
inline std::string config_hash(const RunConfig& r) {
    std::string s = to_json(r).dump();
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace mmf
