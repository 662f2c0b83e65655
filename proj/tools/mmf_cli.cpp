// Command-line surface for the multi-filter manipulation localization and
// detection pipeline: two-phase training, Bayar pretraining, evaluation,
// robustness sweeps, modality-masking explanations, single-image prediction,
// synthetic corpus generation and video first-frame sampling.

#include <CLI11.hpp>

#include "mmf/data/synthetic.hpp"
#include "mmf/eval/explain.hpp"
#include "mmf/eval/robustness.hpp"
#include "mmf/train/trainer.hpp"

using namespace mmf;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string profile = "toy";
    std::string manifest_path;
    std::string checkpoint_path;
    std::string out_dir = "out";
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_manifest, bool needs_checkpoint) {
    cmd->add_option("--config", o.config_path, "run-config JSON file");
    cmd->add_option("--profile", o.profile, "configuration profile (toy|small|full)");
    auto* m = cmd->add_option("--manifest", o.manifest_path, "dataset manifest (JSONL)");
    if (needs_manifest) m->required();
    auto* c = cmd->add_option("--checkpoint", o.checkpoint_path, "model checkpoint");
    if (needs_checkpoint) c->required();
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "global seed (overrides config)");
}

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) {
        cfg = load_run_config(o.config_path);
    } else {
        cfg.profile = o.profile;
        cfg.model = ModelConfig::profile(o.profile);
        if (o.profile == "toy") cfg.train = TrainConfig::toy();
    }
    if (o.seed >= 0) cfg.train.seed = std::uint64_t(o.seed);
    return cfg;
}

void maybe_import_bayar(Network<float>& net, const RunConfig& cfg) {
    if (cfg.filters.bayar_import.empty()) return;
    auto loaded = load_checkpoint<float>(cfg.filters.bayar_import);
    auto src = loaded.network->params().find("bayar.weight");
    auto dst = net.params().find("bayar.weight");
    if (!src || !dst) throw std::runtime_error("bayar import: no bayar.weight in checkpoint");
    if (src->value.shape != dst->value.shape)
        throw std::runtime_error("bayar import: kernel shape mismatch " + src->value.shape.str() +
                                 " vs " + dst->value.shape.str());
    dst->value = src->value;
    std::cerr << "[bayar] imported pretrained taps from " << cfg.filters.bayar_import << "\n";
}

int cmd_train_phase1(const CommonOpts& o, const std::string& fusion_override, long steps_override) {
    RunConfig cfg = resolve_config(o);
    if (!fusion_override.empty()) cfg.model.fusion = fusion_from_name(fusion_override);
    if (steps_override > 0) cfg.train.steps = steps_override;
    DatasetManifest manifest = DatasetManifest::load(o.manifest_path, true);
    std::cout << "manifest: " << manifest.records.size() << " records ("
              << manifest.count_authentic() << " authentic, " << manifest.count_manipulated()
              << " manipulated)\n";
    Network<float> net(cfg.model, cfg.train.seed);
    maybe_import_bayar(net, cfg);
    Trainer<float> trainer(cfg, manifest, o.out_dir);
    std::cout << "phase 1: " << trainer.total_steps() << " steps, fusion "
              << fusion_name(cfg.model.fusion) << ", " << net.params().count_trainable_scalars()
              << " trainable scalars\n";
    trainer.train_phase1(net);
    std::cout << "checkpoint: " << trainer.checkpoint_path() << "\n";
    return 0;
}

int cmd_train_phase2(const CommonOpts& o, long steps_override) {
    if (o.checkpoint_path.empty())
        throw std::runtime_error("train-phase2: --checkpoint with the phase-1 model is required");
    auto loaded = load_checkpoint<float>(o.checkpoint_path);
    if (loaded.phase != "phase1")
        std::cerr << "[train-phase2] warning: checkpoint phase is '" << loaded.phase << "'\n";
    RunConfig cfg = loaded.config;
    if (o.seed >= 0) cfg.train.seed = std::uint64_t(o.seed);
    if (steps_override > 0) cfg.train.steps = steps_override;
    DatasetManifest manifest = DatasetManifest::load(o.manifest_path, true);
    Trainer<float> trainer(cfg, manifest, o.out_dir);
    std::cout << "phase 2: " << trainer.total_steps() << " steps\n";
    trainer.train_phase2(*loaded.network);
    std::cout << "checkpoint: " << trainer.checkpoint_path() << "\n";
    return 0;
}

int cmd_pretrain_bayar(const CommonOpts& o, long steps_override) {
    RunConfig cfg = resolve_config(o);
    cfg.model.fusion = FusionMode::SingleAux;
    cfg.model.single_aux = AuxKind::Bayar;
    cfg.train.bayar_trainable = true;
    if (steps_override > 0) cfg.train.steps = steps_override;
    DatasetManifest manifest = DatasetManifest::load(o.manifest_path, true);
    Network<float> net(cfg.model, cfg.train.seed);
    Trainer<float> trainer(cfg, manifest, o.out_dir);
    std::cout << "bayar pretraining: " << trainer.total_steps() << " steps\n";
    trainer.train_phase1(net);
    std::cout << "checkpoint (import via filters.bayar_import): " << trainer.checkpoint_path()
              << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& o) {
    auto loaded = load_checkpoint<float>(o.checkpoint_path);
    RunConfig cfg = loaded.config;
    if (o.seed >= 0) cfg.train.seed = std::uint64_t(o.seed);
    DatasetManifest manifest = DatasetManifest::load(o.manifest_path, true);
    auto sources = ResidualSources<float>::from_config(cfg.filters);
    Predictor<float> pred(*loaded.network, sources);
    MetricsReport rep = evaluate(pred, manifest);
    rep.config_hash = config_hash(cfg);
    rep.checkpoint_id = checkpoint_id(*loaded.network);
    rep.seed = cfg.train.seed;
    rep.write(o.out_dir, "eval_report");
    for (const auto& d : rep.per_dataset)
        std::cout << d.name << ": f1=" << d.pixel_f1 << " auc=" << d.auc << " bacc=" << d.bacc
                  << " (" << d.n_images << " images)\n";
    std::cout << "AVG: f1=" << rep.average.pixel_f1 << " auc=" << rep.average.auc
              << " bacc=" << rep.average.bacc << "\n";
    return 0;
}

int cmd_robustness(const CommonOpts& o) {
    auto loaded = load_checkpoint<float>(o.checkpoint_path);
    RunConfig cfg = loaded.config;
    if (o.seed >= 0) cfg.train.seed = std::uint64_t(o.seed);
    DatasetManifest manifest = DatasetManifest::load(o.manifest_path, true);
    auto sources = ResidualSources<float>::from_config(cfg.filters);
    Predictor<float> pred(*loaded.network, sources);
    RobustnessSeries series = robustness_sweep(
        pred, manifest, {DegradationSpec::default_blur(), DegradationSpec::default_jpeg()});
    series.config_hash = config_hash(cfg);
    series.checkpoint_id = checkpoint_id(*loaded.network);
    series.seed = cfg.train.seed;
    series.write(o.out_dir);
    std::cout << "baseline f1 " << series.baseline_f1 << "\n";
    for (const auto& p : series.points)
        std::cout << degradation_name(p.kind) << " " << p.level << ": f1=" << p.pixel_f1 << "\n";
    return 0;
}

int cmd_explain(const CommonOpts& o, const std::string& modality, const std::string& mode,
                const std::string& pool_path, bool blind) {
    auto loaded = load_checkpoint<float>(o.checkpoint_path);
    RunConfig cfg = loaded.config;
    if (o.seed >= 0) cfg.train.seed = std::uint64_t(o.seed);
    DatasetManifest manifest = DatasetManifest::load(o.manifest_path, !blind);
    auto sources = ResidualSources<float>::from_config(cfg.filters);
    Predictor<float> pred(*loaded.network, sources);

    DatasetManifest pool;
    MaskSpec spec;
    spec.mode = mask_mode_from_name(mode);
    if (spec.mode == MaskMode::RandomImage) {
        if (pool_path.empty())
            throw std::runtime_error("explain: --pristine-pool is required for random_image mode");
        pool = DatasetManifest::load(pool_path, false);
        spec.pristine_pool = &pool;
    }
    std::vector<AuxKind> targets;
    if (modality == "all")
        targets = {AuxKind::NoisePrint, AuxKind::Srm, AuxKind::Bayar};
    else
        targets = {aux_from_name(modality)};

    nlohmann::ordered_json out;
    out["kind"] = blind ? "explain_pq" : "explain_delta_f1";
    out["mask_mode"] = mode;
    out["config_hash"] = config_hash(cfg);
    out["checkpoint_id"] = checkpoint_id(*loaded.network);
    out["seed"] = cfg.train.seed;
    out["codecs"] = codec_versions();
    if (sources.noiseprint.kind() == NoisePrintProvider<float>::Kind::Proxy)
        out["noiseprint_provider"] = "proxy";
    out["results"] = nlohmann::ordered_json::array();
    for (AuxKind target : targets) {
        spec.target = target;
        ExplainResult res = blind
                                ? prediction_quality_sweep(pred, manifest, spec, cfg.train.seed)
                                : filter_importance(pred, manifest, spec, cfg.train.seed);
        out["results"].push_back(res.to_json());
        if (blind)
            std::cout << aux_name(target) << " -> " << mode << ": PQ=" << res.pq << "\n";
        else
            std::cout << aux_name(target) << " -> " << mode << ": dF1=" << res.delta_f1 << "\n";
    }
    std::filesystem::create_directories(o.out_dir);
    std::ofstream os(o.out_dir + "/explain_report.json");
    out["generated_at_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count();
    os << out.dump(2) << "\n";
    return 0;
}

int cmd_predict(const CommonOpts& o, const std::string& image_path) {
    auto loaded = load_checkpoint<float>(o.checkpoint_path);
    auto sources = ResidualSources<float>::from_config(loaded.config.filters);
    Predictor<float> pred(*loaded.network, sources);
    PredictionBundle<float> b = pred.predict_path(image_path);
    std::filesystem::create_directories(o.out_dir);
    save_png(o.out_dir + "/localization.png", from_tensor01(b.loc));
    save_png(o.out_dir + "/confidence.png", from_tensor01(b.conf));
    nlohmann::ordered_json j;
    j["image"] = image_path;
    j["detection_score"] = b.score;
    j["original_dims"] = {b.pad.orig_h, b.pad.orig_w};
    j["checkpoint_id"] = checkpoint_id(*loaded.network);
    std::ofstream os(o.out_dir + "/prediction.json");
    os << j.dump(2) << "\n";
    std::cout << "detection score: " << b.score << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-filter image manipulation localization and detection"};
    app.require_subcommand(1);

    CommonOpts o1, o2, ob, oe, orb, oex, opr, oms, ovf;
    std::string fusion_override;
    long steps_override = 0;

    auto* p1 = app.add_subcommand("train-phase1", "train encoder + anomaly decoder");
    add_common(p1, o1, true, false);
    p1->add_option("--fusion", fusion_override, "fusion mode (single-aux|late|early)");
    p1->add_option("--steps", steps_override, "override optimizer-step budget");

    auto* p2 = app.add_subcommand("train-phase2", "train confidence decoder + detector (frozen trunk)");
    add_common(p2, o2, true, true);
    long steps2 = 0;
    p2->add_option("--steps", steps2, "override optimizer-step budget");

    auto* pb = app.add_subcommand("pretrain-bayar", "single-aux run that trains the Bayar taps");
    add_common(pb, ob, true, false);
    long stepsb = 0;
    pb->add_option("--steps", stepsb, "override optimizer-step budget");

    auto* pe = app.add_subcommand("eval", "metric report over a manifest");
    add_common(pe, oe, true, true);

    auto* pr = app.add_subcommand("robustness", "blur/JPEG degradation sweep");
    add_common(pr, orb, true, true);

    auto* px = app.add_subcommand("explain", "modality-masking importance");
    add_common(px, oex, true, true);
    std::string modality = "all", mode = "zeros", pool_path;
    bool blind = false;
    px->add_option("--mask-modality", modality, "noiseprint|srm|bayar|all");
    px->add_option("--mask-mode", mode, "zeros|random_image|self_test");
    px->add_option("--pristine-pool", pool_path, "manifest of authentic images");
    px->add_flag("--blind", blind, "report PQ (no ground truth needed) instead of dF1");

    auto* pp = app.add_subcommand("predict", "single-image prediction");
    add_common(pp, opr, false, true);
    std::string image_path;
    pp->add_option("--image", image_path, "input image")->required();

    auto* pm = app.add_subcommand("make-synthetic", "generate a toy splice corpus");
    add_common(pm, oms, false, false);
    SyntheticSpec spec;
    pm->add_option("--count", spec.count, "number of images");
    pm->add_option("--size", spec.size, "image side length");
    pm->add_option("--kind", spec.kind, "noise|edge");

    auto* pv = app.add_subcommand("video-frames", "first-frame manifest from a video manifest");
    add_common(pv, ovf, true, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (p1->parsed()) return cmd_train_phase1(o1, fusion_override, steps_override);
        if (p2->parsed()) return cmd_train_phase2(o2, steps2);
        if (pb->parsed()) return cmd_pretrain_bayar(ob, stepsb);
        if (pe->parsed()) return cmd_eval(oe);
        if (pr->parsed()) return cmd_robustness(orb);
        if (px->parsed()) return cmd_explain(oex, modality, mode, pool_path, blind);
        if (pp->parsed()) return cmd_predict(opr, image_path);
        if (pm->parsed()) {
            spec.seed = oms.seed >= 0 ? std::uint64_t(oms.seed) : 0;
            DatasetManifest m = make_synthetic(spec, oms.out_dir);
            std::cout << "wrote " << m.records.size() << " images under " << oms.out_dir << "\n";
            return 0;
        }
        if (pv->parsed()) {
            DatasetManifest frames = first_frame_sample(ovf.manifest_path);
            std::filesystem::create_directories(ovf.out_dir);
            save_manifest(frames, ovf.out_dir + "/frames_manifest.jsonl");
            std::cout << "wrote " << frames.records.size() << " frame records ("
                      << frames.count_authentic() << " authentic, " << frames.count_manipulated()
                      << " manipulated)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
