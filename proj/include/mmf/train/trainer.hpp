#pragma once

#include <chrono>
#include <unordered_map>

#include "mmf/filters/sources.hpp"
#include "mmf/train/augment.hpp"
#include "mmf/train/checkpoint.hpp"
#include "mmf/train/losses.hpp"
#include "mmf/train/optimizer.hpp"
#include "mmf/train/sampler.hpp"

namespace mmf {

template <typename T>
struct Batch {
    Tensor<T> rgb01, masks, r_np, r_srm;
    std::vector<int> labels;
    std::vector<std::string> keys;
    std::vector<std::uint64_t> sample_seeds;
};

template <typename T>
struct StepRecord {
    long step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double loss_conf = 0.0, loss_det = 0.0;
};

// Drives both training phases over a balanced epoch stream. Each optimizer
// step consumes one effective batch, split into physical micro-batches whose
// scaled losses accumulate into the same gradients (identical trajectories for
// any micro-batch size). Every stochastic choice is derived from
// (seed, epoch/step, sample position), so runs are reproducible and resumable.
template <typename T>
class Trainer {
  public:
    Trainer(const RunConfig& cfg, const DatasetManifest& manifest, const std::string& out_dir)
        : cfg_(cfg),
          manifest_(manifest),
          sources_(ResidualSources<T>::from_config(cfg.filters)),
          sampler_(manifest, cfg.train.quota, cfg.train.sample_with_replacement, cfg.train.seed),
          out_dir_(out_dir) {
        cfg_.validate();
        std::filesystem::create_directories(out_dir_);
        if (cfg_.filters.noiseprint_provider == "precomputed" &&
            (cfg_.train.augment_scale || cfg_.train.augment_jpeg))
            throw std::invalid_argument(
                "train: precomputed noiseprint residuals cannot follow photometric/geometric "
                "augmentation; disable augmentation or use the proxy/network provider");
        log_.open(out_dir_ + "/train_log.jsonl", std::ios::app);
    }

    long total_steps() const {
        const long per_epoch = steps_per_epoch();
        return cfg_.train.steps > 0 ? cfg_.train.steps : long(cfg_.train.epochs) * per_epoch;
    }

    long steps_per_epoch() const {
        long per = sampler_.epoch_size() / cfg_.train.effective_batch;
        if (per < 1)
            throw std::invalid_argument("train: epoch smaller than one effective batch (" +
                                        std::to_string(sampler_.epoch_size()) + " samples)");
        return per;
    }

    // phase 1: encoder + anomaly decoder (confidence decoder and detector untouched)
    void train_phase1(Network<T>& net, long start_step = 0,
                      const std::map<std::string, Tensor<T>>* opt_state = nullptr,
                      const std::function<void(Network<T>&, long)>& on_step = nullptr) {
        net.set_phase1_frozen(false);
        net.set_bayar_frozen(!cfg_.train.bayar_trainable);
        run_loop(net, Phase::Train1, start_step, opt_state, on_step);
        save(net, "phase1");
    }

    // phase 2: confidence decoder + detector, everything else frozen
    void train_phase2(Network<T>& net, long start_step = 0,
                      const std::map<std::string, Tensor<T>>* opt_state = nullptr,
                      const std::function<void(Network<T>&, long)>& on_step = nullptr) {
        net.set_phase1_frozen(true);
        run_loop(net, Phase::Train2, start_step, opt_state, on_step);
        save(net, "phase2");
    }

    const std::vector<StepRecord<T>>& history() const { return history_; }
    const ResidualSources<T>& sources() const { return sources_; }
    const std::string& checkpoint_path() const { return last_checkpoint_; }

    // mid-run snapshot (usable from an on_step callback); `next_step` is the
    // step a resumed run should start from
    void checkpoint_now(Network<T>& net, const std::string& path, const std::string& phase,
                        long next_step) {
        Rng rng(cfg_.train.seed);
        save_checkpoint(path, cfg_, net, opt_ ? opt_->state() : final_opt_state_, phase, next_step,
                        (next_step * cfg_.train.effective_batch) / sampler_.epoch_size(), rng);
    }

    Batch<T> assemble_batch(long step, int offset, int count) {
        Batch<T> b;
        const int H = cfg_.train.crop;
        b.rgb01 = Tensor<T>(Shape4(count, 3, H, H));
        b.masks = Tensor<T>(Shape4(count, 1, H, H));
        b.r_np = Tensor<T>(Shape4(count, 3, H, H));
        b.r_srm = Tensor<T>(Shape4(count, 3, H, H));
        for (int j = 0; j < count; ++j) {
            const long g = step * cfg_.train.effective_batch + offset + j;
            const long epoch = g / sampler_.epoch_size();
            const long pos = g % sampler_.epoch_size();
            if (epoch != cached_epoch_) {
                cached_order_ = sampler_.epoch(epoch);
                cached_epoch_ = epoch;
            }
            const std::size_t rec_idx = cached_order_[std::size_t(pos)];
            Sample<T> s = load_sample(rec_idx);
            Rng aug_rng(derive_seed(cfg_.train.seed, 0xA06u, std::uint64_t(epoch),
                                    std::uint64_t(pos)));
            s = augment(s, cfg_.train, aug_rng);
            Tensor<T> np = sources_.np(s.rgb01, s.key);
            Tensor<T> srm = sources_.srm(s.rgb01);
            copy_into(b.rgb01, s.rgb01, j);
            copy_into(b.masks, s.mask, j);
            copy_into(b.r_np, np, j);
            copy_into(b.r_srm, srm, j);
            b.labels.push_back(s.manipulated ? 1 : 0);
            b.keys.push_back(s.key);
            b.sample_seeds.push_back(
                derive_seed(cfg_.train.seed, 0xD120u, std::uint64_t(step), std::uint64_t(offset + j)));
        }
        return b;
    }

  private:
    void run_loop(Network<T>& net, Phase phase, long start_step,
                  const std::map<std::string, Tensor<T>>* opt_state,
                  const std::function<void(Network<T>&, long)>& on_step) {
        const long total = total_steps();
        SgdOptimizer<T> opt(net.params().trainable(), cfg_.train.momentum, cfg_.train.weight_decay);
        if (opt_state) opt.load_state(*opt_state);
        opt_ = &opt;

        const int E = cfg_.train.effective_batch;
        const int P = cfg_.train.physical_batch;
        for (long step = start_step; step < total; ++step) {
            opt.zero_grad();
            double step_loss = 0.0, step_conf = 0.0, step_det = 0.0;
            for (int off = 0; off < E; off += P) {
                Batch<T> b = assemble_batch(step, off, P);
                Tape<T> tape;
                FwdCtx<T> ctx(tape);
                ctx.sample_seeds = b.sample_seeds;
                ctx.bn_group = bn_group();
                auto out = net.forward(ctx, b.rgb01, b.r_np, b.r_srm, phase, -1, -1, {},
                                       phase != Phase::Train1);
                int loss;
                if (phase == Phase::Train1) {
                    loss = localization_loss(tape, out.loc_logits, b.masks);
                } else {
                    Tensor<T> target = confidence_target(tape.val(out.loc), b.masks);
                    int lc = confidence_loss(tape, out.conf, target);
                    int ld = detection_loss(tape, out.score, b.labels);
                    step_conf += double(tape.val(lc).item()) * P / E;
                    step_det += double(tape.val(ld).item()) * P / E;
                    loss = add(tape, scale(tape, lc, T(cfg_.train.conf_loss_weight)),
                               scale(tape, ld, T(cfg_.train.det_loss_weight)));
                }
                const double lval = double(tape.val(loss).item());
                if (!std::isfinite(lval))
                    throw std::runtime_error("training aborted: non-finite loss at step " +
                                             std::to_string(step) + ", micro-batch offset " +
                                             std::to_string(off));
                step_loss += lval * P / E;
                // scale so accumulated micro-batches equal one large batch
                int scaled = scale(tape, loss, T(double(P) / double(E)));
                tape.backward(scaled);
                ctx.harvest();
            }
            const double lr = poly_lr(step, total, cfg_.train.lr0, cfg_.train.poly_power);
            opt.step(lr);
            if (phase == Phase::Train1) net.bayar().project();

            StepRecord<T> rec;
            rec.step = step;
            rec.lr = lr;
            rec.loss = step_loss;
            rec.loss_conf = step_conf;
            rec.loss_det = step_det;
            history_.push_back(rec);
            log_step(rec, phase);
            if (on_step) on_step(net, step);
        }
        final_step_ = total;
        final_opt_state_ = opt.state();
        opt_ = nullptr;
    }

    int bn_group() const {
        return cfg_.train.bn_group > 0 ? cfg_.train.bn_group : cfg_.train.physical_batch;
    }

    Sample<T> load_sample(std::size_t rec_idx) {
        auto it = cache_.find(rec_idx);
        if (it != cache_.end()) return it->second;
        const ManifestRecord& r = manifest_.records[rec_idx];
        Sample<T> s;
        ImageU8 raw = load_image(manifest_.resolve(r.image));
        s.rgb01 = to_tensor01<T>(raw);
        if (!r.mask.empty())
            s.mask = load_mask<T>(manifest_.resolve(r.mask), r.mask_white);
        else
            s.mask = Tensor<T>(Shape4(1, 1, s.rgb01.shape.h, s.rgb01.shape.w));
        if (s.mask.shape.h != s.rgb01.shape.h || s.mask.shape.w != s.rgb01.shape.w)
            throw std::runtime_error("train: mask dims differ from image dims for " + r.image);
        s.manipulated = r.manipulated;
        s.key = r.image;
        if (cache_bytes_ < kCacheLimit) {
            cache_bytes_ += s.rgb01.size() * sizeof(T);
            cache_.emplace(rec_idx, s);
        }
        return s;
    }

    static void copy_into(Tensor<T>& dst, const Tensor<T>& src, int n) {
        const std::size_t per = std::size_t(dst.shape.c) * dst.shape.h * dst.shape.w;
        if (src.size() != per)
            throw std::runtime_error("batch assembly: sample dims " + src.shape.str() +
                                     " do not match batch " + dst.shape.str());
        std::memcpy(dst.data() + std::size_t(n) * per, src.data(), per * sizeof(T));
    }

    void log_step(const StepRecord<T>& rec, Phase phase) {
        nlohmann::ordered_json j;
        j["step"] = rec.step;
        j["phase"] = phase == Phase::Train1 ? 1 : 2;
        j["lr"] = rec.lr;
        j["loss"] = rec.loss;
        if (phase == Phase::Train2) {
            j["loss_conf"] = rec.loss_conf;
            j["loss_det"] = rec.loss_det;
        }
        j["ts"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
        log_ << j.dump() << "\n";
        log_.flush();
    }

    void save(Network<T>& net, const std::string& phase) {
        last_checkpoint_ = out_dir_ + "/" + phase + ".ckpt";
        checkpoint_now(net, last_checkpoint_, phase, final_step_);
    }

    static constexpr std::size_t kCacheLimit = 512ull << 20;

    RunConfig cfg_;
    DatasetManifest manifest_;
    ResidualSources<T> sources_;
    EpochSampler sampler_;
    std::string out_dir_;
    std::ofstream log_;
    std::vector<StepRecord<T>> history_;
    std::unordered_map<std::size_t, Sample<T>> cache_;
    std::size_t cache_bytes_ = 0;
    long cached_epoch_ = -1;
    std::vector<std::size_t> cached_order_;
    long final_step_ = 0;
    SgdOptimizer<T>* opt_ = nullptr;
    std::map<std::string, Tensor<T>> final_opt_state_;
    std::string last_checkpoint_;
};

}  // namespace mmf
