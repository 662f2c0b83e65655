#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_map>

#include "mmf/core/rng.hpp"
#include "mmf/core/tape.hpp"

namespace mmf {

// A named, persistent tensor with its gradient accumulator. `trainable`
// distinguishes parameters from buffers (running statistics); `frozen`
// parameters keep their gradients at zero and receive no optimizer updates.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
    bool frozen = false;
    bool is_buffer = false;
    bool weight_decay_exempt = false;

    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), T(0)); }
};

template <typename T>
using ParamPtr = std::shared_ptr<Param<T>>;

// Owns every parameter and buffer of a model, keyed by a unique hierarchical
// name. Weight sharing is expressed by modules holding the same ParamPtr; the
// registry stores each underlying tensor exactly once.
template <typename T>
class ParamRegistry {
  public:
    explicit ParamRegistry(std::uint64_t init_seed = 0) : rng_(init_seed) {}

    ParamPtr<T> create(const std::string& name, Shape4 shape) {
        if (by_name_.count(name))
            throw std::invalid_argument("ParamRegistry: duplicate name " + name);
        auto p = std::make_shared<Param<T>>();
        p->name = name;
        p->value = Tensor<T>(shape);
        p->grad = Tensor<T>(shape);
        by_name_[name] = p;
        ordered_.push_back(p);
        return p;
    }

    ParamPtr<T> buffer(const std::string& name, Shape4 shape, T fill = T(0)) {
        auto p = create(name, shape);
        p->trainable = false;
        p->is_buffer = true;
        for (T& x : p->value.v) x = fill;
        return p;
    }

    ParamPtr<T> find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : it->second;
    }

    const std::vector<ParamPtr<T>>& all() const { return ordered_; }

    std::vector<ParamPtr<T>> trainable() const {
        std::vector<ParamPtr<T>> out;
        for (const auto& p : ordered_)
            if (p->trainable) out.push_back(p);
        return out;
    }

    std::size_t count_trainable_scalars() const {
        std::size_t n = 0;
        for (const auto& p : ordered_)
            if (p->trainable) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (auto& p : ordered_) p->zero_grad();
    }

    Rng& init_rng() { return rng_; }

  private:
    std::unordered_map<std::string, ParamPtr<T>> by_name_;
    std::vector<ParamPtr<T>> ordered_;
    Rng rng_;
};

// ---------------------------------------------------------------------------
// initializers
// ---------------------------------------------------------------------------

template <typename T>
void init_trunc_normal(Param<T>& p, Rng& rng, double stddev = 0.02) {
    for (T& x : p.value.v) x = T(rng.trunc_normal(0.0, stddev));
}

template <typename T>
void init_normal(Param<T>& p, Rng& rng, double mean, double stddev) {
    for (T& x : p.value.v) x = T(rng.normal(mean, stddev));
}

// fan_out variant, as used for conv layers in segmentation backbones
template <typename T>
void init_kaiming_conv(Param<T>& p, Rng& rng) {
    const Shape4 s = p.value.shape;
    double fan_out = double(s.n) * s.h * s.w;
    double stddev = std::sqrt(2.0 / fan_out);
    for (T& x : p.value.v) x = T(rng.normal(0.0, stddev));
}

template <typename T>
void init_const(Param<T>& p, T value) {
    for (T& x : p.value.v) x = value;
}

// ---------------------------------------------------------------------------
// forward context
// ---------------------------------------------------------------------------

// Per-forward-pass state: binds persistent parameters to tape leaves (each
// parameter becomes exactly one leaf per pass, so shared weights accumulate
// gradients from every use site), carries the train/eval switches and the
// per-sample dropout seeds.
template <typename T>
struct FwdCtx {
    Tape<T>& tape;
    bool train_encoder = false;   // encoder + anomaly decoder branches
    bool train_head = false;      // confidence decoder + forgery detector
    bool update_bn_stats = true;  // disabled during finite-difference probes
    int bn_group = 0;             // 0: whole batch
    std::vector<std::uint64_t> sample_seeds;
    std::map<std::string, int>* probes = nullptr;  // test hooks

    std::unordered_map<Param<T>*, int> bound;
    std::vector<std::pair<Param<T>*, int>> bound_order;

    explicit FwdCtx(Tape<T>& t) : tape(t) {}

    int use(const ParamPtr<T>& p) {
        auto it = bound.find(p.get());
        if (it != bound.end()) return it->second;
        bool needs = p->trainable && !p->frozen;
        int id = tape.leaf(p->value, needs);
        bound[p.get()] = id;
        bound_order.emplace_back(p.get(), id);
        return id;
    }

    // copy tape gradients back into parameter accumulators
    void harvest() {
        for (auto& [param, id] : bound_order) {
            if (!param->trainable || param->frozen) continue;
            if (!tape.has_grad(id)) continue;
            const Tensor<T>& g = tape.grad(id);
            for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
        }
    }

    void probe(const std::string& key, int node) {
        if (probes) (*probes)[key] = node;
    }
};

}  // namespace mmf
