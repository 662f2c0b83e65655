#pragma once

#include "mmf/nn/param.hpp"

namespace mmf {

// lr = lr0 * (1 - step/total)^power
inline double poly_lr(long step, long total_steps, double lr0, double power) {
    if (step < 0 || step > total_steps || total_steps <= 0)
        throw std::invalid_argument("poly_lr: need 0 <= step <= total_steps");
    return lr0 * std::pow(1.0 - double(step) / double(total_steps), power);
}

// SGD with momentum and L2 weight decay (decay added to the gradient, as in
// the usual segmentation training recipes). Frozen and non-trainable
// parameters are never touched; decay-exempt parameters (the Bayar taps) skip
// the L2 term so the post-step projection is the only thing shaping them.
template <typename T>
class SgdOptimizer {
  public:
    double momentum = 0.9;
    double weight_decay = 0.0005;

    explicit SgdOptimizer(std::vector<ParamPtr<T>> params, double momentum_ = 0.9,
                          double weight_decay_ = 0.0005)
        : momentum(momentum_), weight_decay(weight_decay_), params_(std::move(params)) {
        for (auto& p : params_) velocity_.emplace_back(p->value.shape);
    }

    const std::vector<ParamPtr<T>>& params() const { return params_; }

    void step(double lr) {
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Param<T>& p = *params_[pi];
            if (!p.trainable || p.frozen) continue;
            Tensor<T>& v = velocity_[pi];
            const T wd = p.weight_decay_exempt ? T(0) : T(weight_decay);
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                T g = p.grad[i] + wd * p.value[i];
                v[i] = T(momentum) * v[i] + g;
                p.value[i] -= T(lr) * v[i];
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    // momentum buffers, keyed for checkpointing
    std::map<std::string, Tensor<T>> state() const {
        std::map<std::string, Tensor<T>> out;
        for (std::size_t pi = 0; pi < params_.size(); ++pi)
            out["momentum." + params_[pi]->name] = velocity_[pi];
        return out;
    }

    void load_state(const std::map<std::string, Tensor<T>>& state) {
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto it = state.find("momentum." + params_[pi]->name);
            if (it == state.end()) continue;
            if (it->second.shape != velocity_[pi].shape)
                throw std::runtime_error("optimizer state shape mismatch for " + params_[pi]->name);
            velocity_[pi] = it->second;
        }
    }

  private:
    std::vector<ParamPtr<T>> params_;
    std::vector<Tensor<T>> velocity_;
};

}  // namespace mmf
