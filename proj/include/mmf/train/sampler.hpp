#pragma once

#include "mmf/io/manifest.hpp"
#include "mmf/train/config.hpp"

namespace mmf {

// Balanced multi-dataset epochs: every epoch draws exactly `quota` records
// from each source tag (default: the smallest source's size), then shuffles
// the union. Deterministic given (seed, epoch).
class EpochSampler {
  public:
    EpochSampler(const DatasetManifest& manifest, long quota, bool with_replacement,
                 std::uint64_t seed)
        : with_replacement_(with_replacement), seed_(seed) {
        for (std::size_t i = 0; i < manifest.records.size(); ++i)
            by_source_[manifest.records[i].source].push_back(i);
        if (by_source_.empty()) throw std::invalid_argument("epoch_sample: empty manifest");
        std::size_t smallest = SIZE_MAX;
        for (const auto& [tag, idx] : by_source_) smallest = std::min(smallest, idx.size());
        quota_ = quota > 0 ? quota : long(smallest);
        if (!with_replacement_)
            for (const auto& [tag, idx] : by_source_)
                if (long(idx.size()) < quota_)
                    throw std::invalid_argument(
                        "epoch_sample: quota " + std::to_string(quota_) + " exceeds source '" + tag +
                        "' (" + std::to_string(idx.size()) + " records); enable replacement");
    }

    long quota() const { return quota_; }
    long epoch_size() const { return quota_ * long(by_source_.size()); }

    // record indices into the manifest for one epoch
    std::vector<std::size_t> epoch(long epoch_index) const {
        std::vector<std::size_t> out;
        int source_i = 0;
        for (const auto& [tag, idx] : by_source_) {
            Rng rng(derive_seed(seed_, 0x5A3Cu, std::uint64_t(epoch_index), std::uint64_t(source_i)));
            if (with_replacement_ && long(idx.size()) < quota_) {
                for (long k = 0; k < quota_; ++k)
                    out.push_back(idx[std::size_t(rng.randint(0, long(idx.size()) - 1))]);
            } else {
                std::vector<std::size_t> pool = idx;
                rng.shuffle(pool.begin(), pool.end());
                out.insert(out.end(), pool.begin(), pool.begin() + quota_);
            }
            ++source_i;
        }
        Rng rng(derive_seed(seed_, 0x90E1u, std::uint64_t(epoch_index)));
        rng.shuffle(out.begin(), out.end());
        return out;
    }

  private:
    std::map<std::string, std::vector<std::size_t>> by_source_;
    bool with_replacement_ = false;
    long quota_ = 0;
    std::uint64_t seed_ = 0;
};

}  // namespace mmf
