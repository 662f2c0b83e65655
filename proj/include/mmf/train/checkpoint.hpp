#pragma once

#include "mmf/io/binfile.hpp"
#include "mmf/model/network.hpp"
#include "mmf/train/config.hpp"

namespace mmf {

// Checkpoint layout: "MMFC" u32 version, u32 json length, JSON header (phase,
// step, epoch, rng state, frozen parameter names, full run-config snapshot),
// then two tensor maps: parameters+buffers and optimizer momentum. Values are
// serialized in float64, so reloading a float32 model reproduces bit-identical
// subsequent training steps.
template <typename T>
struct LoadedCheckpoint {
    RunConfig config;
    std::string phase = "phase1";
    long step = 0;
    long epoch = 0;
    Rng rng;
    std::unique_ptr<Network<T>> network;
    std::map<std::string, Tensor<T>> optimizer_state;
};

template <typename T>
void save_checkpoint(const std::string& path, const RunConfig& cfg, const Network<T>& net,
                     const std::map<std::string, Tensor<T>>& optimizer_state,
                     const std::string& phase, long step, long epoch, const Rng& rng) {
    nlohmann::ordered_json header;
    header["format_version"] = 1;
    header["phase"] = phase;
    header["step"] = step;
    header["epoch"] = epoch;
    header["rng_state"] = rng.state;
    header["rng_have_gauss"] = rng.have_gauss;
    header["rng_gauss_cache"] = rng.gauss_cache;
    header["config"] = to_json(cfg);
    std::vector<std::string> frozen;
    for (const auto& p : net.params().all())
        if (p->frozen) frozen.push_back(p->name);
    header["frozen"] = frozen;
    const std::string hj = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write("MMFC", 4);
    detail::write_pod<std::uint32_t>(os, 1);
    detail::write_pod<std::uint32_t>(os, std::uint32_t(hj.size()));
    os.write(hj.data(), std::streamsize(hj.size()));

    std::map<std::string, Tensor<T>> tensors;
    for (const auto& p : net.params().all()) tensors[p->name] = p->value;
    write_tensor_map(os, tensors);
    write_tensor_map(os, optimizer_state);
    if (!os) throw std::runtime_error("checkpoint: short write to " + path);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MMFC", 4) != 0)
        throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
    auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != 1) throw std::runtime_error("checkpoint: unsupported format version");
    auto len = detail::read_pod<std::uint32_t>(is, "header length");
    std::string hj(len, '\0');
    if (!is.read(hj.data(), len)) throw std::runtime_error("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(hj);

    LoadedCheckpoint<T> out;
    out.config = run_config_from_json(header.at("config"));
    out.phase = header.at("phase").get<std::string>();
    out.step = header.at("step").get<long>();
    out.epoch = header.at("epoch").get<long>();
    out.rng.state = header.at("rng_state").get<std::uint64_t>();
    out.rng.have_gauss = header.value("rng_have_gauss", false);
    out.rng.gauss_cache = header.value("rng_gauss_cache", 0.0);

    auto tensors = read_tensor_map<T>(is, "checkpoint " + path);
    out.optimizer_state = read_tensor_map<T>(is, "checkpoint " + path);

    out.network = std::make_unique<Network<T>>(out.config.model, out.config.train.seed);
    for (const auto& p : out.network->params().all()) {
        auto it = tensors.find(p->name);
        if (it == tensors.end())
            throw std::runtime_error("checkpoint: missing tensor " + p->name + " in " + path);
        if (it->second.shape != p->value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + p->name + ": " +
                                     it->second.shape.str() + " vs " + p->value.shape.str());
        p->value = it->second;
    }
    for (const auto& name : header.at("frozen").get<std::vector<std::string>>()) {
        auto p = out.network->params().find(name);
        if (p) p->frozen = true;
    }
    return out;
}

// FNV-1a over parameter bytes; identifies the weights in reports
template <typename T>
std::string checkpoint_id(const Network<T>& net) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ull;
        }
    };
    for (const auto& p : net.params().all())
        mix(p->value.data(), p->value.size() * sizeof(T));
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// hash of a parameter subset, for freeze verification
template <typename T>
std::string params_hash(const Network<T>& net, bool (*group)(const std::string&)) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& p : net.params().all()) {
        if (!group(p->name)) continue;
        const auto* b = reinterpret_cast<const unsigned char*>(p->value.data());
        for (std::size_t i = 0; i < p->value.size() * sizeof(T); ++i) {
            h ^= b[i];
            h *= 0x100000001B3ull;
        }
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace mmf
