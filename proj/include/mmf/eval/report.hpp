#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "mmf/eval/metrics.hpp"
#include "mmf/model/predict.hpp"

namespace mmf {

struct PerImageRow {
    std::string image;
    std::string source;
    int label = 0;
    double score = 0.0;
    double f1 = std::nan("");  // localization rows only
};

struct DatasetMetrics {
    std::string name;
    double pixel_f1 = std::nan("");
    double auc = std::nan("");
    double bacc = std::nan("");
    int n_images = 0;
    int n_localization = 0;
};

// Evaluation output. Localization F1 is averaged over manipulated images that
// carry masks; detection metrics run over all images of a dataset. The AVG row
// is the arithmetic mean of the per-dataset values shown. The timestamp lives
// in its own field so reports from identical runs are otherwise byte-identical.
struct MetricsReport {
    std::string kind = "eval";
    std::string config_hash, checkpoint_id, codecs;
    std::uint64_t seed = 0;
    std::vector<DatasetMetrics> per_dataset;
    DatasetMetrics average;
    std::vector<PerImageRow> rows;

    void finalize_average() {
        average = DatasetMetrics{};
        average.name = "AVG";
        int nf = 0, na = 0, nb = 0;
        double sf = 0, sa = 0, sb = 0;
        for (const auto& d : per_dataset) {
            if (!std::isnan(d.pixel_f1)) { sf += d.pixel_f1; ++nf; }
            if (!std::isnan(d.auc)) { sa += d.auc; ++na; }
            if (!std::isnan(d.bacc)) { sb += d.bacc; ++nb; }
            average.n_images += d.n_images;
            average.n_localization += d.n_localization;
        }
        if (nf) average.pixel_f1 = sf / nf;
        if (na) average.auc = sa / na;
        if (nb) average.bacc = sb / nb;
    }

    nlohmann::ordered_json to_json(bool with_timestamp = true) const {
        nlohmann::ordered_json j;
        j["kind"] = kind;
        j["config_hash"] = config_hash;
        j["checkpoint_id"] = checkpoint_id;
        j["seed"] = seed;
        j["codecs"] = codecs;
        auto dataset_json = [](const DatasetMetrics& d) {
            nlohmann::ordered_json o;
            o["name"] = d.name;
            o["pixel_f1"] = std::isnan(d.pixel_f1) ? nlohmann::ordered_json(nullptr)
                                                   : nlohmann::ordered_json(d.pixel_f1);
            o["auc"] = std::isnan(d.auc) ? nlohmann::ordered_json(nullptr)
                                         : nlohmann::ordered_json(d.auc);
            o["bacc"] = std::isnan(d.bacc) ? nlohmann::ordered_json(nullptr)
                                           : nlohmann::ordered_json(d.bacc);
            o["n_images"] = d.n_images;
            o["n_localization"] = d.n_localization;
            return o;
        };
        j["datasets"] = nlohmann::ordered_json::array();
        for (const auto& d : per_dataset) j["datasets"].push_back(dataset_json(d));
        j["average"] = dataset_json(average);
        j["images"] = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json o;
            o["image"] = r.image;
            o["source"] = r.source;
            o["label"] = r.label;
            o["score"] = r.score;
            if (!std::isnan(r.f1)) o["f1"] = r.f1;
            j["images"].push_back(o);
        }
        if (with_timestamp)
            j["generated_at_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                       std::chrono::system_clock::now().time_since_epoch())
                                       .count();
        return j;
    }

    // JSON + CSV under out_dir with the given base name
    void write(const std::string& out_dir, const std::string& base) const {
        std::filesystem::create_directories(out_dir);
        {
            std::ofstream os(out_dir + "/" + base + ".json");
            os << to_json().dump(2) << "\n";
        }
        {
            std::ofstream os(out_dir + "/" + base + ".csv");
            os << "dataset,pixel_f1,auc,bacc,n_images,n_localization\n";
            auto row = [&os](const DatasetMetrics& d) {
                os << d.name << ",";
                if (!std::isnan(d.pixel_f1)) os << std::setprecision(12) << d.pixel_f1;
                os << ",";
                if (!std::isnan(d.auc)) os << std::setprecision(12) << d.auc;
                os << ",";
                if (!std::isnan(d.bacc)) os << std::setprecision(12) << d.bacc;
                os << "," << d.n_images << "," << d.n_localization << "\n";
            };
            for (const auto& d : per_dataset) row(d);
            row(average);
        }
    }
};

// Full evaluation of a model over a manifest, one DatasetMetrics per source
// tag. Images are processed in manifest order; the reduction is deterministic.
template <typename T>
MetricsReport evaluate(const Predictor<T>& pred, const DatasetManifest& manifest,
                       double threshold = 0.5) {
    MetricsReport rep;
    std::map<std::string, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
        by_source[manifest.records[i].source].push_back(i);

    for (const auto& [tag, indices] : by_source) {
        DatasetMetrics dm;
        dm.name = tag;
        dm.n_images = int(indices.size());
        std::vector<double> scores;
        std::vector<int> labels;
        double f1_sum = 0;
        int f1_n = 0;
        for (std::size_t idx : indices) {
            const ManifestRecord& r = manifest.records[idx];
            PredictionBundle<T> b = pred.predict_path(manifest.resolve(r.image), r.image);
            PerImageRow row;
            row.image = r.image;
            row.source = tag;
            row.label = r.manipulated ? 1 : 0;
            row.score = b.score;
            scores.push_back(b.score);
            labels.push_back(row.label);
            if (r.manipulated && !r.mask.empty()) {
                Tensor<T> gt = load_mask<T>(manifest.resolve(r.mask), r.mask_white);
                row.f1 = pixel_f1(b.loc, gt, threshold);
                f1_sum += row.f1;
                ++f1_n;
            }
            rep.rows.push_back(std::move(row));
        }
        if (f1_n) {
            dm.pixel_f1 = f1_sum / f1_n;
            dm.n_localization = f1_n;
        }
        bool both = false, saw1 = false, saw0 = false;
        for (int y : labels) (y ? saw1 : saw0) = true;
        both = saw1 && saw0;
        if (both) {
            dm.auc = auc(scores, labels);
            dm.bacc = balanced_accuracy(scores, labels, threshold);
        }
        rep.per_dataset.push_back(dm);
    }
    rep.finalize_average();
    rep.codecs = codec_versions();
    return rep;
}

}  // namespace mmf
