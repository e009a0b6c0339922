#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "commin/config.hpp"
#include "commin/dataset.hpp"
#include "commin/diffusion.hpp"
#include "commin/inn.hpp"
#include "commin/jscc.hpp"
#include "commin/metrics.hpp"
#include "commin/training.hpp"

// Training stages and the on-disk artifact layout under output_dir:
//
//   jscc.npz, denoiser.npz, extractor.npz
//   pairs/snr+1.00.npz   (x, y) training pairs for one degradation setting
//   inn/snr+1.00.npz     INN trained on the matching pair set
//   reports/             loss curves and training summaries
//   results/             results.csv, runs.jsonl
//   report/              summary.csv and plots
namespace commin::pipeline {

using LogFn = std::function<void(const std::string&)>;

struct Paths {
    std::filesystem::path root;

    std::filesystem::path jscc() const { return root / "jscc.npz"; }
    std::filesystem::path denoiser() const { return root / "denoiser.npz"; }
    std::filesystem::path extractor() const { return root / "extractor.npz"; }
    std::filesystem::path pairs(double snr_db) const;
    std::filesystem::path inn(double snr_db) const;
    std::filesystem::path reports() const { return root / "reports"; }
    std::filesystem::path results() const { return root / "results" / "results.csv"; }
    std::filesystem::path runs_log() const { return root / "results" / "runs.jsonl"; }
    std::filesystem::path report_dir() const { return root / "report"; }
};

Paths paths_for(const ExperimentConfig& config);

// "+1.00", "-5.00"
std::string snr_tag(double snr_db);

data::DatasetSplits load_splits(const ExperimentConfig& config);

TrainingReport train_jscc_stage(const ExperimentConfig& config, const LogFn& log = {});
// One pair archive per SNR: x = training images, y = their degraded versions.
void gen_pairs_stage(const ExperimentConfig& config, const std::vector<double>& snrs, const LogFn& log = {});
std::vector<TrainingReport> train_inn_stage(const ExperimentConfig& config, const std::vector<double>& snrs,
                                            const LogFn& log = {});
TrainingReport train_diffusion_stage(const ExperimentConfig& config, const LogFn& log = {});
TrainingReport train_perceptual_stage(const ExperimentConfig& config, const LogFn& log = {});

struct LoadedJscc {
    jscc::JsccNet net{nullptr};
    std::string id;  // archive content id
};
struct LoadedInn {
    inn::DegradationInn net{nullptr};
    inn::DegradationSetting setting;
    std::string id;
};
struct LoadedDenoiser {
    diffusion::Denoiser net{nullptr};
    std::string id;
};
struct LoadedExtractor {
    metrics::FeatureExtractor net{nullptr};
    std::string id;
};

LoadedJscc load_jscc(const ExperimentConfig& config);
// Throws MissingArtifact naming the setting when no INN exists for
// `snr_db`, and InvalidArgument when the archive belongs to another setting.
LoadedInn load_inn(const ExperimentConfig& config, const inn::DegradationSetting& setting);
LoadedDenoiser load_denoiser(const ExperimentConfig& config);
// perceptual.external_weights when set, else extractor.npz.
LoadedExtractor load_extractor(const ExperimentConfig& config);

// Reads back a pair archive; returns x, y and the recorded setting.
struct PairSet {
    torch::Tensor x, y;
    inn::DegradationSetting setting;
};
PairSet load_pairs(const ExperimentConfig& config, double snr_db);

// Seed of the degradation noise for one (purpose, snr, image) cell.
std::uint64_t cell_seed(std::uint64_t root, const std::string& purpose, double snr_db, const std::string& image_id);

}  // namespace commin::pipeline
