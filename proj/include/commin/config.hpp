#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "commin/diffusion.hpp"
#include "commin/guided_sampler.hpp"
#include "commin/inn.hpp"
#include "commin/jscc.hpp"
#include "commin/metrics.hpp"
#include "commin/tensor_utils.hpp"
#include "commin/training.hpp"

namespace commin {

struct OptimizerSection {
    std::int64_t steps = 1000;
    std::int64_t batch_size = 16;
    double lr = 1e-3;

    OptimizerSettings settings() const { return {steps, batch_size, lr, 0, {}}; }
    bool operator==(const OptimizerSection&) const = default;
};

struct DatasetSection {
    std::string path = "data/synthetic";
    std::uint64_t split_seed = 7;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    bool operator==(const DatasetSection&) const = default;
};

struct JsccSection {
    std::int64_t k = 4;
    std::int64_t base_width = 32;
    std::int64_t stages = 3;
    double train_snr_lo_db = -5.0;
    double train_snr_hi_db = 5.0;
    OptimizerSection optimizer{2000, 32, 1e-3};
    bool operator==(const JsccSection&) const = default;
};

struct InnSection {
    std::int64_t levels = 1;
    std::int64_t pairs = 2;
    std::int64_t hidden = 32;
    OptimizerSection optimizer{2000, 16, 1e-3};
    bool operator==(const InnSection&) const = default;
};

struct DiffusionSection {
    std::int64_t steps = 1000;  // T
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::int64_t base_width = 32;
    double ema_decay = 0.999;
    OptimizerSection optimizer{5000, 32, 2e-4};
    bool operator==(const DiffusionSection&) const = default;
};

struct PerceptualSection {
    std::int64_t base_width = 16;
    OptimizerSection optimizer{1500, 32, 1e-3};
    std::string external_weights;  // optional archive overriding the trained extractor
    bool operator==(const PerceptualSection&) const = default;
};

struct EvalSection {
    std::vector<double> snr_grid{-5, -3, -1, 1, 3, 5};
    std::int64_t num_test_images = 50;  // 0 = whole test split
    std::int64_t batch_size = 50;
    std::vector<guided::ZetaEntry> zeta_table = guided::ZetaTable().entries();
    // Multiplies the table's zeta; 1 keeps the raw squared-norm convention.
    double zeta_scale = 1.0;
    bool full_gradient = true;
    bool operator==(const EvalSection& o) const;
};

struct ExperimentConfig {
    DatasetSection dataset;
    ImageShape image{32, 32, 3};
    double avg_power = 1.0;
    JsccSection jscc;
    InnSection inn;
    DiffusionSection diffusion;
    PerceptualSection perceptual;
    EvalSection eval;
    std::uint64_t seed = 1234;
    std::string output_dir = "runs/default";

    bool operator==(const ExperimentConfig&) const = default;

    void validate() const;  // throws ConfigError
    double rho() const;

    jscc::JsccConfig jscc_config() const;
    inn::InnConfig inn_config() const;
    diffusion::DenoiserConfig denoiser_config() const;
    diffusion::NoiseSchedule schedule() const;
    metrics::ExtractorConfig extractor_config() const;
    guided::ZetaTable zeta_table() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
// Strict: unknown keys at any level raise ConfigError. Missing keys keep defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);

// Reads a config file; COMMIN_DATASET_ROOT, when set, replaces dataset.path.
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

// 16 hex digits identifying the config content.
std::string config_hash(const ExperimentConfig& config);
// Same, ignoring the eval section. Checkpoints carry this one, so changing
// evaluation settings does not flag trained models as stale.
std::string training_config_hash(const ExperimentConfig& config);

}  // namespace commin
