#include "commin/pipeline.hpp"

#include <bit>
#include <cstdio>

#include "commin/checkpoint.hpp"
#include "commin/error.hpp"
#include "commin/random.hpp"

namespace commin::pipeline {

namespace fs = std::filesystem;
namespace ck = checkpoint;

namespace {

OptimizerSettings with_log(OptimizerSection section, const std::string& model, const LogFn& log) {
    auto s = section.settings();
    if (log) {
        s.log_every = std::max<std::int64_t>(1, section.steps / 20);
        s.progress = [log, model](std::int64_t step, double loss) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%s step %lld loss %.6g", model.c_str(), static_cast<long long>(step), loss);
            log(buf);
        };
    }
    return s;
}

void note(const LogFn& log, const std::string& m) {
    if (log) log(m);
}

void log_report(const LogFn& log, const TrainingReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: probe loss %.6g -> %.6g (ratio %.3f)", r.model.c_str(), r.initial_loss,
                  r.final_loss, r.ratio());
    note(log, buf);
}

void save_module(torch::nn::Module& m, const std::string& kind, const ExperimentConfig& config,
                 nlohmann::json meta, const fs::path& path) {
    auto rec = ck::record_from_module(m, kind);
    rec.manifest.config_hash = training_config_hash(config);
    rec.manifest.meta = std::move(meta);
    ck::save_checkpoint(std::move(rec), path);
}

ck::CheckpointRecord load_kind(const ExperimentConfig& config, const fs::path& path, const std::string& kind) {
    if (!fs::exists(path))
        throw MissingArtifact("missing " + kind + " checkpoint " + path.string() + " (run the training subcommand first)");
    return ck::load_checkpoint(path, {kind, training_config_hash(config)});
}

nlohmann::json setting_json(const inn::DegradationSetting& s) {
    return {{"snr_db", s.snr_db}, {"rho", s.rho}, {"jscc_id", s.jscc_id}};
}

inn::DegradationSetting setting_from(const nlohmann::json& j, const fs::path& path) {
    try {
        return {j.at("snr_db").get<double>(), j.at("rho").get<double>(), j.at("jscc_id").get<std::string>()};
    } catch (const nlohmann::json::exception&) {
        throw CorruptArchive(path.string() + ": manifest lacks the degradation setting");
    }
}

std::uint64_t snr_label(double snr_db) { return std::bit_cast<std::uint64_t>(snr_db); }

}  // namespace

fs::path Paths::pairs(double snr_db) const { return root / "pairs" / ("snr" + snr_tag(snr_db) + ".npz"); }
fs::path Paths::inn(double snr_db) const { return root / "inn" / ("snr" + snr_tag(snr_db) + ".npz"); }

Paths paths_for(const ExperimentConfig& config) { return {config.output_dir}; }

std::string snr_tag(double snr_db) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", snr_db);
    return buf;
}

std::uint64_t cell_seed(std::uint64_t root, const std::string& purpose, double snr_db, const std::string& image_id) {
    return derive_seed(root, {label(purpose), snr_label(snr_db), label(image_id)});
}

data::DatasetSplits load_splits(const ExperimentConfig& config) {
    return data::load_dataset(config.dataset.path, config.image, config.dataset.split_seed,
                              config.dataset.train_fraction, config.dataset.val_fraction);
}

TrainingReport train_jscc_stage(const ExperimentConfig& config, const LogFn& log) {
    const auto splits = load_splits(config);
    note(log, "train-jscc: " + std::to_string(splits.train.size()) + " training images, k=" +
                  std::to_string(config.jscc.k) + ", rho=" + std::to_string(config.rho()));
    auto result = jscc::train_jscc(splits.train.images, config.jscc_config(),
                                   with_log(config.jscc.optimizer, "jscc", log),
                                   derive_seed(config.seed, {label("train-jscc")}));
    const auto p = paths_for(config);
    save_module(*result.net, "jscc", config, {{"k", config.jscc.k}, {"rho", config.rho()}}, p.jscc());
    save_training_report(result.report, p.reports());
    log_report(log, result.report);
    return result.report;
}

void gen_pairs_stage(const ExperimentConfig& config, const std::vector<double>& snrs, const LogFn& log) {
    const auto splits = load_splits(config);
    auto jscc = load_jscc(config);
    const auto p = paths_for(config);
    for (double snr : snrs) {
        const channel::ChannelConfig ch{snr, config.avg_power, static_cast<std::size_t>(config.jscc.k)};
        std::vector<std::uint64_t> seeds;
        for (const auto& id : splits.train.ids) seeds.push_back(cell_seed(config.seed, "pairs", snr, id));
        auto y = jscc::degrade_batch(splits.train.images, jscc.net, ch, seeds);
        const inn::DegradationSetting setting{snr, config.rho(), jscc.id};
        ck::CheckpointRecord rec;
        rec.manifest.kind = "pairs";
        rec.manifest.config_hash = training_config_hash(config);
        rec.manifest.meta = setting_json(setting);
        rec.arrays = {{"x", splits.train.images.contiguous()}, {"y", y.contiguous()}};
        ck::save_checkpoint(std::move(rec), p.pairs(snr));
        note(log, "gen-pairs: " + setting.str() + " -> " + p.pairs(snr).string());
    }
}

PairSet load_pairs(const ExperimentConfig& config, double snr_db) {
    const auto path = paths_for(config).pairs(snr_db);
    if (!fs::exists(path))
        throw MissingArtifact("missing pair set for SNR " + snr_tag(snr_db) + " dB: " + path.string() +
                              " (run gen-pairs first)");
    auto rec = ck::load_checkpoint(path, {std::string("pairs"), training_config_hash(config)});
    return {rec.at("x"), rec.at("y"), setting_from(rec.manifest.meta, path)};
}

std::vector<TrainingReport> train_inn_stage(const ExperimentConfig& config, const std::vector<double>& snrs,
                                            const LogFn& log) {
    std::vector<TrainingReport> reports;
    const auto p = paths_for(config);
    for (double snr : snrs) {
        auto pairs = load_pairs(config, snr);
        std::vector<inn::DegradationSetting> settings(static_cast<std::size_t>(pairs.x.size(0)), pairs.setting);
        auto result = inn::train_inn(pairs.x, pairs.y, settings, config.inn_config(),
                                     with_log(config.inn.optimizer, "inn" + snr_tag(snr), log),
                                     derive_seed(config.seed, {label("train-inn"), snr_label(snr)}));
        result.report.model = "inn_snr" + snr_tag(snr);
        save_module(*result.inn, "inn", config, setting_json(pairs.setting), p.inn(snr));
        save_training_report(result.report, p.reports());
        log_report(log, result.report);
        reports.push_back(result.report);
    }
    return reports;
}

TrainingReport train_diffusion_stage(const ExperimentConfig& config, const LogFn& log) {
    const auto splits = load_splits(config);
    auto result = diffusion::train_denoiser(splits.train.images, config.schedule(), config.denoiser_config(),
                                            with_log(config.diffusion.optimizer, "denoiser", log),
                                            derive_seed(config.seed, {label("train-diffusion")}),
                                            config.diffusion.ema_decay);
    const auto p = paths_for(config);
    save_module(*result.net, "denoiser", config, {{"steps", config.diffusion.steps}}, p.denoiser());
    save_training_report(result.report, p.reports());
    log_report(log, result.report);
    return result.report;
}

TrainingReport train_perceptual_stage(const ExperimentConfig& config, const LogFn& log) {
    const auto splits = load_splits(config);
    auto result = metrics::train_extractor(splits.train.images, config.extractor_config(),
                                           with_log(config.perceptual.optimizer, "extractor", log),
                                           derive_seed(config.seed, {label("train-perceptual")}));
    const auto p = paths_for(config);
    save_module(*result.net, "extractor", config, nlohmann::json::object(), p.extractor());
    save_training_report(result.report, p.reports());
    log_report(log, result.report);
    return result.report;
}

LoadedJscc load_jscc(const ExperimentConfig& config) {
    auto rec = load_kind(config, paths_for(config).jscc(), "jscc");
    LoadedJscc out{jscc::JsccNet(config.jscc_config()), rec.manifest.content_id};
    ck::load_into_module(rec, *out.net);
    out.net->eval();
    return out;
}

LoadedInn load_inn(const ExperimentConfig& config, const inn::DegradationSetting& setting) {
    const auto path = paths_for(config).inn(setting.snr_db);
    if (!fs::exists(path))
        throw MissingArtifact("no INN checkpoint for degradation setting " + setting.str() + " (expected " +
                              path.string() + "; run gen-pairs and train-inn for this SNR)");
    auto rec = ck::load_checkpoint(path, {std::string("inn"), training_config_hash(config)});
    LoadedInn out{inn::DegradationInn(config.inn_config()), setting_from(rec.manifest.meta, path),
                  rec.manifest.content_id};
    if (!(out.setting == setting))
        throw InvalidArgument("INN checkpoint " + path.string() + " was trained for " + out.setting.str() +
                              ", measurement setting is " + setting.str());
    ck::load_into_module(rec, *out.net);
    out.net->eval();
    return out;
}

LoadedDenoiser load_denoiser(const ExperimentConfig& config) {
    auto rec = load_kind(config, paths_for(config).denoiser(), "denoiser");
    LoadedDenoiser out{diffusion::Denoiser(config.denoiser_config()), rec.manifest.content_id};
    ck::load_into_module(rec, *out.net);
    out.net->eval();
    return out;
}

LoadedExtractor load_extractor(const ExperimentConfig& config) {
    const fs::path path = config.perceptual.external_weights.empty() ? paths_for(config).extractor()
                                                                      : fs::path(config.perceptual.external_weights);
    auto rec = load_kind(config, path, "extractor");
    LoadedExtractor out{metrics::FeatureExtractor(config.extractor_config()), rec.manifest.content_id};
    ck::load_into_module(rec, *out.net);
    out.net->eval();
    return out;
}

}  // namespace commin::pipeline
