#include "commin/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "commin/error.hpp"
#include "commin/random.hpp"

namespace commin {

using nlohmann::json;

bool EvalSection::operator==(const EvalSection& o) const {
    if (zeta_table.size() != o.zeta_table.size()) return false;
    for (std::size_t i = 0; i < zeta_table.size(); ++i) {
        if (zeta_table[i].snr_db != o.zeta_table[i].snr_db || zeta_table[i].zeta != o.zeta_table[i].zeta)
            return false;
    }
    return snr_grid == o.snr_grid && num_test_images == o.num_test_images && batch_size == o.batch_size &&
           zeta_scale == o.zeta_scale && full_gradient == o.full_gradient;
}

namespace {

// Reads fields out of one JSON object and rejects anything it was not asked for.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }
    // Call once all known keys have been read.
    void done() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + where_ + "." + key + "'");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + where_ + "." + key + "': " + e.what());
        }
    }
    const json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }
    std::string path(const char* key) const { return where_ + "." + key; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

json optimizer_json(const OptimizerSection& o) {
    return {{"steps", o.steps}, {"batch_size", o.batch_size}, {"lr", o.lr}};
}

void read_optimizer(Fields& parent, const char* key, OptimizerSection& o) {
    if (const auto* j = parent.sub(key)) {
        Fields f(*j, parent.path(key));
        f.get("steps", o.steps);
        f.get("batch_size", o.batch_size);
        f.get("lr", o.lr);
        f.done();
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("invalid config: " + m); };
    if (image.height < 4 || image.width < 4 || image.channels < 1) fail("image shape too small");
    if (!(avg_power > 0.0)) fail("avg_power must be positive");
    if (!(dataset.train_fraction > 0.0 && dataset.val_fraction >= 0.0 &&
          dataset.train_fraction + dataset.val_fraction < 1.0))
        fail("dataset fractions must leave a non-empty test split");
    if (jscc.train_snr_lo_db > jscc.train_snr_hi_db) fail("jscc training SNR range is empty");
    for (const auto* o : {&jscc.optimizer, &inn.optimizer, &diffusion.optimizer, &perceptual.optimizer}) {
        if (o->steps < 0 || o->batch_size < 1 || !(o->lr > 0.0)) fail("optimizer settings out of range");
    }
    if (eval.snr_grid.empty()) fail("eval.snr_grid is empty");
    if (eval.num_test_images < 0 || eval.batch_size < 1) fail("eval sizes out of range");
    if (!(eval.zeta_scale >= 0.0)) fail("eval.zeta_scale must be >= 0");
    try {
        jscc_config().validate();
        inn_config().validate();
        denoiser_config().validate();
        (void)schedule();
        (void)zeta_table();
    } catch (const InvalidArgument& e) {
        fail(e.what());
    }
}

double ExperimentConfig::rho() const { return jscc::bcr(image.numel(), jscc.k); }

jscc::JsccConfig ExperimentConfig::jscc_config() const {
    return {image, jscc.k, jscc.base_width, jscc.stages, jscc.train_snr_lo_db, jscc.train_snr_hi_db, avg_power};
}

inn::InnConfig ExperimentConfig::inn_config() const { return {image, inn.levels, inn.pairs, inn.hidden}; }

diffusion::DenoiserConfig ExperimentConfig::denoiser_config() const { return {image, diffusion.base_width}; }

diffusion::NoiseSchedule ExperimentConfig::schedule() const {
    return diffusion::build_schedule(diffusion.steps, diffusion.beta_start, diffusion.beta_end);
}

metrics::ExtractorConfig ExperimentConfig::extractor_config() const { return {image, perceptual.base_width}; }

guided::ZetaTable ExperimentConfig::zeta_table() const { return guided::ZetaTable(eval.zeta_table); }

json to_json(const ExperimentConfig& c) {
    json zeta = json::array();
    for (const auto& e : c.eval.zeta_table) zeta.push_back({{"snr_db", e.snr_db}, {"zeta", e.zeta}});
    return {
        {"dataset",
         {{"path", c.dataset.path},
          {"split_seed", c.dataset.split_seed},
          {"train_fraction", c.dataset.train_fraction},
          {"val_fraction", c.dataset.val_fraction}}},
        {"image", {{"height", c.image.height}, {"width", c.image.width}, {"channels", c.image.channels}}},
        {"avg_power", c.avg_power},
        {"jscc",
         {{"k", c.jscc.k},
          {"base_width", c.jscc.base_width},
          {"stages", c.jscc.stages},
          {"train_snr_db", {c.jscc.train_snr_lo_db, c.jscc.train_snr_hi_db}},
          {"optimizer", optimizer_json(c.jscc.optimizer)}}},
        {"inn",
         {{"levels", c.inn.levels},
          {"pairs", c.inn.pairs},
          {"hidden", c.inn.hidden},
          {"optimizer", optimizer_json(c.inn.optimizer)}}},
        {"diffusion",
         {{"steps", c.diffusion.steps},
          {"beta_start", c.diffusion.beta_start},
          {"beta_end", c.diffusion.beta_end},
          {"base_width", c.diffusion.base_width},
          {"ema_decay", c.diffusion.ema_decay},
          {"optimizer", optimizer_json(c.diffusion.optimizer)}}},
        {"perceptual",
         {{"base_width", c.perceptual.base_width},
          {"external_weights", c.perceptual.external_weights},
          {"optimizer", optimizer_json(c.perceptual.optimizer)}}},
        {"eval",
         {{"snr_grid", c.eval.snr_grid},
          {"num_test_images", c.eval.num_test_images},
          {"batch_size", c.eval.batch_size},
          {"zeta_table", zeta},
          {"zeta_scale", c.eval.zeta_scale},
          {"full_gradient", c.eval.full_gradient}}},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
    };
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    {
        Fields root(j, "config");
        if (const auto* d = root.sub("dataset")) {
            Fields f(*d, "dataset");
            f.get("path", c.dataset.path);
            f.get("split_seed", c.dataset.split_seed);
            f.get("train_fraction", c.dataset.train_fraction);
            f.get("val_fraction", c.dataset.val_fraction);
            f.done();
        }
        if (const auto* d = root.sub("image")) {
            Fields f(*d, "image");
            f.get("height", c.image.height);
            f.get("width", c.image.width);
            f.get("channels", c.image.channels);
            f.done();
        }
        root.get("avg_power", c.avg_power);
        if (const auto* d = root.sub("jscc")) {
            Fields f(*d, "jscc");
            f.get("k", c.jscc.k);
            f.get("base_width", c.jscc.base_width);
            f.get("stages", c.jscc.stages);
            std::vector<double> range{c.jscc.train_snr_lo_db, c.jscc.train_snr_hi_db};
            f.get("train_snr_db", range);
            if (range.size() != 2) throw ConfigError("jscc.train_snr_db must be [lo, hi]");
            c.jscc.train_snr_lo_db = range[0];
            c.jscc.train_snr_hi_db = range[1];
            read_optimizer(f, "optimizer", c.jscc.optimizer);
            f.done();
        }
        if (const auto* d = root.sub("inn")) {
            Fields f(*d, "inn");
            f.get("levels", c.inn.levels);
            f.get("pairs", c.inn.pairs);
            f.get("hidden", c.inn.hidden);
            read_optimizer(f, "optimizer", c.inn.optimizer);
            f.done();
        }
        if (const auto* d = root.sub("diffusion")) {
            Fields f(*d, "diffusion");
            f.get("steps", c.diffusion.steps);
            f.get("beta_start", c.diffusion.beta_start);
            f.get("beta_end", c.diffusion.beta_end);
            f.get("base_width", c.diffusion.base_width);
            f.get("ema_decay", c.diffusion.ema_decay);
            read_optimizer(f, "optimizer", c.diffusion.optimizer);
            f.done();
        }
        if (const auto* d = root.sub("perceptual")) {
            Fields f(*d, "perceptual");
            f.get("base_width", c.perceptual.base_width);
            f.get("external_weights", c.perceptual.external_weights);
            read_optimizer(f, "optimizer", c.perceptual.optimizer);
            f.done();
        }
        if (const auto* d = root.sub("eval")) {
            Fields f(*d, "eval");
            f.get("snr_grid", c.eval.snr_grid);
            f.get("num_test_images", c.eval.num_test_images);
            f.get("batch_size", c.eval.batch_size);
            f.get("zeta_scale", c.eval.zeta_scale);
            f.get("full_gradient", c.eval.full_gradient);
            if (const auto* z = f.sub("zeta_table")) {
                if (!z->is_array()) throw ConfigError("eval.zeta_table must be an array");
                c.eval.zeta_table.clear();
                for (const auto& e : *z) {
                    guided::ZetaEntry entry;
                    Fields ef(e, "eval.zeta_table[]");
                    ef.get("snr_db", entry.snr_db);
                    ef.get("zeta", entry.zeta);
                    ef.done();
                    c.eval.zeta_table.push_back(entry);
                }
            }
            f.done();
        }
        root.get("seed", c.seed);
        root.get("output_dir", c.output_dir);
        root.done();
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    auto c = config_from_json(j);
    if (const char* root = std::getenv("COMMIN_DATASET_ROOT"); root && *root) c.dataset.path = root;
    return c;
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out << to_json(config).dump(2) << '\n';
    if (!out) throw Error("cannot write config " + path.string());
}

namespace {

nlohmann::json hashed_json(const ExperimentConfig& config) {
    // Locations are not part of what an experiment computes.
    auto j = to_json(config);
    j.erase("output_dir");
    j["dataset"].erase("path");
    return j;
}

std::string hex_digest(const nlohmann::json& j) {
    const auto text = j.dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
    return buf;
}

}  // namespace

std::string config_hash(const ExperimentConfig& config) { return hex_digest(hashed_json(config)); }

std::string training_config_hash(const ExperimentConfig& config) {
    auto j = hashed_json(config);
    j.erase("eval");
    return hex_digest(j);
}

}  // namespace commin
