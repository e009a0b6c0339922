// commin: train the DeepJSCC link, the per-SNR INNs and the diffusion prior,
// then evaluate DeepJSCC against guided sampling over an SNR grid.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "commin/config.hpp"
#include "commin/error.hpp"
#include "commin/experiment.hpp"
#include "commin/pipeline.hpp"
#include "commin/synthetic.hpp"

namespace {

using namespace commin;

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool quiet = false;
};

ExperimentConfig resolve(const GlobalOptions& g) {
    ExperimentConfig c;
    if (!g.config_path.empty()) c = load_config(g.config_path);
    if (g.seed) c.seed = *g.seed;
    if (!g.out.empty()) c.output_dir = g.out;
    c.validate();
    return c;
}

pipeline::LogFn logger(const GlobalOptions& g) {
    if (g.quiet) return {};
    return [](const std::string& m) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char ts[16];
        std::strftime(ts, sizeof ts, "%H:%M:%S", std::localtime(&now));
        std::cerr << '[' << ts << "] " << m << std::endl;
    };
}

std::vector<double> snrs_or_grid(const std::vector<double>& given, const ExperimentConfig& c) {
    return given.empty() ? c.eval.snr_grid : given;
}

// Keeps a copy of the effective config next to the artifacts it produced.
void stamp_config(const ExperimentConfig& c) {
    std::filesystem::create_directories(c.output_dir);
    save_config(c, std::filesystem::path(c.output_dir) / "config.json");
}

int run(int argc, char** argv) {
    CLI::App app{"DeepJSCC + INN-guided diffusion experiments"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    GlobalOptions g;
    app.add_option("--config", g.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "override the run seed");
    app.add_option("--out", g.out, "override the output directory");
    app.add_flag("-q,--quiet", g.quiet, "no progress output");

    std::int64_t synth_count = 500;
    std::string synth_dir;
    auto* synth = app.add_subcommand("synth-data", "write a procedural face-like dataset to dataset.path");
    synth->add_option("--count", synth_count, "number of images")->check(CLI::PositiveNumber);
    synth->add_option("--dir", synth_dir, "target directory (default: dataset.path)");

    auto* train_jscc = app.add_subcommand("train-jscc", "train the DeepJSCC encoder/decoder");

    std::vector<double> pair_snrs;
    auto* gen_pairs = app.add_subcommand("gen-pairs", "build (x, y) INN training pairs per SNR");
    gen_pairs->add_option("--snr", pair_snrs, "SNRs in dB (default: eval grid)");

    std::vector<double> inn_snrs;
    auto* train_inn = app.add_subcommand("train-inn", "train one INN per SNR");
    train_inn->add_option("--snr", inn_snrs, "SNRs in dB (default: eval grid)");

    auto* train_diffusion = app.add_subcommand("train-diffusion", "train the DDPM noise predictor");
    auto* train_perceptual = app.add_subcommand("train-perceptual", "train the perceptual-distance feature extractor");

    std::string eval_results;
    auto* evaluate = app.add_subcommand("evaluate", "run the SNR sweep and append to the results table");
    evaluate->add_option("--results", eval_results, "results CSV (default: <out>/results/results.csv)");

    std::string report_results, report_dir;
    auto* report = app.add_subcommand("report", "summary CSV and PSNR / perceptual plots");
    report->add_option("--results", report_results, "results CSV (default: <out>/results/results.csv)");
    report->add_option("--dir", report_dir, "output directory (default: <out>/report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const auto config = resolve(g);
    const auto log = logger(g);
    const auto paths = pipeline::paths_for(config);

    if (*synth) {
        const auto dir = synth_dir.empty() ? config.dataset.path : synth_dir;
        synthetic::write_faces(dir, config.image, config.seed, synth_count);
        if (log) log("wrote " + std::to_string(synth_count) + " images to " + dir);
    } else if (*train_jscc) {
        stamp_config(config);
        pipeline::train_jscc_stage(config, log);
    } else if (*gen_pairs) {
        pipeline::gen_pairs_stage(config, snrs_or_grid(pair_snrs, config), log);
    } else if (*train_inn) {
        pipeline::train_inn_stage(config, snrs_or_grid(inn_snrs, config), log);
    } else if (*train_diffusion) {
        stamp_config(config);
        pipeline::train_diffusion_stage(config, log);
    } else if (*train_perceptual) {
        pipeline::train_perceptual_stage(config, log);
    } else if (*evaluate) {
        experiment::EvaluateOptions opt;
        if (!eval_results.empty()) opt.results_path = eval_results;
        opt.log = log;
        const auto table = experiment::run_experiment(config, opt);
        if (log) log("results: " + std::to_string(table.size()) + " rows");
    } else if (*report) {
        const auto table = experiment::ResultsTable::load(report_results.empty() ? paths.results()
                                                                                 : std::filesystem::path(report_results));
        const auto dir = report_dir.empty() ? paths.report_dir() : std::filesystem::path(report_dir);
        experiment::emit_report(table, dir);
        for (const auto& s : experiment::summarize(table))
            std::printf("%-9s %+6.2f dB  psnr %8.4f  perceptual %.6f  n=%lld\n", s.method.c_str(), s.snr_db,
                        s.mean_psnr, s.mean_perceptual, static_cast<long long>(s.n));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const commin::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const commin::MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
