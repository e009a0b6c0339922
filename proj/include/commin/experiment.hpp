#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "commin/config.hpp"
#include "commin/pipeline.hpp"

namespace commin::experiment {

struct ResultRow {
    std::string method;  // "deepjscc" or "commin"
    double snr_db = 0.0;
    double rho = 0.0;
    std::string image_id;
    std::uint64_t seed = 0;
    double zeta = 0.0;  // 0 for deepjscc rows
    double psnr_db = 0.0;
    double perceptual = 0.0;
    double mse = 0.0;
    std::string config_hash;
};

// CSV-backed metric rows. Doubles are written with 17 significant digits so
// a reload is exact.
class ResultsTable {
public:
    static const std::vector<std::string>& columns();

    const std::vector<ResultRow>& rows() const noexcept { return rows_; }
    bool empty() const noexcept { return rows_.empty(); }
    std::size_t size() const noexcept { return rows_.size(); }

    // Throws InvalidArgument if a row with the same (method, snr, image, seed) exists.
    void add(const ResultRow& row);
    bool contains(const std::string& method, double snr_db, const std::string& image_id, std::uint64_t seed) const;
    // True when every id in `image_ids` has a row for (method, snr, seed).
    bool cell_complete(const std::string& method, double snr_db, const std::vector<std::string>& image_ids,
                       std::uint64_t seed) const;

    std::string to_csv() const;
    static ResultsTable from_csv(const std::string& text);
    // Missing file -> empty table.
    static ResultsTable load(const std::filesystem::path& path);

    // Adds `rows` and rewrites `path` through a temp file + rename, so the
    // file on disk always holds whole rows.
    void append_atomic(const std::vector<ResultRow>& rows, const std::filesystem::path& path);

private:
    std::vector<ResultRow> rows_;
};

struct EvaluateOptions {
    std::optional<std::filesystem::path> results_path;  // default: <output_dir>/results/results.csv
    pipeline::LogFn log;
};

// For each SNR in eval.snr_grid and each test image: degrade through the
// JSCC link, score the DeepJSCC reconstruction, run guided sampling with the
// table zeta and the setting-matched INN, score that. One (method, SNR) cell
// is appended at a time; rows already in the results file are skipped. A
// results file holding rows from a different config hash is a ConfigError.
ResultsTable run_experiment(const ExperimentConfig& config, const EvaluateOptions& options = {});

struct SummaryRow {
    std::string method;
    double snr_db = 0.0;
    double mean_psnr = 0.0;
    double mean_perceptual = 0.0;
    std::int64_t n = 0;
};

// Per-(method, SNR) means, ordered by method then SNR.
std::vector<SummaryRow> summarize(const ResultsTable& table);

// Writes summary.csv, psnr_vs_snr.svg and perceptual_vs_snr.svg into
// out_dir. Throws InvalidArgument for an empty table.
void emit_report(const ResultsTable& table, const std::filesystem::path& out_dir);

}  // namespace commin::experiment
