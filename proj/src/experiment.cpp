#include "commin/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "commin/error.hpp"
#include "commin/guided_sampler.hpp"
#include "commin/metrics.hpp"

namespace commin::experiment {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt6(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

double parse_double(const std::string& s, std::size_t line) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw InvalidArgument("results line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

void write_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        out.flush();
        if (!out) throw Error("cannot write " + tmp);
    }
    fs::rename(tmp, path);
}

void append_line(const fs::path& path, const std::string& line) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    out << line << '\n';
}

}  // namespace

const std::vector<std::string>& ResultsTable::columns() {
    static const std::vector<std::string> cols{"method", "snr_db",     "rho", "image_id", "seed",
                                               "zeta",   "psnr_db", "perceptual", "mse", "config_hash"};
    return cols;
}

bool ResultsTable::contains(const std::string& method, double snr_db, const std::string& image_id,
                            std::uint64_t seed) const {
    return std::any_of(rows_.begin(), rows_.end(), [&](const ResultRow& r) {
        return r.method == method && r.snr_db == snr_db && r.image_id == image_id && r.seed == seed;
    });
}

void ResultsTable::add(const ResultRow& row) {
    if (row.method.empty() || row.image_id.empty()) throw InvalidArgument("result row needs a method and image id");
    for (const auto* s : {&row.method, &row.image_id, &row.config_hash}) {
        if (s->find_first_of(",\n\r") != std::string::npos)
            throw InvalidArgument("result field '" + *s + "' contains a separator");
    }
    if (contains(row.method, row.snr_db, row.image_id, row.seed))
        throw InvalidArgument("duplicate result row (" + row.method + ", " + fmt17(row.snr_db) + " dB, " +
                              row.image_id + ", seed " + std::to_string(row.seed) + ")");
    rows_.push_back(row);
}

bool ResultsTable::cell_complete(const std::string& method, double snr_db, const std::vector<std::string>& image_ids,
                                 std::uint64_t seed) const {
    return std::all_of(image_ids.begin(), image_ids.end(),
                       [&](const std::string& id) { return contains(method, snr_db, id, seed); });
}

std::string ResultsTable::to_csv() const {
    std::ostringstream out;
    const auto& cols = columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : rows_) {
        out << r.method << ',' << fmt17(r.snr_db) << ',' << fmt17(r.rho) << ',' << r.image_id << ',' << r.seed << ','
            << fmt17(r.zeta) << ',' << fmt17(r.psnr_db) << ',' << fmt17(r.perceptual) << ',' << fmt17(r.mse) << ','
            << r.config_hash << '\n';
    }
    return out.str();
}

ResultsTable ResultsTable::from_csv(const std::string& text) {
    ResultsTable t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (lineno == 1) {
            if (f != columns()) throw InvalidArgument("results file has an unexpected header");
            continue;
        }
        if (f.size() != columns().size())
            throw InvalidArgument("results line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(columns().size()) + " fields");
        ResultRow r;
        r.method = f[0];
        r.snr_db = parse_double(f[1], lineno);
        r.rho = parse_double(f[2], lineno);
        r.image_id = f[3];
        try {
            r.seed = std::stoull(f[4]);
        } catch (const std::logic_error&) {
            throw InvalidArgument("results line " + std::to_string(lineno) + ": bad seed");
        }
        r.zeta = parse_double(f[5], lineno);
        r.psnr_db = parse_double(f[6], lineno);
        r.perceptual = parse_double(f[7], lineno);
        r.mse = parse_double(f[8], lineno);
        r.config_hash = f[9];
        t.add(r);
    }
    return t;
}

ResultsTable ResultsTable::load(const fs::path& path) {
    if (!fs::exists(path)) return {};
    std::ifstream in(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_csv(text);
}

void ResultsTable::append_atomic(const std::vector<ResultRow>& rows, const fs::path& path) {
    auto next = *this;
    for (const auto& r : rows) next.add(r);
    write_atomic(path, next.to_csv());
    *this = std::move(next);
}

ResultsTable run_experiment(const ExperimentConfig& config, const EvaluateOptions& options) {
    config.validate();
    auto log = [&](const std::string& m) {
        if (options.log) options.log(m);
    };
    const auto paths = pipeline::paths_for(config);
    const auto results_path = options.results_path.value_or(paths.results());
    const auto runs_path = results_path.parent_path() / "runs.jsonl";
    const auto hash = config_hash(config);

    const auto test = pipeline::load_splits(config).test.head(config.eval.num_test_images);
    if (test.size() == 0) throw ConfigError("the test split is empty");

    auto jscc = pipeline::load_jscc(config);
    // Every setting-matched INN must exist before any sampling starts.
    std::vector<pipeline::LoadedInn> inns;
    for (double snr : config.eval.snr_grid) inns.push_back(pipeline::load_inn(config, {snr, config.rho(), jscc.id}));
    auto denoiser = pipeline::load_denoiser(config);
    auto extractor = pipeline::load_extractor(config);
    const auto schedule = config.schedule();
    const auto zetas = config.zeta_table();
    const auto mode = config.eval.full_gradient ? guided::GradientMode::Full : guided::GradientMode::StopMeasurement;

    auto table = ResultsTable::load(results_path);
    // Resume keys ignore the config, so rows from another config must not be mixed in.
    for (const auto& r : table.rows())
        if (r.config_hash != hash)
            throw ConfigError(results_path.string() + " holds rows from config " + r.config_hash + ", current is " +
                              hash + "; use another results path");
    const auto x_unit = to_unit_range(test.images);

    auto score = [&](const std::string& method, double snr, double zeta, const torch::Tensor& recon,
                     const std::vector<std::int64_t>& which) {
        const auto idx = torch::tensor(which, torch::kLong);
        const auto xs = x_unit.index_select(0, idx);
        const auto rs = to_unit_range(recon.index_select(0, idx));
        const auto mse = metrics::mse_per_image(xs, rs);
        const auto ps = metrics::psnr_per_image(xs, rs);
        const auto pd = metrics::perceptual_distance_batch(xs, rs, extractor.net);
        std::vector<ResultRow> rows;
        for (std::size_t i = 0; i < which.size(); ++i) {
            rows.push_back({method, snr, config.rho(), test.ids[static_cast<std::size_t>(which[i])], config.seed, zeta,
                            ps[i], pd[i], mse[i], hash});
        }
        return rows;
    };
    auto missing = [&](const std::string& method, double snr) {
        std::vector<std::int64_t> which;
        for (std::int64_t i = 0; i < test.size(); ++i)
            if (!table.contains(method, snr, test.ids[static_cast<std::size_t>(i)], config.seed)) which.push_back(i);
        return which;
    };
    auto record_run = [&](const std::string& method, double snr, double zeta, std::size_t n, const std::string& inn_id,
                          double seconds) {
        nlohmann::json j{{"method", method},       {"snr_db", snr},
                         {"rho", config.rho()},    {"zeta", zeta},
                         {"seed", config.seed},    {"images", n},
                         {"config_hash", hash},    {"jscc_id", jscc.id},
                         {"denoiser_id", denoiser.id}, {"extractor_id", extractor.id},
                         {"gradient", config.eval.full_gradient ? "full" : "stop-measurement"},
                         {"seconds", seconds}};
        if (!inn_id.empty()) j["inn_id"] = inn_id;
        append_line(runs_path, j.dump());
    };

    for (std::size_t s = 0; s < config.eval.snr_grid.size(); ++s) {
        const double snr = config.eval.snr_grid[s];
        const auto todo_jscc = missing("deepjscc", snr);
        const auto todo_commin = missing("commin", snr);
        if (todo_jscc.empty() && todo_commin.empty()) {
            log("SNR " + pipeline::snr_tag(snr) + " dB: complete, skipped");
            continue;
        }
        const channel::ChannelConfig ch{snr, config.avg_power, static_cast<std::size_t>(config.jscc.k)};
        std::vector<std::uint64_t> measure_seeds;
        for (const auto& id : test.ids) measure_seeds.push_back(pipeline::cell_seed(config.seed, "measure", snr, id));
        const auto y = jscc::degrade_batch(test.images, jscc.net, ch, measure_seeds);

        if (!todo_jscc.empty()) {
            const auto t0 = std::chrono::steady_clock::now();
            table.append_atomic(score("deepjscc", snr, 0.0, y, todo_jscc), results_path);
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
            record_run("deepjscc", snr, 0.0, todo_jscc.size(), "", dt.count());
            log("SNR " + pipeline::snr_tag(snr) + " dB: deepjscc " + std::to_string(todo_jscc.size()) + " images");
        }
        if (!todo_commin.empty()) {
            const auto t0 = std::chrono::steady_clock::now();
            const double zeta = zetas.select(snr) * config.eval.zeta_scale;
            guided::GuidanceConfig gc{zeta, mode, inn::DegradationSetting{snr, config.rho(), jscc.id},
                                      inns[s].setting};
            auto recon = torch::zeros_like(test.images);
            const auto bs = std::max<std::int64_t>(1, config.eval.batch_size);
            for (std::size_t b = 0; b < todo_commin.size(); b += static_cast<std::size_t>(bs)) {
                const auto e = std::min(todo_commin.size(), b + static_cast<std::size_t>(bs));
                std::vector<std::int64_t> chunk(todo_commin.begin() + static_cast<std::ptrdiff_t>(b),
                                                todo_commin.begin() + static_cast<std::ptrdiff_t>(e));
                std::vector<std::uint64_t> seeds;
                for (auto i : chunk)
                    seeds.push_back(
                        pipeline::cell_seed(config.seed, "sample", snr, test.ids[static_cast<std::size_t>(i)]));
                diffusion::NoiseSource noise(seeds);
                const auto idx = torch::tensor(chunk, torch::kLong);
                const auto out = guided::commin_sample(y.index_select(0, idx), denoiser.net, inns[s].net, schedule, gc,
                                                       noise);
                recon.index_copy_(0, idx, out.detach());
                log("SNR " + pipeline::snr_tag(snr) + " dB: commin sampled " + std::to_string(e) + "/" +
                    std::to_string(todo_commin.size()));
            }
            table.append_atomic(score("commin", snr, zeta, recon, todo_commin), results_path);
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
            record_run("commin", snr, zeta, todo_commin.size(), inns[s].id, dt.count());
        }
    }
    return table;
}

std::vector<SummaryRow> summarize(const ResultsTable& table) {
    struct Acc {
        double psnr = 0, perceptual = 0;
        std::int64_t n = 0;
    };
    std::map<std::pair<std::string, double>, Acc> acc;
    for (const auto& r : table.rows()) {
        auto& a = acc[{r.method, r.snr_db}];
        a.psnr += r.psnr_db;
        a.perceptual += r.perceptual;
        ++a.n;
    }
    std::vector<SummaryRow> out;
    for (const auto& [key, a] : acc)
        out.push_back({key.first, key.second, a.psnr / static_cast<double>(a.n),
                       a.perceptual / static_cast<double>(a.n), a.n});
    return out;
}

namespace {

// Minimal line chart: one polyline per method over SNR.
std::string line_chart(const std::vector<SummaryRow>& summary, bool psnr, const std::string& title,
                       const std::string& y_label) {
    constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 60;
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : summary) {
        const double v = psnr ? s.mean_psnr : s.mean_perceptual;
        if (!std::isfinite(v)) continue;
        series[s.method].emplace_back(s.snr_db, v);
        xmin = std::min(xmin, s.snr_db);
        xmax = std::max(xmax, s.snr_db);
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
    }
    if (series.empty()) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax - xmin < 1e-9) xmin -= 1, xmax += 1;
    const double pad = std::max(1e-9, (ymax - ymin) * 0.1);
    if (ymax - ymin < 1e-9) ymin -= 1, ymax += 1;
    ymin -= pad;
    ymax += pad;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
    auto num = [](double v, const char* f) {
        char buf[32];
        std::snprintf(buf, sizeof buf, f, v);
        return std::string(buf);
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
        << "</text>\n"
        << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 5.0, yv = ymin + (ymax - ymin) * i / 5.0;
        svg << "<text x=\"" << num(px(xv), "%.1f") << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
            << num(xv, "%.1f") << "</text>\n"
            << "<line x1=\"" << L << "\" y1=\"" << num(py(yv), "%.1f") << "\" x2=\"" << W - R << "\" y2=\""
            << num(py(yv), "%.1f") << "\" stroke=\"#ddd\"/>\n"
            << "<text x=\"" << L - 6 << "\" y=\"" << num(py(yv) + 4, "%.1f") << "\" text-anchor=\"end\">"
            << num(yv, psnr ? "%.2f" : "%.4f") << "</text>\n";
    }
    svg << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"" << H - 15
        << "\" text-anchor=\"middle\">channel SNR (dB)</text>\n"
        << "<text transform=\"translate(16," << (T + (H - T - B) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
        << y_label << "</text>\n";
    static const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    int k = 0;
    for (auto& [method, pts] : series) {
        std::sort(pts.begin(), pts.end());
        const char* colour = kColours[k % 5];
        svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : pts) svg << num(px(x), "%.1f") << ',' << num(py(y), "%.1f") << ' ';
        svg << "\"/>\n";
        for (const auto& [x, y] : pts)
            svg << "<circle cx=\"" << num(px(x), "%.1f") << "\" cy=\"" << num(py(y), "%.1f") << "\" r=\"3\" fill=\""
                << colour << "\"/>\n";
        const double ly = T + 20 + 20 * k;
        svg << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40 << "\" y2=\"" << ly
            << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\">" << method << "</text>\n";
        ++k;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace

void emit_report(const ResultsTable& table, const fs::path& out_dir) {
    if (table.empty()) throw InvalidArgument("emit_report: the results table is empty");
    const auto summary = summarize(table);
    std::ostringstream csv;
    csv << "method,snr_db,mean_psnr,mean_perceptual,n\n";
    for (const auto& s : summary)
        csv << s.method << ',' << fmt6(s.snr_db) << ',' << fmt6(s.mean_psnr) << ',' << fmt6(s.mean_perceptual) << ','
            << s.n << '\n';
    fs::create_directories(out_dir);
    write_atomic(out_dir / "summary.csv", csv.str());
    write_atomic(out_dir / "psnr_vs_snr.svg", line_chart(summary, true, "PSNR versus SNR (higher is better)", "PSNR (dB)"));
    write_atomic(out_dir / "perceptual_vs_snr.svg",
                 line_chart(summary, false, "Perceptual distance versus SNR (lower is better)", "perceptual distance"));
}

}  // namespace commin::experiment
