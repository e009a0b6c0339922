#include "helpers.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "commin/error.hpp"
#include "commin/experiment.hpp"
#include "commin/pipeline.hpp"
#include "commin/synthetic.hpp"

using namespace commin;
using experiment::ResultRow;
using experiment::ResultsTable;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

ResultRow row(const std::string& method, double snr, const std::string& id, double psnr) {
    return {method, snr, 4.0 / 3072.0, id, 42, method == "commin" ? 0.3 : 0.0, psnr, 0.125, 1e-3 / 3.0, "abcdef0123456789"};
}

ExperimentConfig tiny(const std::filesystem::path& root) {
    ExperimentConfig c;
    c.dataset.path = (root / "data").string();
    c.image = {8, 8, 3};
    c.jscc.k = 2;
    c.jscc.base_width = 8;
    c.jscc.stages = 2;
    c.jscc.optimizer = {4, 16, 1e-3};
    c.inn = {1, 1, 8, {4, 8, 1e-3}};
    c.diffusion = {5, 1e-4, 0.02, 8, 0.9, {4, 16, 1e-3}};
    c.perceptual = {4, {4, 16, 1e-3}, ""};
    c.eval.num_test_images = 50;
    c.eval.batch_size = 32;
    c.seed = 99;
    c.output_dir = (root / "out").string();
    return c;
}

using Key = std::tuple<std::string, double, std::string>;

std::map<Key, ResultRow> by_key(const ResultsTable& t) {
    std::map<Key, ResultRow> m;
    for (const auto& r : t.rows()) m.emplace(Key{r.method, r.snr_db, r.image_id}, r);
    return m;
}

}  // namespace

TEST_CASE("results table csv") {
    ResultsTable t;
    t.add(row("deepjscc", -5, "face_00001", 21.5));
    t.add(row("commin", -5, "face_00001", std::numeric_limits<double>::infinity()));
    t.add(row("commin", 1.0 / 3.0, "face_00002", 0.1 + 0.2));
    CHECK_THROWS_AS(t.add(row("commin", -5, "face_00001", 1.0)), InvalidArgument);
    CHECK_THROWS_AS(t.add(row("commin", 0, "bad,id", 1.0)), InvalidArgument);

    const auto text = t.to_csv();
    CHECK(text.rfind("method,snr_db,rho,image_id,seed,zeta,psnr_db,perceptual,mse,config_hash\n", 0) == 0);
    const auto back = ResultsTable::from_csv(text);
    REQUIRE(back.size() == 3);
    CHECK(back.to_csv() == text);
    CHECK(back.rows()[2].psnr_db == 0.1 + 0.2);
    CHECK(back.rows()[2].snr_db == 1.0 / 3.0);
    CHECK(back.rows()[1].psnr_db == std::numeric_limits<double>::infinity());
    CHECK(back.contains("commin", -5, "face_00001", 42));
    CHECK_FALSE(back.contains("commin", -5, "face_00001", 43));
    CHECK(back.cell_complete("commin", -5, {"face_00001"}, 42));
    CHECK_FALSE(back.cell_complete("commin", -5, {"face_00001", "face_00002"}, 42));
    CHECK_THROWS_AS(ResultsTable::from_csv("a,b\n1,2\n"), InvalidArgument);

    testing::TempDir dir("csv");
    CHECK(ResultsTable::load(dir / "none.csv").empty());
    ResultsTable disk;
    disk.append_atomic({row("deepjscc", 1, "a", 20)}, dir / "sub" / "r.csv");
    disk.append_atomic({row("deepjscc", 3, "a", 22)}, dir / "sub" / "r.csv");
    CHECK(ResultsTable::load(dir / "sub" / "r.csv").size() == 2);
}

TEST_CASE("report from a results table") {
    testing::TempDir dir("report");
    CHECK_THROWS_AS(experiment::emit_report(ResultsTable{}, dir.path()), InvalidArgument);
    ResultsTable t;
    t.add(row("deepjscc", 1, "a", 20));
    t.add(row("deepjscc", 1, "b", 22));
    t.add(row("commin", 1, "a", 19));
    t.add(row("deepjscc", -5, "a", 15));
    const auto s = experiment::summarize(t);
    REQUIRE(s.size() == 3);
    CHECK(s[0].method == "commin");
    CHECK(s[1].snr_db == -5);
    CHECK(s[2].mean_psnr == 21.0);
    CHECK(s[2].n == 2);

    experiment::emit_report(t, dir / "r1");
    experiment::emit_report(t, dir / "r2");
    const auto summary = slurp(dir / "r1" / "summary.csv");
    CHECK(summary.rfind("method,snr_db,mean_psnr,mean_perceptual,n\n", 0) == 0);
    CHECK(summary == slurp(dir / "r2" / "summary.csv"));
    for (const char* svg : {"psnr_vs_snr.svg", "perceptual_vs_snr.svg"}) {
        const auto text = slurp(dir / "r1" / svg);
        CHECK(text.find("<svg") != std::string::npos);
        CHECK(text == slurp(dir / "r2" / svg));
    }
}

TEST_CASE("end to end on a tiny configuration") {
    testing::TempDir dir("e2e");
    const auto config = tiny(dir.path());
    synthetic::write_faces(config.dataset.path, config.image, 3, 500);
    const auto& grid = config.eval.snr_grid;

    pipeline::train_jscc_stage(config);
    pipeline::gen_pairs_stage(config, grid);
    pipeline::train_inn_stage(config, grid);
    pipeline::train_diffusion_stage(config);
    pipeline::train_perceptual_stage(config);

    const auto paths = pipeline::paths_for(config);
    const auto full = experiment::run_experiment(config);
    CHECK(full.size() == grid.size() * 50 * 2);
    CHECK(ResultsTable::load(paths.results()).to_csv() == full.to_csv());

    const auto zetas = config.zeta_table();
    for (const auto& r : full.rows()) {
        CHECK(r.config_hash == config_hash(config));
        CHECK(r.rho == config.rho());
        if (r.method == "commin")
            CHECK(r.zeta == zetas.select(r.snr_db));
        else
            CHECK(r.zeta == 0.0);
        CHECK(std::isfinite(r.psnr_db));
        CHECK(r.perceptual >= 0.0);
    }

    SUBCASE("rerun adds nothing") {
        const auto again = experiment::run_experiment(config);
        CHECK(again.to_csv() == full.to_csv());
    }

    SUBCASE("same seed reproduces the file bytes") {
        experiment::EvaluateOptions opt;
        opt.results_path = dir / "second" / "results.csv";
        experiment::run_experiment(config, opt);
        CHECK(slurp(*opt.results_path) == slurp(paths.results()));
    }

    SUBCASE("interrupted run resumes per image") {
        ResultsTable partial;
        for (std::size_t i = 0; i < full.size(); i += 3) partial.add(full.rows()[i]);
        const auto path = dir / "partial" / "results.csv";
        ResultsTable{}.append_atomic(partial.rows(), path);
        experiment::EvaluateOptions opt;
        opt.results_path = path;
        const auto resumed = experiment::run_experiment(config, opt);
        CHECK(resumed.size() == full.size());
        const auto a = by_key(full);
        const auto b = by_key(resumed);
        REQUIRE(a.size() == b.size());
        for (const auto& [k, r] : a) {
            const auto& s = b.at(k);
            CHECK(s.psnr_db == doctest::Approx(r.psnr_db).epsilon(1e-6));
            CHECK(s.zeta == r.zeta);
        }
    }

    SUBCASE("rows from another config are not mixed in") {
        auto other = config;
        other.eval.zeta_scale = 0.5;
        CHECK_THROWS_AS(experiment::run_experiment(other), ConfigError);
        CHECK(ResultsTable::load(paths.results()).to_csv() == full.to_csv());
    }

    SUBCASE("missing INN is named") {
        std::filesystem::remove(paths.inn(3));
        experiment::EvaluateOptions opt;
        opt.results_path = dir / "third" / "results.csv";
        try {
            experiment::run_experiment(config, opt);
            FAIL("expected MissingArtifact");
        } catch (const MissingArtifact& e) {
            const std::string msg = e.what();
            CHECK(msg.find("snr=3") != std::string::npos);
            CHECK(msg.find(paths.inn(3).filename().string()) != std::string::npos);
        }
        CHECK_FALSE(std::filesystem::exists(*opt.results_path));
    }
}
