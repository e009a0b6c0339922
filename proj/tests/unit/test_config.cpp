#include "helpers.hpp"

#include <cstdlib>
#include <fstream>

#include "commin/config.hpp"
#include "commin/error.hpp"

using namespace commin;
using nlohmann::json;

namespace {

ExperimentConfig customised() {
    ExperimentConfig c;
    c.dataset = {"/data/faces", 99, 0.7, 0.2};
    c.image = {64, 64, 3};
    c.avg_power = 2.0;
    c.jscc.k = 16;
    c.jscc.base_width = 48;
    c.jscc.stages = 4;
    c.jscc.train_snr_lo_db = -4.5;
    c.jscc.train_snr_hi_db = 6.25;
    c.jscc.optimizer = {1234, 17, 3.5e-4};
    c.inn = {2, 3, 24, {77, 5, 0.01}};
    c.diffusion = {200, 2e-4, 0.03, 16, 0.9, {3, 2, 1e-5}};
    c.perceptual = {8, {11, 3, 0.1}, "ext.npz"};
    c.eval.snr_grid = {-5, 1, 5};
    c.eval.num_test_images = 7;
    c.eval.batch_size = 3;
    c.eval.zeta_table = {{-5, 0.1}, {5, 0.25}};
    c.eval.zeta_scale = 0.015625;
    c.eval.full_gradient = false;
    c.seed = 0xfeedbeefcafeULL;
    c.output_dir = "/tmp/somewhere";
    return c;
}

}  // namespace

TEST_CASE("config serialises losslessly") {
    const auto c = customised();
    CHECK(config_from_json(to_json(c)) == c);
    CHECK(config_from_json(json::parse(to_json(c).dump())) == c);
    const ExperimentConfig d;
    CHECK(config_from_json(to_json(d)) == d);
    CHECK(config_from_json(json::object()) == d);
}

TEST_CASE("unknown keys are rejected at every level") {
    auto j = to_json(ExperimentConfig{});
    auto top = j;
    top["surprise"] = 1;
    CHECK_THROWS_AS(config_from_json(top), ConfigError);
    auto nested = j;
    nested["diffusion"]["optimizer"]["momentum"] = 0.9;
    CHECK_THROWS_AS(config_from_json(nested), ConfigError);
    auto zeta = j;
    zeta["eval"]["zeta_table"][0]["weight"] = 1;
    CHECK_THROWS_AS(config_from_json(zeta), ConfigError);
}

TEST_CASE("invalid values are config errors") {
    auto j = to_json(ExperimentConfig{});
    auto bad_type = j;
    bad_type["jscc"]["k"] = "four";
    CHECK_THROWS_AS(config_from_json(bad_type), ConfigError);
    auto bad_k = j;
    bad_k["jscc"]["k"] = 0;
    CHECK_THROWS_AS(config_from_json(bad_k), ConfigError);
    auto bad_range = j;
    bad_range["jscc"]["train_snr_db"] = {5, -5};
    CHECK_THROWS_AS(config_from_json(bad_range), ConfigError);
    auto bad_beta = j;
    bad_beta["diffusion"]["beta_end"] = 1.5;
    CHECK_THROWS_AS(config_from_json(bad_beta), ConfigError);
    auto bad_split = j;
    bad_split["dataset"]["train_fraction"] = 0.95;
    CHECK_THROWS_AS(config_from_json(bad_split), ConfigError);
    auto bad_shape = j;
    bad_shape["image"]["height"] = 30;
    CHECK_THROWS_AS(config_from_json(bad_shape), ConfigError);
}

TEST_CASE("derived values") {
    ExperimentConfig c;
    CHECK(c.rho() == 4.0 / 3072.0);
    c.image = {64, 64, 3};
    c.jscc.k = 16;
    CHECK(c.rho() == doctest::Approx(0.0013021).epsilon(1e-4));
    CHECK(c.schedule().steps() == 1000);
    CHECK(c.zeta_table().select(-5) == 0.3);
}

TEST_CASE("file roundtrip and dataset root override") {
    testing::TempDir dir("cfg");
    const auto c = customised();
    save_config(c, dir / "c.json");
    ::unsetenv("COMMIN_DATASET_ROOT");
    CHECK(load_config(dir / "c.json") == c);
    ::setenv("COMMIN_DATASET_ROOT", "/elsewhere", 1);
    CHECK(load_config(dir / "c.json").dataset.path == "/elsewhere");
    ::unsetenv("COMMIN_DATASET_ROOT");
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
}

TEST_CASE("config hash tracks content but not locations") {
    const auto c = customised();
    auto moved = c;
    moved.output_dir = "/other";
    moved.dataset.path = "/mirror/faces";
    CHECK(config_hash(c) == config_hash(moved));
    auto changed = c;
    changed.seed += 1;
    CHECK(config_hash(c) != config_hash(changed));
    CHECK(config_hash(c).size() == 16);

    auto eval_only = c;
    eval_only.eval.snr_grid = {1};
    eval_only.eval.zeta_scale = 0.5;
    CHECK(config_hash(c) != config_hash(eval_only));
    CHECK(training_config_hash(c) == training_config_hash(eval_only));
    CHECK(training_config_hash(c) != training_config_hash(changed));
    CHECK(training_config_hash(c) == training_config_hash(moved));
}
