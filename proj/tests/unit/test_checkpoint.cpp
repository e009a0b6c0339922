#include "helpers.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "commin/checkpoint.hpp"
#include "commin/error.hpp"
#include "commin/inn.hpp"

using namespace commin;
using namespace commin::checkpoint;

namespace {

CheckpointRecord sample_record() {
    CheckpointRecord r;
    r.manifest.kind = "inn";
    r.manifest.config_hash = "0123456789abcdef";
    r.manifest.meta = {{"snr_db", -3.0}, {"rho", 0.0013}, {"jscc_id", "feed"}};
    r.arrays = {{"w", torch::randn({3, 4, 5})},
                {"b", torch::randn({7}, torch::kDouble)},
                {"steps", torch::tensor({1, -2, 3}, torch::kLong)},
                {"scalar", torch::tensor(2.5f)},
                {"empty", torch::zeros({0, 3})}};
    return r;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

}  // namespace

TEST_CASE("save then load is bit exact and the manifest lists every array") {
    testing::TempDir dir("ckpt");
    const auto rec = sample_record();
    save_checkpoint(rec, dir / "a.npz");
    const auto back = load_checkpoint(dir / "a.npz");
    CHECK(back.manifest.kind == "inn");
    CHECK(back.manifest.config_hash == rec.manifest.config_hash);
    CHECK(back.manifest.meta == rec.manifest.meta);
    CHECK(!back.manifest.created_utc.empty());
    CHECK(back.manifest.content_id.size() == 16);
    REQUIRE(back.arrays.size() == rec.arrays.size());
    REQUIRE(back.manifest.arrays.size() == rec.arrays.size());
    for (std::size_t i = 0; i < rec.arrays.size(); ++i) {
        CHECK(back.arrays[i].first == rec.arrays[i].first);
        CHECK(back.manifest.arrays[i].name == rec.arrays[i].first);
        CHECK(testing::bit_equal(back.arrays[i].second, rec.arrays[i].second));
    }
    CHECK(back.manifest.arrays[0].dtype == "<f4");
    CHECK(back.manifest.arrays[1].dtype == "<f8");
    CHECK(back.manifest.arrays[2].dtype == "<i8");
    CHECK((back.manifest.arrays[0].shape == std::vector<std::int64_t>{3, 4, 5}));
    CHECK_THROWS_AS(back.at("nope"), MissingArtifact);
}

TEST_CASE("npy header follows format 1.0") {
    const auto bytes = encode_npy(torch::zeros({2, 3}));
    CHECK(bytes.substr(0, 6) == "\x93NUMPY");
    CHECK(bytes[6] == 1);
    const auto header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    CHECK((10 + header_len) % 64 == 0);
    CHECK(bytes.find("'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }") != std::string::npos);
    CHECK(testing::bit_equal(decode_npy(bytes, "x"), torch::zeros({2, 3})));
}

TEST_CASE("truncated or damaged archives are rejected") {
    testing::TempDir dir("ckpt");
    save_checkpoint(sample_record(), dir / "a.npz");
    const auto bytes = slurp(dir / "a.npz");
    spit(dir / "short.npz", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.npz"), CorruptArchive);
    spit(dir / "tiny.npz", bytes.substr(0, 10));
    CHECK_THROWS_AS(load_checkpoint(dir / "tiny.npz"), CorruptArchive);
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x5a;
    spit(dir / "flip.npz", flipped);
    CHECK_THROWS_AS(load_checkpoint(dir / "flip.npz"), CorruptArchive);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.npz"), MissingArtifact);
}

TEST_CASE("kind mismatch and config-hash warning") {
    testing::TempDir dir("ckpt");
    save_checkpoint(sample_record(), dir / "a.npz");
    CHECK_THROWS_AS(load_checkpoint(dir / "a.npz", {std::string("denoiser"), std::nullopt}), KindMismatch);

    std::ostringstream captured;
    auto* old = std::cerr.rdbuf(captured.rdbuf());
    load_checkpoint(dir / "a.npz", {std::string("inn"), std::string("0123456789abcdef")});
    const auto quiet = captured.str();
    load_checkpoint(dir / "a.npz", {std::string("inn"), std::string("ffffffffffffffff")});
    std::cerr.rdbuf(old);
    CHECK(quiet.empty());
    CHECK(captured.str().find("warning") != std::string::npos);
}

TEST_CASE("module parameters roundtrip through an archive") {
    testing::TempDir dir("ckpt");
    inn::InnConfig cfg{{8, 8, 3}, 2, 1, 4};
    auto a = inn::make_inn(cfg, 1);
    auto gen = make_generator(2);
    a->randomize(gen, 0.3);
    save_checkpoint(record_from_module(*a, "inn"), dir / "m.npz");
    auto b = inn::make_inn(cfg, 9);
    load_into_module(load_checkpoint(dir / "m.npz", {std::string("inn"), std::nullopt}), *b);
    const auto x = torch::randn({2, 3, 8, 8});
    CHECK(testing::bit_equal(a->forward(x).coarse, b->forward(x).coarse));

    inn::InnConfig other{{8, 8, 3}, 1, 1, 4};
    auto c = inn::make_inn(other, 1);
    CHECK_THROWS(load_into_module(load_checkpoint(dir / "m.npz"), *c));
}
