#include "helpers.hpp"

#include "commin/error.hpp"
#include "commin/inn.hpp"

using namespace commin;
using namespace commin::inn;

namespace {

// Plain-loop space-to-channel squeeze followed by the coarse/detail split:
// out[q*C + c][i][j] = x[c][2i + dy][2j + dx] with q = 2*dy + dx.
std::pair<torch::Tensor, torch::Tensor> oracle_squeeze_split(const torch::Tensor& x) {
    const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    auto out = torch::zeros({n, 4 * c, h / 2, w / 2}, x.options());
    auto xa = x.accessor<float, 4>();
    auto oa = out.accessor<float, 4>();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < h / 2; ++i)
                for (int64_t j = 0; j < w / 2; ++j)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) oa[b][(2 * dy + dx) * c + ch][i][j] = xa[b][ch][2 * i + dy][2 * j + dx];
    return {out.slice(1, 0, c), out.slice(1, c, 4 * c)};
}

InnConfig cfg(std::int64_t levels, ImageShape shape = {8, 8, 3}) {
    InnConfig c;
    c.image = shape;
    c.levels = levels;
    c.pairs = 2;
    c.hidden = 8;
    return c;
}

torch::Tensor rand_images(std::int64_t n, const ImageShape& s, std::uint64_t seed) {
    auto g = make_generator(seed);
    return torch::rand({n, s.channels, s.height, s.width}, g) * 2 - 1;
}

}  // namespace

TEST_CASE("zero-parameter INN equals the plain squeeze and split") {
    const auto x = rand_images(4, {8, 8, 3}, 1);
    auto inn1 = make_inn(cfg(1), 3);
    const auto d1 = inn1->forward(x);
    const auto [c1, det1] = oracle_squeeze_split(x);
    CHECK(testing::max_abs(d1.coarse - c1) < 1e-6);
    CHECK(testing::max_abs(d1.details.at(0) - det1) < 1e-6);

    auto inn2 = make_inn(cfg(2), 3);
    const auto d2 = inn2->forward(x);
    const auto [c2, det2] = oracle_squeeze_split(c1.contiguous());
    CHECK(testing::max_abs(d2.details.at(0) - det1) < 1e-6);
    CHECK(testing::max_abs(d2.details.at(1) - det2) < 1e-6);
    CHECK(testing::max_abs(d2.coarse - c2) < 1e-6);
}

TEST_CASE("zero-parameter inverse is un-split plus un-squeeze") {
    const auto x = rand_images(2, {8, 8, 3}, 2);
    const auto [c, d] = oracle_squeeze_split(x);
    auto inn1 = make_inn(cfg(1), 3);
    CHECK(testing::max_abs(inn1->inverse(c, {d}) - x) < 1e-6);
    CHECK(testing::max_abs(unsqueeze2x2(torch::cat({c, d}, 1)) - x) == 0.0);
}

TEST_CASE("decomposition conserves the element count") {
    for (std::int64_t levels : {1, 2, 3}) {
        auto inn = make_inn(cfg(levels, {16, 8, 3}), 1);
        const auto dec = inn->forward(rand_images(1, {16, 8, 3}, 4));
        CHECK(dec.numel_per_sample() == 16 * 8 * 3);
        CHECK(dec.details.size() == static_cast<std::size_t>(levels));
        CHECK(dec.coarse.sizes() == torch::IntArrayRef({1, 3, 16 >> levels, 8 >> levels}));
    }
}

TEST_CASE("two-sided invertibility for random parameters") {
    for (std::int64_t levels : {1, 2}) {
        auto inn = make_inn(cfg(levels, {16, 16, 3}), 7);
        auto gen = make_generator(8 + levels);
        inn->randomize(gen, 0.1);
        const auto x = rand_images(10, {16, 16, 3}, 12);
        const auto dec = inn->forward(x);
        CHECK(testing::max_abs(inn->inverse(dec) - x) < 1e-4);
        // Parameters really do something.
        auto lazy = make_inn(cfg(levels, {16, 16, 3}), 7);
        CHECK(testing::max_abs(lazy->forward(x).coarse - dec.coarse) > 1e-3);

        auto c = torch::randn_like(dec.coarse);
        std::vector<torch::Tensor> d;
        for (const auto& t : dec.details) d.push_back(torch::randn_like(t));
        const auto again = inn->forward(inn->inverse(c, d));
        CHECK(testing::max_abs(again.coarse - c) < 1e-4);
        for (std::size_t l = 0; l < d.size(); ++l) CHECK(testing::max_abs(again.details[l] - d[l]) < 1e-4);
    }
}

TEST_CASE("forward is deterministic") {
    auto inn = make_inn(cfg(1), 2);
    auto gen = make_generator(3);
    inn->randomize(gen, 0.3);
    const auto x = rand_images(2, {8, 8, 3}, 5);
    CHECK(testing::bit_equal(inn->forward(x).coarse, inn->forward(x).coarse));
}

TEST_CASE("shape errors") {
    auto inn = make_inn(cfg(1), 2);
    CHECK_THROWS_AS(inn->forward(torch::zeros({1, 3, 7, 8})), InvalidArgument);
    const auto dec = inn->forward(torch::zeros({1, 3, 8, 8}));
    CHECK_THROWS_AS(inn->inverse(dec.coarse, {}), InvalidArgument);
    CHECK_THROWS_AS(inn->inverse(dec.coarse, {torch::zeros({1, 9, 2, 2})}), InvalidArgument);
    CHECK_THROWS_AS(cfg(3, {12, 12, 3}).validate(), InvalidArgument);
}

TEST_CASE("coarse target is average pooling") {
    CHECK(testing::max_abs(coarse_target(torch::full({1, 3, 8, 8}, 0.37), 2) - 0.37) < 1e-7);
    const auto block = torch::tensor({0.0f, 1.0f, 1.0f, 0.0f}).reshape({1, 1, 2, 2});
    const auto t = coarse_target(block, 1);
    CHECK(t.sizes() == torch::IntArrayRef({1, 1, 1, 1}));
    CHECK(t.item<float>() == doctest::Approx(0.5));
    CHECK(coarse_target(torch::zeros({2, 3, 16, 8}), 2).sizes() == torch::IntArrayRef({2, 3, 4, 2}));
    CHECK_THROWS_AS(coarse_target(torch::zeros({1, 3, 6, 6}), 2), InvalidArgument);
}

TEST_CASE("coarse loss is the per-sample summed squared error") {
    const auto c = torch::ones({2, 1, 2, 2});
    const auto t = torch::zeros({2, 1, 2, 2});
    CHECK(coarse_loss(c, t).item<double>() == doctest::Approx(4.0));
}

TEST_CASE("training mixes no settings, lowers the loss and keeps invertibility") {
    const auto conf = cfg(1, {8, 8, 3});
    const auto x = rand_images(48, conf.image, 30);
    // A blur-and-shift degradation for y.
    const auto y = torch::nn::functional::avg_pool2d(
        x, torch::nn::functional::AvgPool2dFuncOptions(3).stride(1).padding(1).count_include_pad(false)) * 0.8 + 0.1;
    const DegradationSetting s{1.0, 0.01, "abc"};
    std::vector<DegradationSetting> settings(48, s);
    auto mixed = settings;
    mixed[3].snr_db = 3.0;
    CHECK_THROWS_AS(train_inn(x, y, mixed, conf, {10, 8, 1e-3, 0, {}}, 1), InvalidArgument);

    auto [inn, report] = train_inn(x, y, settings, conf, {200, 16, 3e-3, 0, {}}, 1);
    CHECK(report.final_loss < 0.5 * report.initial_loss);
    auto lazy = make_inn(conf, 1);
    CHECK(coarse_rmse(inn, x, y) < coarse_rmse(lazy, x, y));
    CHECK(roundtrip_error(inn, x) < 1e-4);

    // Details carry what the coarse measurement lacks.
    torch::NoGradGuard ng;
    const auto dec = inn->forward(x);
    const auto ct = coarse_target(y, 1);
    std::vector<torch::Tensor> zeros;
    for (const auto& d : dec.details) zeros.push_back(torch::zeros_like(d));
    const double with_d = (inn->inverse(ct, dec.details) - x).pow(2).mean().item<double>();
    const double without_d = (inn->inverse(ct, zeros) - x).pow(2).mean().item<double>();
    CHECK(with_d < without_d);
}
