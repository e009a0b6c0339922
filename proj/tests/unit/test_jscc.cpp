#include "helpers.hpp"

#include <cmath>

#include "commin/error.hpp"
#include "commin/jscc.hpp"

using namespace commin;
using namespace commin::jscc;

namespace {

JsccConfig small_config() {
    JsccConfig c;
    c.image = {16, 16, 3};
    c.k = 8;
    c.base_width = 8;
    c.stages = 2;
    return c;
}

torch::Tensor random_images(std::int64_t n, const ImageShape& s, std::uint64_t seed) {
    auto gen = make_generator(seed);
    return torch::rand({n, s.channels, s.height, s.width}, gen) * 2 - 1;
}

}  // namespace

TEST_CASE("bandwidth compression ratio") {
    CHECK(bcr(196608, 256) == doctest::Approx(0.0013021).epsilon(1e-4));
    CHECK(bcr(12288, 16) == doctest::Approx(0.0013021).epsilon(1e-4));
    CHECK(bcr(12288, 16) == 16.0 / 12288.0);
    CHECK(bcr(777, 777) == 1.0);
    CHECK_THROWS_AS(bcr(0, 4), InvalidArgument);
}

TEST_CASE("batch distortion is the per-sample MSE mean") {
    auto x = torch::tensor({1.0, 0.0});
    auto xh = torch::tensor({0.0, 0.0});
    CHECK(batch_distortion(x, xh).item<double>() == doctest::Approx(0.5));

    auto a = random_images(5, {4, 4, 3}, 1);
    auto b = random_images(5, {4, 4, 3}, 2);
    double brute = 0.0;
    auto da = a.to(torch::kDouble), db = b.to(torch::kDouble);
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        auto fa = da[i].flatten(), fb = db[i].flatten();
        for (int j = 0; j < fa.size(0); ++j) {
            const double d = fa[j].item<double>() - fb[j].item<double>();
            s += d * d;
        }
        brute += s / static_cast<double>(fa.size(0));
    }
    CHECK(std::abs(batch_distortion(a, b).item<double>() - brute / 5.0) < 1e-7);
}

TEST_CASE("SNR sampler covers the training range") {
    SnrSampler s(-5.0, 5.0, 77);
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 10000; ++i) {
        const double v = s();
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= -5.0);
    CHECK(lo <= -4.9);
    CHECK(hi <= 5.0);
    CHECK(hi >= 4.9);
}

TEST_CASE("encoder emits 2k reals and encode meets the power constraint") {
    const auto cfg = small_config();
    auto net = make_jscc(cfg, 5);
    auto x = random_images(3, cfg.image, 9);
    CHECK(net->encoder_forward(x).sizes() == torch::IntArrayRef({3, 2 * cfg.k}));
    for (int i = 0; i < 3; ++i) {
        const auto z = encode(x[i], net);
        REQUIRE(z.k() == cfg.k);
        CHECK(std::abs(z.average_power() - 1.0) < 1e-9);
        CHECK(encode(x[i], net).values == z.values);
    }
    const auto z0 = encode(torch::zeros({3, 16, 16}), net);
    CHECK(std::abs(z0.average_power() - 1.0) < 1e-9);
}

TEST_CASE("encode rejects the wrong image shape and decode the wrong length") {
    const auto cfg = small_config();
    auto net = make_jscc(cfg, 5);
    CHECK_THROWS_AS(encode(torch::zeros({3, 8, 8}), net), InvalidArgument);
    channel::ChannelSymbols short_block{std::vector<std::complex<double>>(cfg.k - 1, {1.0, 0.0})};
    CHECK_THROWS_AS(decode(short_block, net), InvalidArgument);
}

TEST_CASE("decode has image shape and is deterministic") {
    const auto cfg = small_config();
    auto net = make_jscc(cfg, 5);
    const auto z = encode(random_images(1, cfg.image, 3)[0], net);
    const auto a = decode(z, net);
    const auto b = decode(z, net);
    CHECK(a.sizes() == torch::IntArrayRef({3, 16, 16}));
    CHECK(testing::bit_equal(a, b));
}

TEST_CASE("degrade equals the explicit encode, channel, decode composition") {
    const auto cfg = small_config();
    auto net = make_jscc(cfg, 5);
    const auto x = random_images(1, cfg.image, 4)[0];
    const channel::ChannelConfig ch{1.0, 1.0, static_cast<std::size_t>(cfg.k)};
    Rng r1(99), r2(99);
    const auto y = degrade(x, net, ch, r1);
    const auto manual = decode(channel::transmit_awgn(encode(x, net), ch.noise_variance(), r2), net);
    CHECK(testing::bit_equal(y, manual));
    CHECK(y.sizes() == x.sizes());

    Rng r3(100);
    CHECK_FALSE(testing::bit_equal(degrade(x, net, ch, r3), y));

    // Batched form uses one independent stream per image. Batched convolutions
    // may round differently from single-image ones, hence the tolerance.
    const auto xb = random_images(3, cfg.image, 8);
    const auto yb = degrade_batch(xb, net, ch, {7, 8, 9});
    Rng r4(8);
    CHECK(testing::max_abs(yb[1] - degrade(xb[1], net, ch, r4)) < 1e-5);
}

TEST_CASE("training reduces noiseless reconstruction error") {
    auto cfg = small_config();
    cfg.image = {8, 8, 3};
    cfg.k = 16;
    const auto data = random_images(64, cfg.image, 21).clamp(-1, 1);
    // Smooth images so there is something to learn with a small code.
    const auto smooth = torch::nn::functional::avg_pool2d(data, torch::nn::functional::AvgPool2dFuncOptions(4))
                            .repeat_interleave(4, 2)
                            .repeat_interleave(4, 3);
    auto untrained = make_jscc(cfg, 31);
    auto [trained, report] = train_jscc(smooth, cfg, {150, 16, 3e-3, 0, {}}, 31);
    auto noiseless = [&](JsccNet& n) {
        double s = 0.0;
        for (int i = 0; i < 16; ++i) {
            const auto y = decode(encode(smooth[i], n), n);
            s += batch_distortion(smooth[i], y).item<double>();
        }
        return s;
    };
    CHECK(noiseless(trained) < noiseless(untrained));
    CHECK(report.final_loss < report.initial_loss);
    CHECK(report.curve.size() == 150);
}

TEST_CASE("training rejects an empty dataset") {
    CHECK_THROWS_AS(train_jscc(torch::zeros({0, 3, 16, 16}), small_config(), {}, 1), InvalidArgument);
}
