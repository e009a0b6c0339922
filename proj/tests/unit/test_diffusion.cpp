#include "helpers.hpp"

#include <cmath>

#include "commin/diffusion.hpp"
#include "commin/error.hpp"

using namespace commin;
using namespace commin::diffusion;

TEST_CASE("linear schedule tables") {
    const auto s = build_schedule(1000, 1e-4, 0.02);
    CHECK(s.alpha_bar(0) == 1.0);
    for (std::int64_t t = 1; t <= 1000; ++t) {
        CHECK(s.alpha(t) + s.beta(t) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(std::abs(s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)) < 1e-15);
        if (t > 1) CHECK(s.beta(t) >= s.beta(t - 1));
    }
    CHECK(s.beta(1) == doctest::Approx(1e-4));
    CHECK(s.beta(1000) == doctest::Approx(0.02));
    CHECK(s.alpha_bar(1000) < 1e-4);

    // Independent running product.
    double prod = 1.0;
    for (int t = 1; t <= 1000; ++t) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
    CHECK(std::abs(s.alpha_bar(1000) - prod) < 1e-15);

    const auto one = build_schedule(1, 0.3, 0.3);
    CHECK(one.alpha_bar(1) == doctest::Approx(0.7));
}

TEST_CASE("schedule rejects invalid bounds and timesteps") {
    CHECK_THROWS_AS(build_schedule(0, 1e-4, 0.02), InvalidArgument);
    CHECK_THROWS_AS(build_schedule(10, 0.0, 0.02), InvalidArgument);
    CHECK_THROWS_AS(build_schedule(10, 0.03, 0.02), InvalidArgument);
    CHECK_THROWS_AS(build_schedule(10, 1e-4, 1.0), InvalidArgument);
    const auto s = build_schedule(10, 1e-4, 0.02);
    CHECK_THROWS_AS(s.beta(0), InvalidArgument);
    CHECK_THROWS_AS(s.coefficients(11), InvalidArgument);
    const auto x = torch::zeros({1, 1, 2, 2});
    CHECK_THROWS_AS(forward_noising(x, 11, x, s), InvalidArgument);
    CHECK_THROWS_AS(ancestral_step(x, x, 0, x, s), InvalidArgument);
}

TEST_CASE("forward noising limits") {
    const auto x0 = torch::randn({2, 3, 4, 4});
    const auto eps = torch::randn({2, 3, 4, 4});
    CHECK(testing::bit_equal(forward_noising(x0, eps, 1.0), x0));
    CHECK(testing::max_abs(forward_noising(x0, eps, 0.0) - eps) == 0.0);
}

TEST_CASE("predict_x0 inverts forward noising") {
    const auto s = build_schedule(1000, 1e-4, 0.02);
    const auto x0 = torch::rand({4, 3, 8, 8}, torch::kDouble) * 2 - 1;
    const auto eps = torch::randn({4, 3, 8, 8}, torch::kDouble);
    for (std::int64_t t : {1, 10, 250, 700, 1000}) {
        const auto xt = forward_noising(x0, t, eps, s);
        CHECK(testing::max_abs(predict_x0(xt, t, eps, s) - x0) < 1e-6);
    }
    const auto xt = torch::randn({3}, torch::kDouble);
    CHECK(testing::bit_equal(predict_x0(xt, torch::randn({3}, torch::kDouble), 1.0), xt));
}

TEST_CASE("predict_x0 hand example") {
    const auto x0 = predict_x0(torch::tensor({1.0}, torch::kDouble), torch::tensor({0.5}, torch::kDouble), 0.25);
    CHECK(x0.item<double>() == doctest::Approx(1.1339746).epsilon(1e-7));
    CHECK(x0.item<double>() == doctest::Approx(2.0 * (1.0 - std::sqrt(0.75) * 0.5)).epsilon(1e-15));
}

TEST_CASE("ancestral step hand example") {
    // alpha_t = 0.99, alpha_bar_{t-1} = 0.9 -> alpha_bar_t = 0.891, beta_t = 0.01
    StepCoefficients c{0.99, 0.891, 0.9, 0.01, 0.123};
    const double wx = std::sqrt(0.99) * 0.1 / 0.109;
    const double w0 = std::sqrt(0.9) * 0.01 / 0.109;
    CHECK(std::abs(c.x_t_weight() - wx) < 1e-12);
    CHECK(std::abs(c.x0_weight() - w0) < 1e-12);
    const auto one = torch::ones({1}, torch::kDouble);
    const auto out = ancestral_step(one, one, torch::zeros({1}, torch::kDouble), c).item<double>();
    CHECK(std::abs(out - 0.9998675) < 1e-6);
}

TEST_CASE("ancestral step coefficients come from the schedule") {
    const auto s = build_schedule(1000, 1e-4, 0.02);
    for (std::int64_t t : {1, 2, 500, 1000}) {
        const auto c = s.coefficients(t);
        const double a = 1.0 - s.beta(t), ab = s.alpha_bar(t), abp = s.alpha_bar(t - 1);
        CHECK(std::abs(c.x_t_weight() - std::sqrt(a) * (1 - abp) / (1 - ab)) < 1e-12);
        CHECK(std::abs(c.x0_weight() - std::sqrt(abp) * s.beta(t) / (1 - ab)) < 1e-12);
        CHECK(std::abs(c.sigma - std::sqrt(s.beta(t) * (1 - abp) / (1 - ab))) < 1e-12);
    }
    CHECK(s.sigma(1) == 0.0);
}

TEST_CASE("ancestral step is linear and deterministic at t = 1") {
    const auto s = build_schedule(50, 1e-4, 0.02);
    const auto xt = torch::randn({2, 3, 4, 4}, torch::kDouble);
    const auto x0 = torch::randn({2, 3, 4, 4}, torch::kDouble);
    const auto z = torch::zeros_like(xt);
    const auto a = ancestral_step(xt, x0, 20, z, s);
    const auto b = ancestral_step(2 * xt, 2 * x0, 20, z, s);
    CHECK(testing::max_abs(b - 2 * a) < 1e-12);
    // sigma_1 = 0: the noise draw has no effect at the last step.
    CHECK(testing::bit_equal(ancestral_step(xt, x0, 1, torch::randn_like(xt), s), ancestral_step(xt, x0, 1, z, s)));
}

TEST_CASE("forward noising variance matches the closed form") {
    const double ab = 0.3;
    auto gen = make_generator(5);
    const auto x0 = torch::rand({100000}, gen, torch::kDouble) * 2 - 1;  // Var = 1/3
    const auto eps = torch::randn({100000}, gen, torch::kDouble);
    const double v = forward_noising(x0, eps, ab).var().item<double>();
    const double expected = ab / 3.0 + (1 - ab);
    CHECK(std::abs(v - expected) / expected < 0.02);
}

TEST_CASE("denoiser keeps the image shape") {
    DenoiserConfig c{{8, 8, 3}, 8};
    auto net = make_denoiser(c, 1);
    const auto x = torch::randn({2, 3, 8, 8});
    CHECK(net->forward(x, 5).sizes() == x.sizes());
    CHECK(net->forward(x, torch::tensor({1, 1000}, torch::kLong)).sizes() == x.sizes());
    CHECK_THROWS_AS(DenoiserConfig({{6, 6, 3}, 8}).validate(), InvalidArgument);
}

TEST_CASE("denoiser training is deterministic and rejects an empty dataset") {
    DenoiserConfig c{{8, 8, 1}, 8};
    const auto s = build_schedule(20, 1e-3, 0.2);
    const auto data = torch::rand({16, 1, 8, 8}) * 2 - 1;
    const OptimizerSettings opt{5, 4, 1e-3, 0, {}};
    auto a = train_denoiser(data, s, c, opt, 9, 0.9);
    auto b = train_denoiser(data, s, c, opt, 9, 0.9);
    auto pa = a.net->parameters(), pb = b.net->parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(testing::bit_equal(pa[i], pb[i]));
    CHECK(a.report.curve == b.report.curve);
    CHECK_THROWS_AS(train_denoiser(torch::zeros({0, 1, 8, 8}), s, c, opt, 1), InvalidArgument);
}

TEST_CASE("unconditional sampling: shape, determinism, batch independence, step order") {
    DenoiserConfig c{{8, 8, 3}, 8};
    auto net = make_denoiser(c, 4);
    const auto s = build_schedule(30, 1e-4, 0.05);
    NoiseSource n1(std::vector<std::uint64_t>{11, 12, 13});
    NoiseSource n2(std::vector<std::uint64_t>{11, 12, 13});
    NoiseSource solo(std::vector<std::uint64_t>{12});
    std::vector<std::int64_t> seen;
    const auto a = sample_unconditional(net, s, n1, [&](std::int64_t t, const torch::Tensor&) { seen.push_back(t); });
    const auto b = sample_unconditional(net, s, n2);
    const auto one = sample_unconditional(net, s, solo);
    CHECK(a.sizes() == torch::IntArrayRef({3, 3, 8, 8}));
    CHECK(testing::bit_equal(a, b));
    CHECK(testing::max_abs(a[1] - one[0]) < 1e-5);
    REQUIRE(seen.size() == 31);
    for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == 30 - static_cast<std::int64_t>(i));
}

TEST_CASE("a trained denoiser samples the modes of a two-mode dataset") {
    DenoiserConfig c{{8, 8, 1}, 16};
    const auto s = build_schedule(100, 1e-4, 0.2);
    auto data = torch::full({64, 1, 8, 8}, 0.5);
    data.slice(0, 0, 32).fill_(-0.5);
    auto [net, report] = train_denoiser(data, s, c, {600, 32, 2e-3, 0, {}}, 3, 0.99);
    CHECK(report.final_loss < report.initial_loss);
    NoiseSource noise(17, 200);
    const auto samples = sample_unconditional(net, s, noise);
    const auto means = samples.mean({1, 2, 3});
    const auto near = ((means - 0.5).abs() < 0.2).logical_or((means + 0.5).abs() < 0.2);
    const double frac = near.to(torch::kDouble).mean().item<double>();
    MESSAGE("fraction of samples near a mode: " << frac);
    CHECK(frac >= 0.9);
}
