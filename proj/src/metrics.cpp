#include "commin/metrics.hpp"

#include <cmath>

#include "commin/error.hpp"
#include "commin/random.hpp"

namespace commin::metrics {

namespace nn = torch::nn;

namespace {

void check_pair(const torch::Tensor& x, const torch::Tensor& x_hat, const char* what) {
    if (!x.defined() || !x_hat.defined() || x.sizes() != x_hat.sizes())
        throw InvalidArgument(std::string(what) + ": shape mismatch");
    if (x.numel() == 0) throw InvalidArgument(std::string(what) + ": empty input");
}

}  // namespace

double mse_metric(const torch::Tensor& x, const torch::Tensor& x_hat) {
    check_pair(x, x_hat, "mse_metric");
    return (x.to(torch::kDouble) - x_hat.to(torch::kDouble)).pow(2).mean().item<double>();
}

double psnr_from_mse(double mse) {
    if (mse < 0.0) throw InvalidArgument("psnr: negative mse");
    if (mse == 0.0) return kPsnrInfinity;
    return 10.0 * std::log10(1.0 / mse);
}

double psnr(const torch::Tensor& x, const torch::Tensor& x_hat) { return psnr_from_mse(mse_metric(x, x_hat)); }

std::vector<double> mse_per_image(const torch::Tensor& x, const torch::Tensor& x_hat) {
    check_pair(x, x_hat, "mse_per_image");
    auto per = (x.to(torch::kDouble) - x_hat.to(torch::kDouble)).pow(2).flatten(1).mean(1).contiguous();
    return {per.data_ptr<double>(), per.data_ptr<double>() + per.numel()};
}

std::vector<double> psnr_per_image(const torch::Tensor& x, const torch::Tensor& x_hat) {
    auto m = mse_per_image(x, x_hat);
    for (auto& v : m) v = psnr_from_mse(v);
    return m;
}

FeatureExtractorImpl::FeatureExtractorImpl(const ExtractorConfig& config) : config_(config) {
    const auto b = config.base_width;
    const auto c = config.image.channels;
    stage0_ = register_module("stage0", nn::Sequential(conv3x3(c, b), nn::SiLU(), conv3x3(b, b), nn::SiLU()));
    stage1_ = register_module("stage1",
                              nn::Sequential(conv3x3(b, 2 * b, 2), nn::SiLU(), conv3x3(2 * b, 2 * b), nn::SiLU()));
    stage2_ = register_module(
        "stage2", nn::Sequential(conv3x3(2 * b, 4 * b, 2), nn::SiLU(), conv3x3(4 * b, 4 * b), nn::SiLU()));
    head_ = register_module("head", nn::Linear(4 * b, kRotations));
    for (std::int64_t l = 0; l < 3; ++l)
        lin_.push_back(register_buffer("lin" + std::to_string(l), torch::ones({b << l})));
}

std::vector<torch::Tensor> FeatureExtractorImpl::features(const torch::Tensor& x) {
    check_image_batch(x, config_.image, "feature extractor");
    auto f0 = stage0_->forward(x * 2.0 - 1.0);
    auto f1 = stage1_->forward(f0);
    auto f2 = stage2_->forward(f1);
    return {f0, f1, f2};
}

torch::Tensor FeatureExtractorImpl::logits(const torch::Tensor& x) {
    return head_->forward(features(x).back().mean({2, 3}));
}

FeatureExtractor make_extractor(const ExtractorConfig& config, std::uint64_t seed) {
    SeededInit init(seed);
    return FeatureExtractor(config);
}

std::vector<double> perceptual_distance_batch(const torch::Tensor& x, const torch::Tensor& x_hat,
                                              FeatureExtractor& extractor) {
    if (!extractor) throw MissingArtifact("perceptual_distance: no feature extractor loaded");
    check_pair(x, x_hat, "perceptual_distance");
    torch::NoGradGuard no_grad;
    auto unit = [](const torch::Tensor& f) { return f / (f.pow(2).sum(1, true).sqrt() + 1e-10); };
    auto fa = extractor->features(x);
    auto fb = extractor->features(x_hat);
    const auto& w = extractor->channel_weights();
    auto total = torch::zeros({x.size(0)}, torch::kDouble);
    for (std::size_t l = 0; l < fa.size(); ++l) {
        auto diff = (unit(fa[l]) - unit(fb[l])).pow(2) * w[l].view({1, -1, 1, 1});
        total += diff.sum(1).mean({1, 2}).to(torch::kDouble);
    }
    total = total.contiguous();
    return {total.data_ptr<double>(), total.data_ptr<double>() + total.numel()};
}

double perceptual_distance(const torch::Tensor& x, const torch::Tensor& x_hat, FeatureExtractor& extractor) {
    auto a = x.dim() == 3 ? x.unsqueeze(0) : x;
    auto b = x_hat.dim() == 3 ? x_hat.unsqueeze(0) : x_hat;
    auto per = perceptual_distance_batch(a, b, extractor);
    double sum = 0.0;
    for (double v : per) sum += v;
    return sum / static_cast<double>(per.size());
}

namespace {

// Rotate each image by labels[i] quarter turns.
torch::Tensor rotate_batch(const torch::Tensor& x, const torch::Tensor& labels) {
    std::vector<torch::Tensor> out;
    out.reserve(static_cast<std::size_t>(x.size(0)));
    for (std::int64_t i = 0; i < x.size(0); ++i)
        out.push_back(torch::rot90(x[i], labels[i].item<std::int64_t>(), {1, 2}));
    return torch::stack(out);
}

}  // namespace

ExtractorTrainResult train_extractor(const torch::Tensor& images, const ExtractorConfig& config,
                                     const OptimizerSettings& opt, std::uint64_t seed) {
    if (!images.defined() || images.size(0) == 0) throw InvalidArgument("train_extractor: empty dataset");
    if (config.image.height != config.image.width)
        throw InvalidArgument("train_extractor: rotation pretext needs square images");
    check_image_batch(images, config.image, "train_extractor");
    auto net = make_extractor(config, derive_seed(seed, {0}));
    const auto unit_images = to_unit_range(images);

    const std::int64_t probe_n = std::min<std::int64_t>(images.size(0), 64);
    auto probe_gen = make_generator(derive_seed(seed, {1}));
    auto probe_labels = torch::randint(FeatureExtractorImpl::kRotations, {probe_n}, probe_gen, torch::kLong);
    auto probe_x = rotate_batch(unit_images.slice(0, 0, probe_n), probe_labels);
    auto probe_loss = [&] {
        torch::NoGradGuard no_grad;
        return nn::functional::cross_entropy(net->logits(probe_x), probe_labels).item<double>();
    };

    TrainingReport report;
    report.model = "extractor";
    report.steps = opt.steps;
    report.initial_loss = probe_loss();
    torch::optim::Adam adam(net->parameters(), torch::optim::AdamOptions(opt.lr));
    auto gen = make_generator(derive_seed(seed, {2}));
    for (std::int64_t step = 1; step <= opt.steps; ++step) {
        auto idx = sample_indices(images.size(0), opt.batch_size, gen);
        auto labels = torch::randint(FeatureExtractorImpl::kRotations, {opt.batch_size}, gen, torch::kLong);
        auto x = rotate_batch(unit_images.index_select(0, idx), labels);
        adam.zero_grad();
        auto loss = nn::functional::cross_entropy(net->logits(x), labels);
        loss.backward();
        adam.step();
        const double l = loss.item<double>();
        check_finite_loss(l, "extractor", step);
        report.curve.push_back(l);
        if (opt.progress && opt.log_every > 0 && step % opt.log_every == 0) opt.progress(step, l);
    }
    report.final_loss = probe_loss();
    return {net, report};
}

}  // namespace commin::metrics
