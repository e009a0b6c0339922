#include "commin/jscc.hpp"

#include <cmath>
#include <string>

#include "commin/error.hpp"

namespace commin::jscc {

namespace nn = torch::nn;

double JsccConfig::rho() const { return bcr(m(), k); }

void JsccConfig::validate() const {
    if (image.numel() <= 0) throw InvalidArgument("jscc: image shape must be positive");
    if (k < 1) throw InvalidArgument("jscc: k must be >= 1");
    if (stages < 1 || base_width < 1) throw InvalidArgument("jscc: stages and base_width must be >= 1");
    const std::int64_t f = std::int64_t{1} << stages;
    if (image.height % f != 0 || image.width % f != 0)
        throw InvalidArgument("jscc: image " + image.str() + " not divisible by 2^" + std::to_string(stages));
    if (!(snr_lo_db <= snr_hi_db)) throw InvalidArgument("jscc: training SNR range is empty");
    if (!(avg_power > 0.0)) throw InvalidArgument("jscc: average power must be positive");
}

double bcr(std::int64_t m, std::int64_t k) {
    if (m < 1) throw InvalidArgument("bcr: source bandwidth m must be >= 1");
    if (k < 1) throw InvalidArgument("bcr: channel bandwidth k must be >= 1");
    return static_cast<double>(k) / static_cast<double>(m);
}

torch::Tensor batch_distortion(const torch::Tensor& x, const torch::Tensor& x_hat) {
    if (x.sizes() != x_hat.sizes()) throw InvalidArgument("batch_distortion: shape mismatch");
    return (x - x_hat).pow(2).mean();
}

SnrSampler::SnrSampler(double lo_db, double hi_db, std::uint64_t seed) : rng_(seed), dist_(lo_db, hi_db) {
    if (!(lo_db <= hi_db)) throw InvalidArgument("SnrSampler: empty range");
}

double SnrSampler::operator()() { return dist_(rng_); }

JsccNetImpl::JsccNetImpl(const JsccConfig& config) : config_(config) {
    config_.validate();
    encoder_ = nn::Sequential();
    std::int64_t ch = config.image.channels;
    for (std::int64_t s = 0; s < config.stages; ++s) {
        const std::int64_t out = s == 0 ? config.base_width : 2 * config.base_width;
        encoder_->push_back(conv3x3(ch, out, 2));
        encoder_->push_back(nn::SiLU());
        encoder_->push_back(conv3x3(out, out));
        encoder_->push_back(nn::SiLU());
        ch = out;
    }
    bottleneck_channels_ = ch;
    bottleneck_size_ = (config.image.height >> config.stages) * (config.image.width >> config.stages);
    encoder_head_ = nn::Linear(ch * bottleneck_size_, 2 * config.k);
    decoder_head_ = nn::Linear(2 * config.k, ch * bottleneck_size_);

    decoder_ = nn::Sequential();
    for (std::int64_t s = config.stages - 1; s >= 0; --s) {
        const std::int64_t out = s == 0 ? config.base_width : 2 * config.base_width;
        decoder_->push_back(nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0})
                                             .mode(torch::kNearest)));
        decoder_->push_back(conv3x3(ch, out));
        decoder_->push_back(nn::SiLU());
        decoder_->push_back(conv3x3(out, out));
        decoder_->push_back(nn::SiLU());
        ch = out;
    }
    decoder_->push_back(conv3x3(ch, config.image.channels));

    register_module("encoder", encoder_);
    register_module("encoder_head", encoder_head_);
    register_module("decoder_head", decoder_head_);
    register_module("decoder", decoder_);
}

torch::Tensor JsccNetImpl::encoder_forward(const torch::Tensor& x) {
    check_image_batch(x, config_.image, "jscc encode");
    auto h = encoder_->forward(x);
    return encoder_head_->forward(h.flatten(1));
}

torch::Tensor JsccNetImpl::decoder_forward(const torch::Tensor& z_hat) {
    if (z_hat.dim() != 2 || z_hat.size(1) != 2 * config_.k)
        throw InvalidArgument("jscc decode: expected [N, " + std::to_string(2 * config_.k) + "] channel reals");
    auto h = torch::silu(decoder_head_->forward(z_hat));
    h = h.view({z_hat.size(0), bottleneck_channels_, config_.image.height >> config_.stages,
                config_.image.width >> config_.stages});
    return decoder_->forward(h);
}

torch::Tensor JsccNetImpl::channel_forward(const torch::Tensor& x, const torch::Tensor& noise_variance,
                                           torch::Generator& gen) {
    auto z_tilde = encoder_forward(x);
    const auto n = z_tilde.size(0);
    auto energy = z_tilde.pow(2).sum(1, true);
    auto z = z_tilde * torch::sqrt(static_cast<double>(config_.k) * config_.avg_power / energy);
    auto var = noise_variance.to(z.dtype()).reshape({-1, 1}).expand({n, 1});
    auto noise = torch::randn(z.sizes(), gen, z.options()) * torch::sqrt(var / 2.0);
    return decoder_forward(z + noise);
}

JsccNet make_jscc(const JsccConfig& config, std::uint64_t seed) {
    SeededInit init(seed);
    return JsccNet(config);
}

channel::ChannelSymbols encode(const torch::Tensor& x, JsccNet& net) {
    auto batch = x.dim() == 3 ? x.unsqueeze(0) : x;
    if (batch.size(0) != 1) throw InvalidArgument("encode: expected a single image");
    return encode_batch(batch, net).front();
}

std::vector<channel::ChannelSymbols> encode_batch(const torch::Tensor& x, JsccNet& net) {
    torch::NoGradGuard no_grad;
    auto raw = net->encoder_forward(x).to(torch::kDouble).contiguous();
    const auto& cfg = net->config();
    std::vector<channel::ChannelSymbols> out;
    out.reserve(static_cast<std::size_t>(raw.size(0)));
    for (std::int64_t i = 0; i < raw.size(0); ++i) {
        auto row = raw[i];
        std::span<const double> v(row.data_ptr<double>(), static_cast<std::size_t>(row.numel()));
        auto z = channel::normalize_power(channel::pack_complex(v), cfg.avg_power);
        const double rel = std::abs(z.average_power() - cfg.avg_power) / cfg.avg_power;
        if (!(rel <= 1e-9))
            throw Error("encode: power constraint violated (relative error " + std::to_string(rel) + ")");
        out.push_back(std::move(z));
    }
    return out;
}

torch::Tensor decode(const channel::ChannelSymbols& z_hat, JsccNet& net) {
    return decode_batch({z_hat}, net).squeeze(0);
}

torch::Tensor decode_batch(const std::vector<channel::ChannelSymbols>& z_hat, JsccNet& net) {
    const auto k = net->config().k;
    auto reals = torch::empty({static_cast<std::int64_t>(z_hat.size()), 2 * k}, torch::kDouble);
    for (std::size_t i = 0; i < z_hat.size(); ++i) {
        if (static_cast<std::int64_t>(z_hat[i].k()) != k)
            throw InvalidArgument("decode: expected " + std::to_string(k) + " symbols, got " +
                                  std::to_string(z_hat[i].k()));
        auto v = channel::unpack_complex(z_hat[i]);
        auto* dst = reals[static_cast<std::int64_t>(i)].data_ptr<double>();
        std::copy(v.begin(), v.end(), dst);
    }
    torch::NoGradGuard no_grad;
    return net->decoder_forward(reals.to(torch::kFloat));
}

torch::Tensor degrade(const torch::Tensor& x, JsccNet& net, const channel::ChannelConfig& channel, Rng& rng) {
    auto z = encode(x, net);
    auto z_hat = channel::transmit_awgn(z, channel.noise_variance(), rng);
    return decode(z_hat, net);
}

torch::Tensor degrade_batch(const torch::Tensor& x, JsccNet& net, const channel::ChannelConfig& channel,
                            const std::vector<std::uint64_t>& seeds) {
    if (static_cast<std::int64_t>(seeds.size()) != x.size(0))
        throw InvalidArgument("degrade_batch: need one seed per image");
    auto symbols = encode_batch(x, net);
    const double var = channel.noise_variance();
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        Rng rng(seeds[i]);
        symbols[i] = channel::transmit_awgn(symbols[i], var, rng);
    }
    return decode_batch(symbols, net);
}

namespace {

// Fixed held-in probe: images, per-image SNR and channel noise are frozen so
// the same number is measured before and after training.
struct Probe {
    torch::Tensor images;
    torch::Tensor noise_variance;
    std::uint64_t noise_seed = 0;

    double loss(JsccNet& net) const {
        torch::NoGradGuard no_grad;
        auto gen = make_generator(noise_seed);
        return batch_distortion(images, net->channel_forward(images, noise_variance, gen)).item<double>();
    }
};

Probe make_probe(const torch::Tensor& images, const JsccConfig& config, std::uint64_t seed) {
    const std::int64_t n = std::min<std::int64_t>(images.size(0), 64);
    auto gen = make_generator(derive_seed(seed, {1}));
    auto idx = torch::randperm(images.size(0), gen, torch::kLong).slice(0, 0, n);
    SnrSampler snr(config.snr_lo_db, config.snr_hi_db, derive_seed(seed, {2}));
    auto var = torch::empty({n}, torch::kDouble);
    for (std::int64_t i = 0; i < n; ++i)
        var[i] = channel::noise_variance_from_snr(snr(), config.avg_power);
    return {images.index_select(0, idx), var, derive_seed(seed, {3})};
}

}  // namespace

JsccTrainResult train_jscc(const torch::Tensor& images, const JsccConfig& config, const OptimizerSettings& opt,
                           std::uint64_t seed) {
    if (!images.defined() || images.size(0) == 0) throw InvalidArgument("train_jscc: empty dataset");
    check_image_batch(images, config.image, "train_jscc");
    auto net = make_jscc(config, derive_seed(seed, {0}));
    const auto probe = make_probe(images, config, seed);

    TrainingReport report;
    report.model = "jscc";
    report.steps = opt.steps;
    report.initial_loss = probe.loss(net);

    torch::optim::Adam adam(net->parameters(), torch::optim::AdamOptions(opt.lr));
    auto batch_gen = make_generator(derive_seed(seed, {4}));
    auto noise_gen = make_generator(derive_seed(seed, {5}));
    SnrSampler snr(config.snr_lo_db, config.snr_hi_db, derive_seed(seed, {6}));
    report.curve.reserve(static_cast<std::size_t>(opt.steps));

    for (std::int64_t step = 1; step <= opt.steps; ++step) {
        auto x = images.index_select(0, sample_indices(images.size(0), opt.batch_size, batch_gen));
        const double snr_db = snr();
        auto var = torch::full({1}, channel::noise_variance_from_snr(snr_db, config.avg_power), torch::kDouble);
        adam.zero_grad();
        auto loss = batch_distortion(x, net->channel_forward(x, var, noise_gen));
        loss.backward();
        adam.step();
        const double l = loss.item<double>();
        if (!std::isfinite(l))
            throw TrainingDiverged("jscc: loss became non-finite at step " + std::to_string(step) +
                                   " (batch SNR " + std::to_string(snr_db) + " dB, lr " + std::to_string(opt.lr) +
                                   ")");
        report.curve.push_back(l);
        if (opt.progress && opt.log_every > 0 && step % opt.log_every == 0) opt.progress(step, l);
    }
    report.final_loss = probe.loss(net);
    return {net, report};
}

}  // namespace commin::jscc
