#include "commin/diffusion.hpp"

#include <cmath>
#include <string>

#include "commin/error.hpp"
#include "commin/random.hpp"

namespace commin::diffusion {

namespace nn = torch::nn;

double StepCoefficients::x_t_weight() const {
    return std::sqrt(alpha) * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar);
}

double StepCoefficients::x0_weight() const { return std::sqrt(alpha_bar_prev) * beta / (1.0 - alpha_bar); }

NoiseSchedule::NoiseSchedule(std::int64_t steps, double beta_start, double beta_end)
    : steps_(steps), beta_start_(beta_start), beta_end_(beta_end) {
    if (steps < 1) throw InvalidArgument("noise schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw InvalidArgument("noise schedule: need 0 < beta_start <= beta_end < 1");
    const auto n = static_cast<std::size_t>(steps) + 1;
    beta_.assign(n, 0.0);
    alpha_bar_.assign(n, 1.0);
    sigma_.assign(n, 0.0);
    for (std::int64_t t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        const auto i = static_cast<std::size_t>(t);
        beta_[i] = beta_start + (beta_end - beta_start) * frac;
        alpha_bar_[i] = alpha_bar_[i - 1] * (1.0 - beta_[i]);
        sigma_[i] = std::sqrt(beta_[i] * (1.0 - alpha_bar_[i - 1]) / (1.0 - alpha_bar_[i]));
    }
}

std::size_t NoiseSchedule::checked(std::int64_t t) const {
    if (t < 1 || t > steps_)
        throw InvalidArgument("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps_) + "]");
    return static_cast<std::size_t>(t);
}

double NoiseSchedule::alpha_bar(std::int64_t t) const {
    if (t == 0) return 1.0;
    return alpha_bar_[checked(t)];
}

StepCoefficients NoiseSchedule::coefficients(std::int64_t t) const {
    const auto i = checked(t);
    return {1.0 - beta_[i], alpha_bar_[i], alpha_bar_[i - 1], beta_[i], sigma_[i]};
}

NoiseSchedule build_schedule(std::int64_t steps, double beta_start, double beta_end) {
    return NoiseSchedule(steps, beta_start, beta_end);
}

torch::Tensor forward_noising(const torch::Tensor& x0, const torch::Tensor& eps, double alpha_bar) {
    if (x0.sizes() != eps.sizes()) throw InvalidArgument("forward_noising: eps shape differs from x0");
    return std::sqrt(alpha_bar) * x0 + std::sqrt(1.0 - alpha_bar) * eps;
}

torch::Tensor forward_noising(const torch::Tensor& x0, std::int64_t t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule) {
    return forward_noising(x0, eps, schedule.coefficients(t).alpha_bar);
}

torch::Tensor predict_x0(const torch::Tensor& x_t, const torch::Tensor& eps_hat, double alpha_bar) {
    if (!(alpha_bar > 0.0)) throw InvalidArgument("predict_x0: alpha_bar must be positive");
    return (x_t - std::sqrt(1.0 - alpha_bar) * eps_hat) / std::sqrt(alpha_bar);
}

torch::Tensor predict_x0(const torch::Tensor& x_t, std::int64_t t, const torch::Tensor& eps_hat,
                         const NoiseSchedule& schedule) {
    return predict_x0(x_t, eps_hat, schedule.coefficients(t).alpha_bar);
}

torch::Tensor ancestral_step(const torch::Tensor& x_t, const torch::Tensor& x0, const torch::Tensor& z,
                             const StepCoefficients& c) {
    return c.x_t_weight() * x_t + c.x0_weight() * x0 + c.sigma * z;
}

torch::Tensor ancestral_step(const torch::Tensor& x_t, const torch::Tensor& x0, std::int64_t t,
                             const torch::Tensor& z, const NoiseSchedule& schedule) {
    return ancestral_step(x_t, x0, z, schedule.coefficients(t));
}

void DenoiserConfig::validate() const {
    if (image.height % 4 != 0 || image.width % 4 != 0)
        throw InvalidArgument("denoiser: image " + image.str() + " must be divisible by 4");
    if (base_width < 8 || base_width % 4 != 0) throw InvalidArgument("denoiser: base_width must be a multiple of 4, >= 8");
}

ResBlockImpl::ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t temb_dim)
    : norm1_(nn::GroupNormOptions(group_count(in), in)),
      norm2_(nn::GroupNormOptions(group_count(out), out)),
      conv1_(conv3x3(in, out)),
      conv2_(conv3x3(out, out)),
      temb_proj_(temb_dim, out) {
    zero_init(conv2_);
    register_module("norm1", norm1_);
    register_module("norm2", norm2_);
    register_module("conv1", conv1_);
    register_module("conv2", conv2_);
    register_module("temb_proj", temb_proj_);
    if (in != out) skip_ = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
    auto h = conv1_->forward(torch::silu(norm1_->forward(x)));
    h = h + temb_proj_->forward(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2_->forward(torch::silu(norm2_->forward(h)));
    return (skip_ ? skip_->forward(x) : x) + h;
}

DenoiserImpl::DenoiserImpl(const DenoiserConfig& config) : config_(config) {
    config_.validate();
    const auto b = config.base_width;
    const auto c = config.image.channels;
    const auto temb = 4 * b;
    temb1_ = register_module("temb1", nn::Linear(b, temb));
    temb2_ = register_module("temb2", nn::Linear(temb, temb));
    conv_in_ = register_module("conv_in", conv3x3(c, b));
    enc0_ = register_module("enc0", ResBlock(b, b, temb));
    down0_ = register_module("down0", conv3x3(b, b, 2));
    enc1_ = register_module("enc1", ResBlock(b, 2 * b, temb));
    down1_ = register_module("down1", conv3x3(2 * b, 2 * b, 2));
    mid0_ = register_module("mid0", ResBlock(2 * b, 2 * b, temb));
    mid1_ = register_module("mid1", ResBlock(2 * b, 2 * b, temb));
    up1_ = register_module("up1", conv3x3(2 * b, 2 * b));
    dec1_ = register_module("dec1", ResBlock(4 * b, 2 * b, temb));
    up0_ = register_module("up0", conv3x3(2 * b, 2 * b));
    dec0_ = register_module("dec0", ResBlock(3 * b, b, temb));
    norm_out_ = register_module("norm_out", nn::GroupNorm(nn::GroupNormOptions(group_count(b), b)));
    conv_out_ = register_module("conv_out", conv3x3(b, c));
    zero_init(conv_out_);
}

torch::Tensor timestep_embedding(const torch::Tensor& t, std::int64_t dim, torch::ScalarType dtype) {
    const auto half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::TensorOptions().dtype(dtype)) /
                            static_cast<double>(half));
    auto args = t.to(dtype).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& x_t, const torch::Tensor& t) {
    check_image_batch(x_t, config_.image, "denoiser");
    if (t.dim() != 1 || t.size(0) != x_t.size(0)) throw InvalidArgument("denoiser: need one timestep per item");
    auto temb = timestep_embedding(t, config_.base_width, x_t.scalar_type());
    temb = temb2_->forward(torch::silu(temb1_->forward(temb)));

    auto h0 = enc0_->forward(conv_in_->forward(x_t), temb);
    auto h1 = enc1_->forward(down0_->forward(h0), temb);
    auto h = mid1_->forward(mid0_->forward(down1_->forward(h1), temb), temb);
    const auto up = nn::functional::InterpolateFuncOptions()
                        .scale_factor(std::vector<double>{2.0, 2.0})
                        .mode(torch::kNearest);
    h = up1_->forward(nn::functional::interpolate(h, up));
    h = dec1_->forward(torch::cat({h, h1}, 1), temb);
    h = up0_->forward(nn::functional::interpolate(h, up));
    h = dec0_->forward(torch::cat({h, h0}, 1), temb);
    return conv_out_->forward(torch::silu(norm_out_->forward(h)));
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& x_t, std::int64_t t) {
    return forward(x_t, torch::full({x_t.size(0)}, t, torch::kLong));
}

Denoiser make_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
    SeededInit init(seed);
    return Denoiser(config);
}

namespace {

void ema_update(Denoiser& ema, Denoiser& live, double decay) {
    torch::NoGradGuard no_grad;
    auto dst = ema->parameters();
    auto src = live->parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].mul_(decay).add_(src[i], 1.0 - decay);
}

void copy_weights(Denoiser& dst, Denoiser& src) {
    torch::NoGradGuard no_grad;
    auto d = dst->parameters();
    auto s = src->parameters();
    for (std::size_t i = 0; i < d.size(); ++i) d[i].copy_(s[i]);
}

}  // namespace

DenoiserTrainResult train_denoiser(const torch::Tensor& images, const NoiseSchedule& schedule,
                                   const DenoiserConfig& config, const OptimizerSettings& opt, std::uint64_t seed,
                                   double ema_decay) {
    if (!images.defined() || images.size(0) == 0) throw InvalidArgument("train_denoiser: empty dataset");
    check_image_batch(images, config.image, "train_denoiser");
    const auto init_seed = derive_seed(seed, {0});
    auto net = make_denoiser(config, init_seed);
    Denoiser ema{nullptr};
    if (ema_decay > 0.0) {
        ema = make_denoiser(config, init_seed);
        copy_weights(ema, net);
    }

    // Held-in probe with frozen (x0, t, eps).
    const std::int64_t probe_n = std::min<std::int64_t>(images.size(0), 64);
    auto probe_gen = make_generator(derive_seed(seed, {1}));
    auto probe_x0 = images.index_select(0, sample_indices(images.size(0), probe_n, probe_gen));
    auto probe_t = torch::randint(1, schedule.steps() + 1, {probe_n}, probe_gen, torch::kLong);
    auto probe_eps = torch::randn(probe_x0.sizes(), probe_gen, probe_x0.options());
    auto alpha_bar_of = [&](const torch::Tensor& t) {
        auto ab = torch::empty({t.size(0)}, torch::kDouble);
        for (std::int64_t i = 0; i < t.size(0); ++i) ab[i] = schedule.alpha_bar(t[i].item<std::int64_t>());
        return ab.to(images.scalar_type()).view({-1, 1, 1, 1});
    };
    auto noised = [](const torch::Tensor& x0, const torch::Tensor& eps, const torch::Tensor& ab) {
        return torch::sqrt(ab) * x0 + torch::sqrt(1.0 - ab) * eps;
    };
    const auto probe_xt = noised(probe_x0, probe_eps, alpha_bar_of(probe_t));
    auto probe_loss = [&](Denoiser& d) {
        torch::NoGradGuard no_grad;
        return (d->forward(probe_xt, probe_t) - probe_eps).pow(2).mean().item<double>();
    };

    TrainingReport report;
    report.model = "denoiser";
    report.steps = opt.steps;
    report.initial_loss = probe_loss(net);

    torch::optim::Adam adam(net->parameters(), torch::optim::AdamOptions(opt.lr));
    auto gen = make_generator(derive_seed(seed, {2}));
    for (std::int64_t step = 1; step <= opt.steps; ++step) {
        auto x0 = images.index_select(0, sample_indices(images.size(0), opt.batch_size, gen));
        auto t = torch::randint(1, schedule.steps() + 1, {opt.batch_size}, gen, torch::kLong);
        auto eps = torch::randn(x0.sizes(), gen, x0.options());
        adam.zero_grad();
        auto loss = (net->forward(noised(x0, eps, alpha_bar_of(t)), t) - eps).pow(2).mean();
        loss.backward();
        nn::utils::clip_grad_norm_(net->parameters(), 1.0);
        adam.step();
        if (ema) {
            const double warm = (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step));
            ema_update(ema, net, std::min(ema_decay, warm));
        }
        const double l = loss.item<double>();
        check_finite_loss(l, "denoiser", step);
        report.curve.push_back(l);
        if (opt.progress && opt.log_every > 0 && step % opt.log_every == 0) opt.progress(step, l);
    }
    Denoiser result = ema ? ema : net;
    report.final_loss = probe_loss(result);
    return {result, report};
}

NoiseSource::NoiseSource(const std::vector<std::uint64_t>& seeds) {
    gens_.reserve(seeds.size());
    for (auto s : seeds) gens_.push_back(make_generator(s));
}

NoiseSource::NoiseSource(std::uint64_t seed, std::int64_t count) {
    for (std::int64_t i = 0; i < count; ++i)
        gens_.push_back(make_generator(derive_seed(seed, {static_cast<std::uint64_t>(i)})));
}

torch::Tensor NoiseSource::normal(const ImageShape& shape) {
    std::vector<torch::Tensor> parts;
    parts.reserve(gens_.size());
    for (auto& g : gens_) parts.push_back(torch::randn({1, shape.channels, shape.height, shape.width}, g));
    return torch::cat(parts, 0);
}

torch::Tensor sample_unconditional(Denoiser& denoiser, const NoiseSchedule& schedule, NoiseSource& noise,
                                   const StepObserver& observer) {
    torch::NoGradGuard no_grad;
    const auto shape = denoiser->config().image;
    auto x = noise.normal(shape);
    for (std::int64_t t = schedule.steps(); t >= 1; --t) {
        if (observer) observer(t, x);
        auto z = t > 1 ? noise.normal(shape) : torch::zeros_like(x);
        auto x0 = predict_x0(x, t, denoiser->forward(x, t), schedule);
        x = ancestral_step(x, x0, t, z, schedule);
    }
    if (observer) observer(0, x);
    return x;
}

}  // namespace commin::diffusion
