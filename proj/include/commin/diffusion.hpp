#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

#include "commin/tensor_utils.hpp"
#include "commin/training.hpp"

namespace commin::diffusion {

// Scalars that drive one reverse step from t to t-1.
struct StepCoefficients {
    double alpha = 1.0;
    double alpha_bar = 1.0;
    double alpha_bar_prev = 1.0;
    double beta = 0.0;
    double sigma = 0.0;

    // sqrt(alpha_t) (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
    double x_t_weight() const;
    // sqrt(alpha_bar_{t-1}) beta_t / (1 - alpha_bar_t)
    double x0_weight() const;
};

// Linear beta schedule with alpha, alpha_bar and sigma tables indexed by
// t in [1, T]; alpha_bar(0) == 1. sigma_t is the posterior standard deviation
// sqrt(beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)).
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    NoiseSchedule(std::int64_t steps, double beta_start, double beta_end);

    std::int64_t steps() const noexcept { return steps_; }
    double beta_start() const noexcept { return beta_start_; }
    double beta_end() const noexcept { return beta_end_; }

    double beta(std::int64_t t) const { return beta_[checked(t)]; }
    double alpha(std::int64_t t) const { return 1.0 - beta_[checked(t)]; }
    double alpha_bar(std::int64_t t) const;  // accepts t == 0
    double sigma(std::int64_t t) const { return sigma_[checked(t)]; }
    StepCoefficients coefficients(std::int64_t t) const;

private:
    std::size_t checked(std::int64_t t) const;

    std::int64_t steps_ = 0;
    double beta_start_ = 0.0;
    double beta_end_ = 0.0;
    std::vector<double> beta_;       // index t, entry 0 unused
    std::vector<double> alpha_bar_;  // index t, entry 0 == 1
    std::vector<double> sigma_;
};

NoiseSchedule build_schedule(std::int64_t steps, double beta_start, double beta_end);

// x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps
torch::Tensor forward_noising(const torch::Tensor& x0, const torch::Tensor& eps, double alpha_bar);
torch::Tensor forward_noising(const torch::Tensor& x0, std::int64_t t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule);

// x_{0,t} = (x_t - sqrt(1 - alpha_bar) eps_hat) / sqrt(alpha_bar)
torch::Tensor predict_x0(const torch::Tensor& x_t, const torch::Tensor& eps_hat, double alpha_bar);
torch::Tensor predict_x0(const torch::Tensor& x_t, std::int64_t t, const torch::Tensor& eps_hat,
                         const NoiseSchedule& schedule);

// x_{t-1} = x_t_weight x_t + x0_weight x_{0,t} + sigma_t z
torch::Tensor ancestral_step(const torch::Tensor& x_t, const torch::Tensor& x0, const torch::Tensor& z,
                             const StepCoefficients& c);
torch::Tensor ancestral_step(const torch::Tensor& x_t, const torch::Tensor& x0, std::int64_t t,
                             const torch::Tensor& z, const NoiseSchedule& schedule);

struct DenoiserConfig {
    ImageShape image{32, 32, 3};
    std::int64_t base_width = 32;

    void validate() const;
};

class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t temb_dim);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

private:
    torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
    torch::nn::Linear temb_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

// Two-level residual U-Net noise predictor eps_theta(x_t, t) with a
// sinusoidal timestep embedding. Output has the shape of x_t.
class DenoiserImpl : public torch::nn::Module {
public:
    explicit DenoiserImpl(const DenoiserConfig& config);

    // x_t: [N,C,H,W]; t: [N] integer timesteps in [1, T].
    torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t);
    torch::Tensor forward(const torch::Tensor& x_t, std::int64_t t);

    const DenoiserConfig& config() const noexcept { return config_; }

private:
    DenoiserConfig config_;
    torch::nn::Linear temb1_{nullptr}, temb2_{nullptr};
    torch::nn::Conv2d conv_in_{nullptr}, down0_{nullptr}, down1_{nullptr};
    torch::nn::Conv2d up1_{nullptr}, up0_{nullptr}, conv_out_{nullptr};
    ResBlock enc0_{nullptr}, enc1_{nullptr}, mid0_{nullptr}, mid1_{nullptr}, dec1_{nullptr}, dec0_{nullptr};
    torch::nn::GroupNorm norm_out_{nullptr};
};
TORCH_MODULE(Denoiser);

Denoiser make_denoiser(const DenoiserConfig& config, std::uint64_t seed);

// Sinusoidal embedding of integer timesteps, [N] -> [N, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, std::int64_t dim, torch::ScalarType dtype);

struct DenoiserTrainResult {
    Denoiser net;
    TrainingReport report;
};

// Epsilon-matching objective E ||eps - eps_theta(x_t, t)||^2 with t uniform in
// [1, T]. With ema_decay > 0 the returned weights are the exponential moving
// average of the iterates.
DenoiserTrainResult train_denoiser(const torch::Tensor& images, const NoiseSchedule& schedule,
                                   const DenoiserConfig& config, const OptimizerSettings& opt, std::uint64_t seed,
                                   double ema_decay = 0.0);

// Independent Gaussian streams, one per batch item, so a sample depends only
// on its own seed and never on the batch it is drawn in.
class NoiseSource {
public:
    explicit NoiseSource(const std::vector<std::uint64_t>& seeds);
    NoiseSource(std::uint64_t seed, std::int64_t count);

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(gens_.size()); }
    // [size(), C, H, W] standard normal draw.
    torch::Tensor normal(const ImageShape& shape);

private:
    std::vector<torch::Generator> gens_;
};

// Called with (t, x_t) before each reverse step; the final call has t == 0.
using StepObserver = std::function<void(std::int64_t, const torch::Tensor&)>;

torch::Tensor sample_unconditional(Denoiser& denoiser, const NoiseSchedule& schedule, NoiseSource& noise,
                                   const StepObserver& observer = {});

}  // namespace commin::diffusion
