#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "commin/channel.hpp"
#include "commin/random.hpp"
#include "commin/tensor_utils.hpp"
#include "commin/training.hpp"

// DeepJSCC autoencoder: learned encoder f_theta, learned decoder g_phi, joint
// MSE training through a differentiable AWGN channel, and the composed
// degradation operator y = g(eta(f(x), sigma^2)).
namespace commin::jscc {

struct JsccConfig {
    ImageShape image{32, 32, 3};
    std::int64_t k = 4;            // complex channel symbols
    std::int64_t base_width = 32;  // first conv width; doubled once after the first stage
    std::int64_t stages = 3;       // stride-2 downsampling stages
    double snr_lo_db = -5.0;
    double snr_hi_db = 5.0;
    double avg_power = 1.0;

    std::int64_t m() const noexcept { return image.numel(); }
    double rho() const;
    void validate() const;
};

// Bandwidth compression ratio k/m.
double bcr(std::int64_t m, std::int64_t k);

// Mean squared error over every element of the batch. For equally sized
// samples this is the mean over samples of per-sample MSEs.
torch::Tensor batch_distortion(const torch::Tensor& x, const torch::Tensor& x_hat);

// Uniform per-batch SNR draws over [lo, hi] dB.
class SnrSampler {
public:
    SnrSampler(double lo_db, double hi_db, std::uint64_t seed);
    double operator()();

private:
    Rng rng_;
    std::uniform_real_distribution<double> dist_;
};

class JsccNetImpl : public torch::nn::Module {
public:
    explicit JsccNetImpl(const JsccConfig& config);

    // [N,C,H,W] -> [N,2k] raw (un-normalised) encoder output z~.
    torch::Tensor encoder_forward(const torch::Tensor& x);
    // [N,2k] received reals -> [N,C,H,W] reconstruction.
    torch::Tensor decoder_forward(const torch::Tensor& z_hat);
    // Differentiable end-to-end pass: per-sample power normalisation, additive
    // complex Gaussian noise with per-sample variance `noise_variance` ([N] or
    // scalar), decode.
    torch::Tensor channel_forward(const torch::Tensor& x, const torch::Tensor& noise_variance,
                                  torch::Generator& gen);

    const JsccConfig& config() const noexcept { return config_; }

private:
    JsccConfig config_;
    std::int64_t bottleneck_channels_ = 0;
    std::int64_t bottleneck_size_ = 0;
    torch::nn::Sequential encoder_{nullptr};
    torch::nn::Linear encoder_head_{nullptr};
    torch::nn::Linear decoder_head_{nullptr};
    torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(JsccNet);

JsccNet make_jscc(const JsccConfig& config, std::uint64_t seed);

// Single image ([C,H,W] or [1,C,H,W]) -> k power-normalised symbols.
channel::ChannelSymbols encode(const torch::Tensor& x, JsccNet& net);
std::vector<channel::ChannelSymbols> encode_batch(const torch::Tensor& x, JsccNet& net);

// k received symbols -> [C,H,W] reconstruction.
torch::Tensor decode(const channel::ChannelSymbols& z_hat, JsccNet& net);
torch::Tensor decode_batch(const std::vector<channel::ChannelSymbols>& z_hat, JsccNet& net);

// y = decode(transmit_awgn(encode(x), sigma^2, rng)).
torch::Tensor degrade(const torch::Tensor& x, JsccNet& net, const channel::ChannelConfig& channel, Rng& rng);
// Batched degrade; image i uses its own Rng seeded with seeds[i].
torch::Tensor degrade_batch(const torch::Tensor& x, JsccNet& net, const channel::ChannelConfig& channel,
                            const std::vector<std::uint64_t>& seeds);

struct JsccTrainResult {
    JsccNet net;
    TrainingReport report;
};

// Joint encoder/decoder training on `images` ([N,C,H,W] in [-1,1]) under
// channel SNR drawn uniformly per batch from [snr_lo_db, snr_hi_db].
JsccTrainResult train_jscc(const torch::Tensor& images, const JsccConfig& config, const OptimizerSettings& opt,
                           std::uint64_t seed);

}  // namespace commin::jscc
