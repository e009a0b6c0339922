#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "commin/tensor_utils.hpp"
#include "commin/training.hpp"

// Distortion and perceptual-quality measurement. All image arguments are on
// the [0, 1] scale; map model outputs with to_unit_range() first.
namespace commin::metrics {

// PSNR of two identical images.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

double mse_metric(const torch::Tensor& x, const torch::Tensor& x_hat);
double psnr_from_mse(double mse);
double psnr(const torch::Tensor& x, const torch::Tensor& x_hat);

// Per-image values for [N,C,H,W] batches.
std::vector<double> mse_per_image(const torch::Tensor& x, const torch::Tensor& x_hat);
std::vector<double> psnr_per_image(const torch::Tensor& x, const torch::Tensor& x_hat);

struct MetricReport {
    std::string image_id;
    std::string method;
    double snr_db = 0.0;
    double rho = 0.0;
    double mse = 0.0;
    double psnr_db = 0.0;
    double perceptual = 0.0;
};

struct ExtractorConfig {
    ImageShape image{32, 32, 3};
    std::int64_t base_width = 16;
};

// Small conv net with feature taps at three depths (full, 1/2 and 1/4
// resolution). The head is only used for training. lin{0,1,2} are per-channel
// weights applied to squared feature differences; they are all ones unless an
// external weight file overrides them.
class FeatureExtractorImpl : public torch::nn::Module {
public:
    static constexpr std::int64_t kRotations = 4;

    explicit FeatureExtractorImpl(const ExtractorConfig& config);

    // x in [0, 1]
    std::vector<torch::Tensor> features(const torch::Tensor& x);
    torch::Tensor logits(const torch::Tensor& x);
    const std::vector<torch::Tensor>& channel_weights() const noexcept { return lin_; }
    const ExtractorConfig& config() const noexcept { return config_; }

private:
    ExtractorConfig config_;
    torch::nn::Sequential stage0_{nullptr}, stage1_{nullptr}, stage2_{nullptr};
    torch::nn::Linear head_{nullptr};
    std::vector<torch::Tensor> lin_;
};
TORCH_MODULE(FeatureExtractor);

FeatureExtractor make_extractor(const ExtractorConfig& config, std::uint64_t seed);

// sum_l mean_hw || w_l * (f^_l(x) - f^_l(x_hat)) ||^2 with f^ the features
// unit-normalised over channels at every position. One value per image.
std::vector<double> perceptual_distance_batch(const torch::Tensor& x, const torch::Tensor& x_hat,
                                              FeatureExtractor& extractor);
double perceptual_distance(const torch::Tensor& x, const torch::Tensor& x_hat, FeatureExtractor& extractor);

struct ExtractorTrainResult {
    FeatureExtractor net;
    TrainingReport report;
};

// Label-free training: predict which of four 90-degree rotations was applied.
// `images` are in [-1, 1] like every dataset tensor.
ExtractorTrainResult train_extractor(const torch::Tensor& images, const ExtractorConfig& config,
                                     const OptimizerSettings& opt, std::uint64_t seed);

}  // namespace commin::metrics
