#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "commin/tensor_utils.hpp"
#include "commin/training.hpp"

// Lifting-scheme invertible network that splits an image into a coarse part
// (trained to resemble the degraded observation) and per-level detail bands.
//
// Per level: 2x2 squeeze (space-to-channel, channel index q*C + c with
// q = 2*dy + dx), split into the first C channels (coarse) and the remaining
// 3C (detail), then `pairs` rounds of
//     detail -= P(coarse);  coarse += U(detail)
// The inverse runs the rounds backwards with the signs flipped, so it is exact
// for any parameter values of P and U.
namespace commin::inn {

struct InnConfig {
    ImageShape image{32, 32, 3};
    std::int64_t levels = 1;
    std::int64_t pairs = 2;
    std::int64_t hidden = 32;

    void validate() const;
    ImageShape coarse_shape() const;
};

struct Decomposition {
    torch::Tensor coarse;               // [N, C, H/2^L, W/2^L]
    std::vector<torch::Tensor> details;  // level l (1-based): [N, 3C, H/2^l, W/2^l]

    // Elements per sample across coarse and every detail band.
    std::int64_t numel_per_sample() const;
};

// The degradation setting a pair set (and the INN trained on it) belongs to.
struct DegradationSetting {
    double snr_db = 0.0;
    double rho = 0.0;
    std::string jscc_id;

    bool operator==(const DegradationSetting&) const = default;
    std::string str() const;
};

torch::Tensor squeeze2x2(const torch::Tensor& x);
torch::Tensor unsqueeze2x2(const torch::Tensor& x);

// Conv residual block used for both predict (C -> 3C) and update (3C -> C).
// The output conv starts at zero.
class LiftingNetImpl : public torch::nn::Module {
public:
    LiftingNetImpl(std::int64_t in, std::int64_t out, std::int64_t hidden);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d head_{nullptr}, body1_{nullptr}, body2_{nullptr}, tail_{nullptr};
};
TORCH_MODULE(LiftingNet);

class DegradationInnImpl : public torch::nn::Module {
public:
    explicit DegradationInnImpl(const InnConfig& config);

    Decomposition forward(const torch::Tensor& x);
    torch::Tensor inverse(const torch::Tensor& coarse, const std::vector<torch::Tensor>& details);
    torch::Tensor inverse(const Decomposition& dec) { return inverse(dec.coarse, dec.details); }

    const InnConfig& config() const noexcept { return config_; }
    // Overwrite every parameter with N(0, scale^2) draws; used by invertibility tests.
    void randomize(torch::Generator& gen, double scale);

private:
    InnConfig config_;
    // predict_[level][pair], update_[level][pair]
    std::vector<std::vector<LiftingNet>> predict_;
    std::vector<std::vector<LiftingNet>> update_;
};
TORCH_MODULE(DegradationInn);

DegradationInn make_inn(const InnConfig& config, std::uint64_t seed);

// Average-pool y by 2^levels per spatial axis: the target for the coarse part.
torch::Tensor coarse_target(const torch::Tensor& y, std::int64_t levels);

// (1/N) sum_i ||c_i - coarse_target(y_i)||^2
torch::Tensor coarse_loss(const torch::Tensor& coarse, const torch::Tensor& target);

// Per-element RMSE between the INN coarse part of x and coarse_target(y).
double coarse_rmse(DegradationInn& inn, const torch::Tensor& x, const torch::Tensor& y);

// max |inverse(forward(x)) - x|
double roundtrip_error(DegradationInn& inn, const torch::Tensor& x);

struct InnTrainResult {
    DegradationInn inn;
    TrainingReport report;
};

// Trains one INN on (x_i, y_i) pairs that all come from the same degradation
// setting; a mixed set throws InvalidArgument.
InnTrainResult train_inn(const torch::Tensor& x, const torch::Tensor& y,
                         const std::vector<DegradationSetting>& settings, const InnConfig& config,
                         const OptimizerSettings& opt, std::uint64_t seed);

}  // namespace commin::inn
