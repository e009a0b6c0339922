#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "commin/diffusion.hpp"
#include "commin/inn.hpp"

// DDPM sampling with INN guidance. At every step the clean estimate x_{0,t}
// is decomposed by the INN, its coarse part is replaced by the measurement's
// coarse content, and x_t is pushed along the gradient of the resulting
// consistency residual:
//
//   x_{t-1} = x~_{t-1} - zeta * grad_{x_t} || INN^-1(coarse(y), d_t) - x_{0,t} ||^2
namespace commin::guided {

struct ZetaEntry {
    double snr_db = 0.0;
    double zeta = 0.0;
};

// SNR -> step size lookup. Off-grid SNRs use the nearest entry; an exact tie
// goes to the lower SNR entry.
class ZetaTable {
public:
    ZetaTable();  // {-5,-3} -> 0.3, {-1,1} -> 0.4, {3,5} -> 0.5
    explicit ZetaTable(std::vector<ZetaEntry> entries);

    double select(double snr_db) const;
    const std::vector<ZetaEntry>& entries() const noexcept { return entries_; }

private:
    std::vector<ZetaEntry> entries_;
};

double select_zeta(double snr_db);

enum class GradientMode {
    Full,             // differentiate through eps_theta and both INN passes
    StopMeasurement,  // treat the INN-corrected estimate as a constant target
};

struct GuidanceConfig {
    double zeta = 0.0;
    GradientMode mode = GradientMode::Full;
    // Setting of the measurement y and of the INN; checked for equality when both are present.
    std::optional<inn::DegradationSetting> measurement_setting;
    std::optional<inn::DegradationSetting> inn_setting;
};

struct GuidanceTerms {
    torch::Tensor x0;        // x_{0,t}, detached
    torch::Tensor x0_hat;    // INN-corrected estimate, detached
    torch::Tensor gradient;  // d/dx_t of the squared residual
    double residual = 0.0;   // ||x0_hat - x0||^2 summed over the batch
};

// Guidance quantities for a given coarse measurement (coarse_target(y)).
GuidanceTerms guidance_terms(const torch::Tensor& x_t, std::int64_t t, const torch::Tensor& coarse_y,
                             diffusion::Denoiser& denoiser, inn::DegradationInn& inn,
                             const diffusion::NoiseSchedule& schedule, GradientMode mode = GradientMode::Full);

torch::Tensor guidance_gradient(const torch::Tensor& x_t, std::int64_t t, const torch::Tensor& y,
                                diffusion::Denoiser& denoiser, inn::DegradationInn& inn,
                                const diffusion::NoiseSchedule& schedule, GradientMode mode = GradientMode::Full);

// Full guided sampling loop for a batch of measurements y ([N,C,H,W]); noise
// must provide N streams.
torch::Tensor commin_sample(const torch::Tensor& y, diffusion::Denoiser& denoiser, inn::DegradationInn& inn,
                            const diffusion::NoiseSchedule& schedule, const GuidanceConfig& config,
                            diffusion::NoiseSource& noise, const diffusion::StepObserver& observer = {});

}  // namespace commin::guided
