#include "commin/guided_sampler.hpp"

#include <algorithm>
#include <cmath>

#include "commin/error.hpp"

namespace commin::guided {

ZetaTable::ZetaTable() : ZetaTable({{-5, 0.3}, {-3, 0.3}, {-1, 0.4}, {1, 0.4}, {3, 0.5}, {5, 0.5}}) {}

ZetaTable::ZetaTable(std::vector<ZetaEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw InvalidArgument("zeta table is empty");
    for (const auto& e : entries_) {
        if (!(e.zeta >= 0.0)) throw InvalidArgument("zeta must be >= 0");
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const ZetaEntry& a, const ZetaEntry& b) { return a.snr_db < b.snr_db; });
}

double ZetaTable::select(double snr_db) const {
    const ZetaEntry* best = &entries_.front();
    for (const auto& e : entries_) {
        // strict '<' keeps the lower-SNR entry on ties (entries are sorted)
        if (std::abs(e.snr_db - snr_db) < std::abs(best->snr_db - snr_db)) best = &e;
    }
    return best->zeta;
}

double select_zeta(double snr_db) {
    static const ZetaTable table;
    return table.select(snr_db);
}

GuidanceTerms guidance_terms(const torch::Tensor& x_t, std::int64_t t, const torch::Tensor& coarse_y,
                             diffusion::Denoiser& denoiser, inn::DegradationInn& inn,
                             const diffusion::NoiseSchedule& schedule, GradientMode mode) {
    if (!denoiser) throw MissingArtifact("guidance: denoiser is not loaded");
    if (!inn) throw MissingArtifact("guidance: INN is not loaded");
    torch::AutoGradMode enable(true);
    auto xt = x_t.detach().requires_grad_(true);
    auto x0 = diffusion::predict_x0(xt, t, denoiser->forward(xt, t), schedule);
    auto dec = inn->forward(x0);
    if (coarse_y.sizes() != dec.coarse.sizes())
        throw InvalidArgument("guidance: coarse measurement shape does not match the INN coarse band");
    auto x0_hat = inn->inverse(coarse_y, dec.details);
    if (mode == GradientMode::StopMeasurement) x0_hat = x0_hat.detach();
    auto loss = (x0_hat - x0).pow(2).sum();
    auto grad = torch::autograd::grad({loss}, {xt})[0];
    return {x0.detach(), x0_hat.detach(), grad, loss.item<double>()};
}

torch::Tensor guidance_gradient(const torch::Tensor& x_t, std::int64_t t, const torch::Tensor& y,
                                diffusion::Denoiser& denoiser, inn::DegradationInn& inn,
                                const diffusion::NoiseSchedule& schedule, GradientMode mode) {
    if (!inn) throw MissingArtifact("guidance: INN is not loaded");
    return guidance_terms(x_t, t, inn::coarse_target(y, inn->config().levels), denoiser, inn, schedule, mode)
        .gradient;
}

torch::Tensor commin_sample(const torch::Tensor& y, diffusion::Denoiser& denoiser, inn::DegradationInn& inn,
                            const diffusion::NoiseSchedule& schedule, const GuidanceConfig& config,
                            diffusion::NoiseSource& noise, const diffusion::StepObserver& observer) {
    if (!denoiser) throw MissingArtifact("commin_sample: denoiser is not loaded");
    if (!inn) throw MissingArtifact("commin_sample: INN is not loaded");
    if (!(config.zeta >= 0.0)) throw InvalidArgument("commin_sample: zeta must be >= 0");
    if (config.measurement_setting && config.inn_setting && !(*config.measurement_setting == *config.inn_setting))
        throw InvalidArgument("commin_sample: measurement setting (" + config.measurement_setting->str() +
                              ") differs from the INN setting (" + config.inn_setting->str() + ")");
    const auto shape = denoiser->config().image;
    check_image_batch(y, shape, "commin_sample measurement");
    if (!(inn->config().image == shape)) throw InvalidArgument("commin_sample: INN and denoiser image shapes differ");
    if (noise.size() != y.size(0)) throw InvalidArgument("commin_sample: need one noise stream per measurement");

    const auto coarse_y = inn::coarse_target(y, inn->config().levels);
    auto x = noise.normal(shape);
    for (std::int64_t t = schedule.steps(); t >= 1; --t) {
        if (observer) observer(t, x);
        auto z = t > 1 ? noise.normal(shape) : torch::zeros_like(x);
        auto terms = guidance_terms(x, t, coarse_y, denoiser, inn, schedule, config.mode);
        torch::NoGradGuard no_grad;
        auto proposal = diffusion::ancestral_step(x, terms.x0, t, z, schedule);
        x = proposal - config.zeta * terms.gradient;
        if (!torch::isfinite(x).all().item<bool>()) {
            throw Error("commin_sample: guided trajectory became non-finite at t=" + std::to_string(t) +
                        " (zeta " + std::to_string(config.zeta) + ")");
        }
    }
    if (observer) observer(0, x);
    return x;
}

}  // namespace commin::guided
