#include "commin/inn.hpp"

#include <cmath>
#include <sstream>

#include "commin/error.hpp"
#include "commin/random.hpp"

namespace commin::inn {

void InnConfig::validate() const {
    if (levels < 1) throw InvalidArgument("inn: levels must be >= 1");
    if (pairs < 1) throw InvalidArgument("inn: pairs must be >= 1");
    if (hidden < 1) throw InvalidArgument("inn: hidden width must be >= 1");
    const std::int64_t f = std::int64_t{1} << levels;
    if (image.height % f != 0 || image.width % f != 0)
        throw InvalidArgument("inn: image " + image.str() + " not divisible by 2^" + std::to_string(levels));
}

ImageShape InnConfig::coarse_shape() const {
    return {image.height >> levels, image.width >> levels, image.channels};
}

std::int64_t Decomposition::numel_per_sample() const {
    std::int64_t n = coarse.numel() / coarse.size(0);
    for (const auto& d : details) n += d.numel() / d.size(0);
    return n;
}

std::string DegradationSetting::str() const {
    std::ostringstream os;
    os << "snr=" << snr_db << "dB rho=" << rho << " jscc=" << jscc_id;
    return os.str();
}

torch::Tensor squeeze2x2(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(2) % 2 != 0 || x.size(3) % 2 != 0)
        throw InvalidArgument("squeeze2x2: expected NCHW with even H and W");
    const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    // [N, C, H/2, dy, W/2, dx] -> [N, dy, dx, C, H/2, W/2]
    return x.reshape({n, c, h / 2, 2, w / 2, 2}).permute({0, 3, 5, 1, 2, 4}).reshape({n, 4 * c, h / 2, w / 2});
}

torch::Tensor unsqueeze2x2(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) % 4 != 0) throw InvalidArgument("unsqueeze2x2: channel count must be 4C");
    const auto n = x.size(0), c = x.size(1) / 4, h = x.size(2), w = x.size(3);
    return x.reshape({n, 2, 2, c, h, w}).permute({0, 3, 4, 1, 5, 2}).reshape({n, c, 2 * h, 2 * w});
}

LiftingNetImpl::LiftingNetImpl(std::int64_t in, std::int64_t out, std::int64_t hidden)
    : head_(conv3x3(in, hidden)), body1_(conv3x3(hidden, hidden)), body2_(conv3x3(hidden, hidden)),
      tail_(conv3x3(hidden, out)) {
    zero_init(tail_);
    register_module("head", head_);
    register_module("body1", body1_);
    register_module("body2", body2_);
    register_module("tail", tail_);
}

torch::Tensor LiftingNetImpl::forward(const torch::Tensor& x) {
    auto h = head_->forward(x);
    h = h + body2_->forward(torch::silu(body1_->forward(torch::silu(h))));
    return tail_->forward(torch::silu(h));
}

DegradationInnImpl::DegradationInnImpl(const InnConfig& config) : config_(config) {
    config_.validate();
    const auto c = config.image.channels;
    for (std::int64_t l = 0; l < config.levels; ++l) {
        predict_.emplace_back();
        update_.emplace_back();
        for (std::int64_t p = 0; p < config.pairs; ++p) {
            const auto tag = std::to_string(l) + "_" + std::to_string(p);
            predict_.back().push_back(register_module("predict_" + tag, LiftingNet(c, 3 * c, config.hidden)));
            update_.back().push_back(register_module("update_" + tag, LiftingNet(3 * c, c, config.hidden)));
        }
    }
}

Decomposition DegradationInnImpl::forward(const torch::Tensor& x) {
    check_image_batch(x, config_.image, "inn_forward");
    const auto c = config_.image.channels;
    Decomposition out;
    auto current = x;
    for (std::int64_t l = 0; l < config_.levels; ++l) {
        auto s = squeeze2x2(current);
        auto coarse = s.slice(1, 0, c);
        auto detail = s.slice(1, c, 4 * c);
        for (std::int64_t p = 0; p < config_.pairs; ++p) {
            detail = detail - predict_[l][p]->forward(coarse);
            coarse = coarse + update_[l][p]->forward(detail);
        }
        out.details.push_back(detail);
        current = coarse;
    }
    out.coarse = current;
    return out;
}

torch::Tensor DegradationInnImpl::inverse(const torch::Tensor& coarse, const std::vector<torch::Tensor>& details) {
    const auto cs = config_.coarse_shape();
    check_image_batch(coarse, cs, "inn_inverse coarse");
    if (static_cast<std::int64_t>(details.size()) != config_.levels)
        throw InvalidArgument("inn_inverse: expected " + std::to_string(config_.levels) + " detail bands, got " +
                              std::to_string(details.size()));
    auto current = coarse;
    for (std::int64_t l = config_.levels - 1; l >= 0; --l) {
        const ImageShape band{config_.image.height >> (l + 1), config_.image.width >> (l + 1),
                              3 * config_.image.channels};
        check_image_batch(details[l], band, "inn_inverse detail");
        if (details[l].size(0) != coarse.size(0)) throw InvalidArgument("inn_inverse: batch size mismatch");
        auto c = current;
        auto d = details[l];
        for (std::int64_t p = config_.pairs - 1; p >= 0; --p) {
            c = c - update_[l][p]->forward(d);
            d = d + predict_[l][p]->forward(c);
        }
        current = unsqueeze2x2(torch::cat({c, d}, 1));
    }
    return current;
}

void DegradationInnImpl::randomize(torch::Generator& gen, double scale) {
    torch::NoGradGuard no_grad;
    for (auto& p : parameters()) p.copy_(torch::randn(p.sizes(), gen, p.options()) * scale);
}

DegradationInn make_inn(const InnConfig& config, std::uint64_t seed) {
    SeededInit init(seed);
    return DegradationInn(config);
}

torch::Tensor coarse_target(const torch::Tensor& y, std::int64_t levels) {
    if (levels < 1) throw InvalidArgument("coarse_target: levels must be >= 1");
    if (y.dim() != 4) throw InvalidArgument("coarse_target: expected a 4-D NCHW batch");
    const std::int64_t f = std::int64_t{1} << levels;
    if (y.size(2) % f != 0 || y.size(3) % f != 0)
        throw InvalidArgument("coarse_target: spatial size not divisible by 2^" + std::to_string(levels));
    return torch::avg_pool2d(y, {f, f});
}

torch::Tensor coarse_loss(const torch::Tensor& coarse, const torch::Tensor& target) {
    if (coarse.sizes() != target.sizes()) throw InvalidArgument("coarse_loss: shape mismatch");
    return (coarse - target).pow(2).sum() / static_cast<double>(coarse.size(0));
}

double coarse_rmse(DegradationInn& inn, const torch::Tensor& x, const torch::Tensor& y) {
    torch::NoGradGuard no_grad;
    auto c = inn->forward(x).coarse;
    return std::sqrt((c - coarse_target(y, inn->config().levels)).pow(2).mean().item<double>());
}

double roundtrip_error(DegradationInn& inn, const torch::Tensor& x) {
    torch::NoGradGuard no_grad;
    return (inn->inverse(inn->forward(x)) - x).abs().max().item<double>();
}

InnTrainResult train_inn(const torch::Tensor& x, const torch::Tensor& y,
                         const std::vector<DegradationSetting>& settings, const InnConfig& config,
                         const OptimizerSettings& opt, std::uint64_t seed) {
    if (!x.defined() || x.size(0) == 0) throw InvalidArgument("train_inn: empty pair set");
    if (x.sizes() != y.sizes()) throw InvalidArgument("train_inn: x and y shapes differ");
    if (static_cast<std::int64_t>(settings.size()) != x.size(0))
        throw InvalidArgument("train_inn: one degradation setting tag per pair is required");
    for (const auto& s : settings) {
        if (!(s == settings.front()))
            throw InvalidArgument("train_inn: mixed degradation settings (" + settings.front().str() + " vs " +
                                  s.str() + "); train one INN per setting");
    }
    check_image_batch(x, config.image, "train_inn");

    auto inn = make_inn(config, derive_seed(seed, {0}));
    const auto targets = coarse_target(y, config.levels);
    const std::int64_t probe_n = std::min<std::int64_t>(x.size(0), 64);
    auto probe_x = x.slice(0, 0, probe_n);
    auto probe_t = targets.slice(0, 0, probe_n);
    auto probe_loss = [&] {
        torch::NoGradGuard no_grad;
        return coarse_loss(inn->forward(probe_x).coarse, probe_t).item<double>();
    };

    TrainingReport report;
    report.model = "inn";
    report.steps = opt.steps;
    report.initial_loss = probe_loss();

    torch::optim::Adam adam(inn->parameters(), torch::optim::AdamOptions(opt.lr));
    auto gen = make_generator(derive_seed(seed, {1}));
    for (std::int64_t step = 1; step <= opt.steps; ++step) {
        auto idx = sample_indices(x.size(0), opt.batch_size, gen);
        auto xb = x.index_select(0, idx);
        adam.zero_grad();
        auto loss = coarse_loss(inn->forward(xb).coarse, targets.index_select(0, idx));
        loss.backward();
        adam.step();
        const double l = loss.item<double>();
        check_finite_loss(l, "inn", step);
        report.curve.push_back(l);
        if (step % 50 == 0 || step == opt.steps) {
            const double err = roundtrip_error(inn, xb);
            if (!(err < 1e-4))
                throw Error("train_inn: invertibility check failed at step " + std::to_string(step) +
                            " (max error " + std::to_string(err) + ")");
        }
        if (opt.progress && opt.log_every > 0 && step % opt.log_every == 0) opt.progress(step, l);
    }
    report.final_loss = probe_loss();
    return {inn, report};
}

}  // namespace commin::inn
