#include "commin/channel.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "commin/error.hpp"

namespace commin::channel {

namespace {

double energy(const std::vector<Symbol>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0,
                           [](double acc, const Symbol& s) { return acc + std::norm(s); });
}

}  // namespace

double ChannelSymbols::average_power() const {
    if (values.empty()) throw InvalidArgument("average_power: empty symbol block");
    return energy(values) / static_cast<double>(values.size());
}

double ChannelConfig::noise_variance() const { return noise_variance_from_snr(snr_db, avg_power); }

ChannelSymbols pack_complex(std::span<const double> v) {
    if (v.empty() || v.size() % 2 != 0)
        throw InvalidArgument("pack_complex: encoder output must have positive even length, got " +
                              std::to_string(v.size()));
    ChannelSymbols z;
    z.values.reserve(v.size() / 2);
    for (std::size_t i = 0; i < v.size(); i += 2) z.values.emplace_back(v[i], v[i + 1]);
    return z;
}

std::vector<double> unpack_complex(const ChannelSymbols& z) {
    std::vector<double> v;
    v.reserve(2 * z.k());
    for (const auto& s : z.values) {
        v.push_back(s.real());
        v.push_back(s.imag());
    }
    return v;
}

ChannelSymbols normalize_power(const ChannelSymbols& z_tilde, double avg_power) {
    if (z_tilde.values.empty()) throw InvalidArgument("normalize_power: k must be >= 1");
    if (!(avg_power > 0.0)) throw InvalidArgument("normalize_power: average power must be positive");
    const double e = energy(z_tilde.values);
    if (!(e > 0.0) || !std::isfinite(e))
        throw InvalidArgument("normalize_power: input has zero or non-finite energy");
    const double scale = std::sqrt(static_cast<double>(z_tilde.k()) * avg_power / e);
    ChannelSymbols z;
    z.values.reserve(z_tilde.k());
    for (const auto& s : z_tilde.values) z.values.push_back(s * scale);
    return z;
}

double noise_variance_from_snr(double snr_db, double avg_power) {
    if (!(avg_power > 0.0)) throw InvalidArgument("noise_variance_from_snr: average power must be positive");
    return avg_power * std::pow(10.0, -snr_db / 10.0);
}

double snr_db_from_noise_variance(double noise_variance, double avg_power) {
    if (!(noise_variance > 0.0)) throw InvalidArgument("snr_db_from_noise_variance: variance must be positive");
    return 10.0 * std::log10(avg_power / noise_variance);
}

ChannelSymbols transmit_awgn(const ChannelSymbols& z, double noise_variance, Rng& rng) {
    if (!(noise_variance >= 0.0)) throw InvalidArgument("transmit_awgn: negative noise variance");
    if (noise_variance == 0.0) return z;
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_variance / 2.0));
    ChannelSymbols out;
    out.values.reserve(z.k());
    for (const auto& s : z.values) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        out.values.push_back(s + Symbol(re, im));
    }
    return out;
}

double measured_snr_db(const ChannelSymbols& sent, const ChannelSymbols& received, double avg_power) {
    if (sent.k() != received.k() || sent.k() == 0)
        throw InvalidArgument("measured_snr_db: block length mismatch");
    double noise = 0.0;
    for (std::size_t i = 0; i < sent.k(); ++i) noise += std::norm(received.values[i] - sent.values[i]);
    noise /= static_cast<double>(sent.k());
    return snr_db_from_noise_variance(noise, avg_power);
}

}  // namespace commin::channel
