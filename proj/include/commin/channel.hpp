#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "commin/random.hpp"

// Physical layer: complex symbol packing, average-power normalisation and a
// circularly-symmetric complex AWGN channel. Everything here is double
// precision and free of hidden state; randomness comes from the caller's Rng.
namespace commin::channel {

using Symbol = std::complex<double>;

// Length-k complex channel input/output.
struct ChannelSymbols {
    std::vector<Symbol> values;

    std::size_t k() const noexcept { return values.size(); }
    // (1/k) * sum |z_i|^2
    double average_power() const;
    bool operator==(const ChannelSymbols&) const = default;
};

struct ChannelConfig {
    double snr_db = 0.0;
    double avg_power = 1.0;  // P-bar
    std::size_t k = 1;

    double noise_variance() const;
};

// Interleaved packing: element i is v[2i] + j*v[2i+1]. Throws InvalidArgument
// on odd or empty input.
ChannelSymbols pack_complex(std::span<const double> v);
std::vector<double> unpack_complex(const ChannelSymbols& z);

// z = sqrt(k*P) * z~ / sqrt(z~^H z~). Throws on an all-zero input or P <= 0.
ChannelSymbols normalize_power(const ChannelSymbols& z_tilde, double avg_power = 1.0);

// sigma^2 = P * 10^(-snr_db/10).
double noise_variance_from_snr(double snr_db, double avg_power = 1.0);

// 10*log10(P / sigma^2).
double snr_db_from_noise_variance(double noise_variance, double avg_power = 1.0);

// z_hat = z + n, n ~ CN(0, sigma^2): each of the real and imaginary parts
// carries variance sigma^2/2. sigma^2 == 0 returns z unchanged and draws
// nothing from rng.
ChannelSymbols transmit_awgn(const ChannelSymbols& z, double noise_variance, Rng& rng);

// Empirical SNR in dB of a received block given the clean block and P.
double measured_snr_db(const ChannelSymbols& sent, const ChannelSymbols& received, double avg_power = 1.0);

}  // namespace commin::channel
