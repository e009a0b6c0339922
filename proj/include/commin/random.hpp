#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace commin {

using Rng = std::mt19937_64;

// splitmix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derive a child seed from a root seed and a list of stream labels. Order
// matters: derive_seed(s, {a, b}) != derive_seed(s, {b, a}) in general.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> labels) noexcept {
    std::uint64_t h = mix_seed(root);
    for (auto l : labels) h = mix_seed(h ^ mix_seed(l));
    return h;
}

// Stable 64-bit FNV-1a over bytes, used for stream labels and content ids.
constexpr std::uint64_t fnv1a(const char* data, std::size_t n,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream label from a name, for derive_seed.
constexpr std::uint64_t label(std::string_view name) noexcept { return fnv1a(name.data(), name.size()); }

}  // namespace commin
