#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

// Conventions shared by all tensor-facing modules: image batches are NCHW,
// float32, values nominally in [-1, 1].
namespace commin {

struct ImageShape {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 0;

    std::int64_t numel() const noexcept { return height * width * channels; }
    bool operator==(const ImageShape&) const = default;
    std::string str() const;
};

// Throws InvalidArgument unless `x` is a 4-D batch whose trailing dims match.
void check_image_batch(const torch::Tensor& x, const ImageShape& shape, const char* what);

ImageShape shape_of(const torch::Tensor& batch);

// [-1, 1] -> [0, 1], clamped.
torch::Tensor to_unit_range(const torch::Tensor& x);

torch::Generator make_generator(std::uint64_t seed);

// Deterministic parameter initialisation: seeds the global torch generator
// for the lifetime of the guard and restores the previous state afterwards.
class SeededInit {
public:
    explicit SeededInit(std::uint64_t seed);
    ~SeededInit();
    SeededInit(const SeededInit&) = delete;
    SeededInit& operator=(const SeededInit&) = delete;

private:
    torch::Tensor saved_state_;
};

// 3x3 same-padding convolution, the workhorse of every network here.
torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1);

void zero_init(torch::nn::Conv2d& conv);

// Number of groups for GroupNorm that divides `channels`.
std::int64_t group_count(std::int64_t channels);

}  // namespace commin
