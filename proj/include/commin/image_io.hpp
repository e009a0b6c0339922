#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace commin::io {

// 8-bit interleaved (HWC) pixels.
struct Image8 {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

// PNG (any bit depth / colour type, expanded to 8-bit gray or RGB, alpha
// dropped) or binary PPM/PGM. Throws InvalidArgument with the reason.
Image8 read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// Image8 -> [C,H,W] float in [-1, 1].
torch::Tensor to_tensor(const Image8& image);
// [C,H,W] in [-1, 1] -> Image8 (clamped, rounded).
Image8 from_tensor(const torch::Tensor& chw);

// Tiles a [N,C,H,W] batch into one PNG with `columns` images per row.
void write_png_grid(const std::filesystem::path& path, const torch::Tensor& batch, std::int64_t columns);

bool is_image_file(const std::filesystem::path& path);

}  // namespace commin::io
