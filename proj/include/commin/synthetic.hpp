#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>

#include "commin/tensor_utils.hpp"

// Procedural face-like images (gradient background, skin ellipse, textured
// hair, eyes, mouth, shoulders) for running the pipeline without a
// downloaded face dataset. Image i depends only on (seed, i).
namespace commin::synthetic {

// [C,H,W] in [-1, 1]. Channels must be 1 or 3.
torch::Tensor render_face(const ImageShape& shape, std::uint64_t seed, std::int64_t index);

// [count,C,H,W] in [-1, 1].
torch::Tensor render_faces(const ImageShape& shape, std::uint64_t seed, std::int64_t count);

// Writes face_00000.png ... into `dir` (created if needed).
void write_faces(const std::filesystem::path& dir, const ImageShape& shape, std::uint64_t seed,
                 std::int64_t count);

}  // namespace commin::synthetic
