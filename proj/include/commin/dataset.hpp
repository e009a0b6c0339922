#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "commin/tensor_utils.hpp"

namespace commin::data {

struct ImageSet {
    torch::Tensor images;  // [N,C,H,W] in [-1, 1]
    std::vector<std::string> ids;  // file stems, one per image

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(ids.size()); }
    // First n images (all of them if n <= 0 or n >= size()).
    ImageSet head(std::int64_t n) const;
};

struct DatasetSplits {
    ImageSet train;
    ImageSet val;
    ImageSet test;
};

struct SplitSizes {
    std::int64_t train = 0;
    std::int64_t val = 0;
    std::int64_t test = 0;
};

// train = round(n * train_fraction), val = round(n * val_fraction), test = rest.
SplitSizes split_sizes(std::int64_t n, double train_fraction, double val_fraction);

// Every PNG/PPM/PGM in `dir`, sorted by file name. Files that fail to decode
// or do not match `shape` are collected and reported together in one
// InvalidArgument.
ImageSet load_images(const std::filesystem::path& dir, const ImageShape& shape);

// Seeded permutation of the sorted file list, cut into train/val/test. Each
// split keeps file-name order.
DatasetSplits split_dataset(const ImageSet& all, std::uint64_t split_seed, double train_fraction,
                            double val_fraction);

DatasetSplits load_dataset(const std::filesystem::path& dir, const ImageShape& shape, std::uint64_t split_seed,
                           double train_fraction, double val_fraction);

}  // namespace commin::data
