#include "commin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "commin/error.hpp"
#include "commin/image_io.hpp"
#include "commin/random.hpp"

namespace commin::data {

namespace fs = std::filesystem;

ImageSet ImageSet::head(std::int64_t n) const {
    if (n <= 0 || n >= size()) return *this;
    return {images.slice(0, 0, n), std::vector<std::string>(ids.begin(), ids.begin() + n)};
}

SplitSizes split_sizes(std::int64_t n, double train_fraction, double val_fraction) {
    if (n < 0) throw InvalidArgument("split_sizes: negative count");
    if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0 + 1e-12)
        throw InvalidArgument("split_sizes: fractions must be non-negative and sum to at most 1");
    SplitSizes s;
    s.train = std::llround(static_cast<double>(n) * train_fraction);
    s.val = std::min(n - s.train, static_cast<std::int64_t>(std::llround(static_cast<double>(n) * val_fraction)));
    s.test = n - s.train - s.val;
    return s;
}

ImageSet load_images(const fs::path& dir, const ImageShape& shape) {
    if (!fs::is_directory(dir)) throw MissingArtifact("dataset directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && io::is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InvalidArgument("no images (png/ppm/pgm) in " + dir.string());

    std::vector<torch::Tensor> tensors;
    ImageSet out;
    std::ostringstream problems;
    std::size_t bad = 0;
    for (const auto& f : files) {
        try {
            auto img = io::read_image(f);
            if (img.height != shape.height || img.width != shape.width || img.channels != shape.channels) {
                throw InvalidArgument("shape " + ImageShape{img.height, img.width, img.channels}.str() +
                                      ", expected " + shape.str());
            }
            tensors.push_back(io::to_tensor(img));
            out.ids.push_back(f.stem().string());
        } catch (const InvalidArgument& e) {
            ++bad;
            problems << "\n  " << f.filename().string() << ": " << e.what();
        }
    }
    if (bad > 0)
        throw InvalidArgument(std::to_string(bad) + " unusable image(s) in " + dir.string() + problems.str());
    out.images = torch::stack(tensors);
    return out;
}

DatasetSplits split_dataset(const ImageSet& all, std::uint64_t split_seed, double train_fraction,
                            double val_fraction) {
    const auto n = all.size();
    const auto sizes = split_sizes(n, train_fraction, val_fraction);
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates with a fixed engine so membership does not depend on the
    // standard library's distribution implementations.
    Rng rng(derive_seed(split_seed, {label("dataset-split")}));
    for (std::int64_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    auto take = [&](std::int64_t from, std::int64_t count) {
        std::vector<std::int64_t> idx(order.begin() + from, order.begin() + from + count);
        std::sort(idx.begin(), idx.end());
        ImageSet s;
        for (auto i : idx) s.ids.push_back(all.ids[static_cast<std::size_t>(i)]);
        s.images = count > 0 ? all.images.index_select(0, torch::tensor(idx, torch::kLong))
                             : all.images.slice(0, 0, 0);
        return s;
    };
    return {take(0, sizes.train), take(sizes.train, sizes.val), take(sizes.train + sizes.val, sizes.test)};
}

DatasetSplits load_dataset(const fs::path& dir, const ImageShape& shape, std::uint64_t split_seed,
                           double train_fraction, double val_fraction) {
    return split_dataset(load_images(dir, shape), split_seed, train_fraction, val_fraction);
}

}  // namespace commin::data
