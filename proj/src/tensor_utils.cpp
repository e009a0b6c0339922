#include "commin/tensor_utils.hpp"

#include <mutex>

#include <ATen/CPUGeneratorImpl.h>

#include "commin/error.hpp"

namespace commin {

std::string ImageShape::str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

void check_image_batch(const torch::Tensor& x, const ImageShape& shape, const char* what) {
    if (!x.defined() || x.dim() != 4)
        throw InvalidArgument(std::string(what) + ": expected a 4-D NCHW image batch");
    if (x.size(1) != shape.channels || x.size(2) != shape.height || x.size(3) != shape.width)
        throw InvalidArgument(std::string(what) + ": image shape " + shape_of(x).str() + " does not match " +
                              shape.str());
}

ImageShape shape_of(const torch::Tensor& batch) {
    if (batch.dim() != 4) throw InvalidArgument("shape_of: expected a 4-D NCHW batch");
    return {batch.size(2), batch.size(3), batch.size(1)};
}

torch::Tensor to_unit_range(const torch::Tensor& x) { return ((x + 1.0) * 0.5).clamp(0.0, 1.0); }

torch::Generator make_generator(std::uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

SeededInit::SeededInit(std::uint64_t seed) {
    {
        auto gen = at::detail::getDefaultCPUGenerator();
        std::lock_guard<std::mutex> lock(gen.mutex());
        saved_state_ = gen.get_state();
    }
    torch::manual_seed(seed);
}

SeededInit::~SeededInit() {
    auto gen = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(gen.mutex());
    gen.set_state(saved_state_);
}

torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

void zero_init(torch::nn::Conv2d& conv) {
    torch::NoGradGuard guard;
    conv->weight.zero_();
    if (conv->bias.defined()) conv->bias.zero_();
}

std::int64_t group_count(std::int64_t channels) {
    for (std::int64_t g : {8, 4, 2}) {
        if (channels % g == 0) return g;
    }
    return 1;
}

}  // namespace commin
