#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

// Parameter archives: an uncompressed zip holding one .npy file per named
// array plus manifest.json. Readable with numpy.load(path) as an .npz.
namespace commin::checkpoint {

struct ArrayInfo {
    std::string name;
    std::string dtype;  // numpy descr, e.g. "<f4"
    std::vector<std::int64_t> shape;
};

struct Manifest {
    std::string kind;         // "jscc", "inn", "denoiser", "extractor", "pairs", ...
    std::string config_hash;  // hash of the experiment config that produced it
    std::string created_utc;
    std::string content_id;   // FNV-1a of the array payloads, filled on save
    nlohmann::json meta = nlohmann::json::object();
    std::vector<ArrayInfo> arrays;  // filled on save
};

struct CheckpointRecord {
    Manifest manifest;
    std::vector<std::pair<std::string, torch::Tensor>> arrays;

    const torch::Tensor& at(const std::string& name) const;
};

struct LoadOptions {
    std::optional<std::string> expected_kind;
    // When set and different from the archive's hash, a warning is printed.
    std::optional<std::string> current_config_hash;
};

// Supported dtypes: float32, float64, int64. Writes atomically (temp + rename).
void save_checkpoint(CheckpointRecord record, const std::filesystem::path& path);
CheckpointRecord load_checkpoint(const std::filesystem::path& path, const LoadOptions& options = {});

// Every named parameter and buffer of `module`, in registration order.
CheckpointRecord record_from_module(torch::nn::Module& module, const std::string& kind);
// Copies arrays into `module` by name; every parameter/buffer must be present
// with a matching shape.
void load_into_module(const CheckpointRecord& record, torch::nn::Module& module);

// npy (format 1.0) encode/decode of a single array.
std::string encode_npy(const torch::Tensor& array);
torch::Tensor decode_npy(const std::string& bytes, const std::string& name);

}  // namespace commin::checkpoint
