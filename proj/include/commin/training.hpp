#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace commin {

// Loss trace of one optimisation run. initial/final are measured on a fixed
// held-in probe (same inputs and noise draws before and after training), the
// curve holds the per-step minibatch losses.
struct TrainingReport {
    std::string model;
    std::int64_t steps = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> curve;

    double ratio() const { return final_loss / initial_loss; }
};

// Called every `log_every` steps with (step, minibatch loss).
using ProgressFn = std::function<void(std::int64_t, double)>;

struct OptimizerSettings {
    std::int64_t steps = 1000;
    std::int64_t batch_size = 16;
    double lr = 1e-3;
    std::int64_t log_every = 0;  // 0 disables progress callbacks
    ProgressFn progress;
};

// Throws TrainingDiverged naming `model` and `step` if loss is NaN/inf.
void check_finite_loss(double loss, const std::string& model, std::int64_t step);

// Writes <dir>/<model>_loss.csv (step,loss) and <dir>/<model>_report.json.
void save_training_report(const TrainingReport& report, const std::filesystem::path& dir);
TrainingReport load_training_report(const std::filesystem::path& dir, const std::string& model);

// Random minibatch indices in [0, n).
torch::Tensor sample_indices(std::int64_t n, std::int64_t batch, torch::Generator& gen);

}  // namespace commin
