#include "commin/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>

#include "commin/error.hpp"

namespace commin {

void check_finite_loss(double loss, const std::string& model, std::int64_t step) {
    if (!std::isfinite(loss))
        throw TrainingDiverged(model + ": loss became non-finite at step " + std::to_string(step) +
                               " (try a smaller learning rate)");
}

void save_training_report(const TrainingReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / (report.model + "_loss.csv"));
        csv << "step,loss\n" << std::setprecision(9);
        for (std::size_t i = 0; i < report.curve.size(); ++i) csv << i + 1 << ',' << report.curve[i] << '\n';
        if (!csv) throw Error("cannot write loss curve for " + report.model);
    }
    nlohmann::json j{{"model", report.model},
                     {"steps", report.steps},
                     {"initial_loss", report.initial_loss},
                     {"final_loss", report.final_loss},
                     {"ratio", report.ratio()}};
    std::ofstream out(dir / (report.model + "_report.json"));
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write training report for " + report.model);
}

TrainingReport load_training_report(const std::filesystem::path& dir, const std::string& model) {
    std::ifstream in(dir / (model + "_report.json"));
    if (!in) throw MissingArtifact("training report for '" + model + "' not found in " + dir.string());
    auto j = nlohmann::json::parse(in);
    TrainingReport r;
    r.model = j.at("model").get<std::string>();
    r.steps = j.at("steps").get<std::int64_t>();
    r.initial_loss = j.at("initial_loss").get<double>();
    r.final_loss = j.at("final_loss").get<double>();
    std::ifstream csv(dir / (model + "_loss.csv"));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        auto comma = line.find(',');
        if (comma != std::string::npos) r.curve.push_back(std::stod(line.substr(comma + 1)));
    }
    return r;
}

torch::Tensor sample_indices(std::int64_t n, std::int64_t batch, torch::Generator& gen) {
    return torch::randint(n, {batch}, gen, torch::kLong);
}

}  // namespace commin
