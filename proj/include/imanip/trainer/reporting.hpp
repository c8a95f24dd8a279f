#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imanip/trainer/trainer.hpp"

namespace imanip::trainer {

std::string metrics_csv(const RunReport& run);

struct Series {
  std::string label;
  std::vector<double> values;  // percent, NaN = no point
};
std::string svg_curves(const std::string& title, const std::vector<Series>& series, const std::vector<std::string>& x_labels);

// Writes manifest.json, metrics.csv, curves.svg, one checkpoint and one memory
// payload per step into `dir`. Returns the manifest.
nlohmann::json write_run_artifacts(const std::string& dir, const RunReport& run, const TrainerOptions& opts,
                                   const nlohmann::json& extra = {});

// Table-1-shaped comparison over run manifests: one row per manifest with Old
// and All per step plus averages.
struct Comparison {
  std::string csv;
  std::string svg;
};
Comparison compare_manifests(const std::vector<nlohmann::json>& manifests);

}  // namespace imanip::trainer
