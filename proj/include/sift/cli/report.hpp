#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sift/metrics.hpp"

namespace sift::cli {

/// Fraction and percent forms of every rate; counts are kept as integers.
nlohmann::json to_json(const MetricReport& report);

void write_roc_csv(std::span<const RocPoint> curve, const std::filesystem::path& path);
std::vector<RocPoint> read_roc_csv(const std::filesystem::path& path);

/// Standalone SVG of an ROC curve with the chance diagonal and an AUC label.
std::string render_roc_svg(std::span<const RocPoint> curve, const std::string& title);

}  // namespace sift::cli
