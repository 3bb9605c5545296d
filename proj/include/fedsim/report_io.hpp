#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/orchestrator.hpp"

namespace fedsim {

inline constexpr const char* kReportSchema = "fedsim.report/1";

/// report.json content. Wall time and the output directory are left out so
/// identical configurations serialize to identical bytes.
nlohmann::ordered_json report_to_json(const ExperimentReport& report);

nlohmann::ordered_json clustering_to_json(const ClusteringResult& clustering);

/// rounds.csv content: round, mean_acc, std_acc, cumulative_steps.
std::string rounds_csv(const ExperimentReport& report);

/// Writes report.json, rounds.csv, timing.json and, for clustered methods,
/// clusters.json into `dir`.
void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir);

/// The parts of a saved report that the comparison and cluster commands read.
struct SavedReport {
  std::string method;
  std::vector<int> round_index;
  std::vector<double> mean_accuracy;
  std::vector<std::int64_t> cumulative_steps;
  double final_mean = 0.0;
  double final_std = 0.0;
  std::int64_t total_steps = 0;

  struct Clusters {
    int after_round = 0;
    std::int64_t steps_at_clustering = 0;
    double threshold = 0.0;
    std::vector<int> client_ids;
    std::vector<int> labels;
    int num_clusters = 0;
    std::vector<Merge> merges;
  };
  std::optional<Clusters> clusters;
};

/// Throws SchemaError when the document is not a report of this version.
SavedReport read_report(const std::filesystem::path& path);
SavedReport parse_report(const nlohmann::json& doc);

}  // namespace fedsim
