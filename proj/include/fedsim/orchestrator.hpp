#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/clustering.hpp"
#include "fedsim/data.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class Method { Centralized, FedAvg, FedAvgHC, FedAP, FedAPHC };

std::string_view method_name(Method m);
/// Accepts the names produced by method_name. Throws ConfigError.
Method parse_method(std::string_view name);
inline bool is_clustered(Method m) { return m == Method::FedAvgHC || m == Method::FedAPHC; }
inline bool uses_fedap(Method m) { return m == Method::FedAP || m == Method::FedAPHC; }

struct DataConfig {
  enum class Source { Synthetic, Csv };
  Source source = Source::Synthetic;
  SyntheticSpec synthetic;
  std::filesystem::path csv_path;
  CsvSchema csv_schema;
  Index undersample_cap = 500;  // 0 disables undersampling
  Index shard_size = 35;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;  // data generation, undersampling and splitting
};

struct ExperimentConfig {
  Method method = Method::FedAP;
  ModelKind model_kind = ModelKind::LogisticRegression;
  Index hidden_dim = 0;
  FedConfig fed;
  int cluster_init_rounds = 20;
  double max_distance = 5.0;
  DataConfig data;
  int extra_rounds = 0;
  std::filesystem::path output_dir = "out";

  void validate() const;
};

struct ClusteringResult {
  ClusterAssignment assignment;
  Dendrogram dendrogram;
  UpdateMatrix updates;
  int after_round = 0;                 // number of warm-up rounds before clustering
  std::int64_t steps_at_clustering = 0;  // budget consumed once updates were computed
};

struct ExperimentReport {
  ExperimentConfig config;
  ModelSpec model;
  int num_clients = 0;
  std::vector<RoundRecord> rounds;
  std::optional<ClusteringResult> clustering;
  std::vector<double> final_per_client_accuracy;
  double final_mean = 0.0;
  double final_std = 0.0;
  std::int64_t personalization_steps = 0;
  double wall_time_seconds = 0.0;
};

struct Federation {
  ModelSpec model;
  std::vector<ClientDataset> clients;
};

/// Loads or generates the data, undersamples it and shards it into clients.
Federation prepare_federation(const ExperimentConfig& cfg);

ExperimentReport run_experiment(const ExperimentConfig& cfg);
ExperimentReport run_centralized(const ExperimentConfig& cfg);
ExperimentReport run_federated(const ExperimentConfig& cfg);

/// Expected mini-batch steps of `rounds` federated rounds.
std::int64_t federated_step_budget(const FedConfig& cfg, std::span<const ClientDataset> clients,
                                   int rounds);

struct CentralizedRun {
  ParamVector params;
  std::vector<RoundRecord> rounds;
  std::int64_t steps = 0;
};

/// Plain SGD on the pooled training data for exactly `budget_steps` steps,
/// recording per-client test accuracy every `steps_per_record` steps.
CentralizedRun train_centralized(const ModelSpec& spec, const ParamVector& start,
                                 std::span<const ClientDataset> clients, const FedConfig& cfg,
                                 std::int64_t budget_steps, std::int64_t steps_per_record);

/// Every client trains locally from `global`; the updates are clustered with
/// Ward linkage and cut at `max_distance`.
ClusteringResult cluster_clients(const ModelSpec& spec, const ParamVector& global,
                                 std::span<const ClientDataset> clients, const FedConfig& cfg,
                                 double max_distance);

/// `cfg.total_rounds` rounds of FedAvg or FedAP on one client population.
std::vector<RoundOutcome> train_population(const ModelSpec& spec, const ParamVector& start,
                                           std::span<const ClientDataset> clients,
                                           const FedConfig& cfg, bool fedap,
                                           std::uint64_t population);

struct ClusterRun {
  int cluster = 0;
  std::vector<int> members;  // indices into the client list
  std::vector<RoundOutcome> rounds;
};

/// Independent training of every cluster from `start`, with meta_batch
/// capped at the cluster size. Cluster c uses population 1 + c.
std::vector<ClusterRun> train_clusters(const ModelSpec& spec, const ParamVector& start,
                                       std::span<const ClientDataset> clients,
                                       const ClusterAssignment& assignment, const FedConfig& cfg,
                                       bool fedap);

/// Total mini-batch steps of a finished run, personalization included.
std::int64_t account_budget(const ExperimentReport& report);

struct LossHierarchy {
  double global = 0.0;
  double cluster = 0.0;
  double personalized = 0.0;
  bool converged = false;
  double worst_gradient_norm = 0.0;
};

/// Training-loss minima at the three levels (one model for everybody, one per
/// cluster, one per client), each level warm-started from the one above and
/// weighted by client train size.
LossHierarchy loss_hierarchy(const ModelSpec& spec, std::span<const ClientDataset> clients,
                             const ClusterAssignment& assignment, double grad_tol);

}  // namespace fedsim
