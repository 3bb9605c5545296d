#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

struct FedConfig {
  double local_lr = 0.001;
  int inner_epochs = 1;
  Index batch_size = 16;
  int meta_batch = 5;
  int total_rounds = 220;
  double eta0 = 1.0;
  double etak = 0.46;
  int personalization_epochs = 7;
  std::uint64_t seed = 0;

  /// Throws ConfigError. `num_clients` bounds meta_batch when positive.
  void validate(Index num_clients = 0) const;
};

/// Metrics after one federated round.
struct RoundRecord {
  int round_index = 0;
  std::string phase;
  std::vector<int> participating_clients;
  std::string global_params_hash;
  std::vector<double> per_client_test_accuracy;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::int64_t cumulative_steps = 0;
};

/// Identifies the random streams of one round. `population` separates
/// independently trained client groups (0 for the whole federation,
/// 1 + cluster id after clustering).
struct RoundKey {
  std::uint64_t population = 0;
  int round_index = 0;
};

struct RoundOutcome {
  ParamVector global;
  RoundRecord record;
  std::int64_t steps = 0;  // mini-batch steps spent by the sampled clients
};

/// 16 hex digits of FNV-1a over the raw parameter bytes.
std::string params_hash(const ParamVector& params);

/// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

/// Sum_i (w_i / sum w) * params_i, coordinate-wise.
ParamVector weighted_average(std::span<const ParamVector> params, std::span<const double> weights);

/// n distinct indices in [0, num_clients), uniform without replacement, in
/// ascending order.
std::vector<int> sample_clients(int num_clients, int n, Rng& rng);

/// Sampling stream for a round.
Rng round_rng(std::uint64_t seed, RoundKey key);

/// eta0 + (etak - eta0) * t / (k - 1); eta0 when k == 1.
double meta_lr(int round_index, const FedConfig& cfg);

/// `cfg.inner_epochs` passes of sgd_epoch from `start` on the client's train set.
ParamVector local_train(const ModelSpec& spec, const ParamVector& start,
                        const ClientDataset& client, const FedConfig& cfg, Rng& rng);

/// Fine-tunes a copy of `global` for `cfg.personalization_epochs` epochs.
ParamVector personalize(const ModelSpec& spec, const ParamVector& global,
                        const ClientDataset& client, const FedConfig& cfg, Rng& rng);

/// Personalization stream for one client at one round.
Rng personalization_rng(std::uint64_t seed, RoundKey key, int client_id);

/// Samples clients, trains them locally from `global` and replaces the global
/// model with the train-size-weighted average. The record evaluates the new
/// global model on every client's test set.
RoundOutcome fedavg_round(const ModelSpec& spec, const ParamVector& global,
                          std::span<const ClientDataset> clients, const FedConfig& cfg,
                          RoundKey key, std::int64_t steps_before = 0);

/// Same sampling and local training as fedavg_round; the global model moves
/// by meta_lr(t) times the weighted mean update. Record accuracies are taken
/// after a temporary per-client personalization.
RoundOutcome fedap_round(const ModelSpec& spec, const ParamVector& global,
                         std::span<const ClientDataset> clients, const FedConfig& cfg,
                         RoundKey key, std::int64_t steps_before = 0);

}  // namespace fedsim
