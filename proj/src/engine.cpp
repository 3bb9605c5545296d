#include "fedsim/engine.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim {

void FedConfig::validate(Index num_clients) const {
  if (!(local_lr > 0.0)) throw ConfigError("fed.local_lr must be > 0");
  if (inner_epochs < 1) throw ConfigError("fed.inner_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("fed.batch_size must be >= 1");
  if (meta_batch < 1) throw ConfigError("fed.meta_batch must be >= 1");
  if (num_clients > 0 && meta_batch > num_clients)
    throw ConfigError("fed.meta_batch (" + std::to_string(meta_batch) +
                      ") exceeds the number of clients (" + std::to_string(num_clients) + ")");
  if (total_rounds < 1) throw ConfigError("fed.total_rounds must be >= 1");
  if (!(etak > 0.0 && etak <= eta0))
    throw ConfigError("fed.etak and fed.eta0 must satisfy 0 < etak <= eta0");
  if (personalization_epochs < 0) throw ConfigError("fed.personalization_epochs must be >= 0");
}

std::string params_hash(const ParamVector& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ params.fingerprint;
  for (Index i = 0; i < params.size(); ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &params.values(i), sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

ParamVector weighted_average(std::span<const ParamVector> params, std::span<const double> weights) {
  if (params.empty()) throw EmptyDataError("nothing to average");
  if (params.size() != weights.size())
    throw DimensionError("weighted_average: " + std::to_string(params.size()) + " vectors, " +
                         std::to_string(weights.size()) + " weights");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("averaging weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("averaging weights sum to zero");
  for (const auto& p : params) {
    if (p.fingerprint != params.front().fingerprint)
      throw SpecMismatchError("averaging parameter vectors of different model specs");
    if (p.size() != params.front().size())
      throw DimensionError("averaging parameter vectors of different lengths");
  }
  ParamVector out{Vector<double>::Zero(params.front().size()), params.front().fingerprint};
  for (std::size_t i = 0; i < params.size(); ++i) out.values += (weights[i] / total) * params[i].values;
  return out;
}

std::vector<int> sample_clients(int num_clients, int n, Rng& rng) {
  if (n < 1 || n > num_clients)
    throw ConfigError("cannot sample " + std::to_string(n) + " of " + std::to_string(num_clients) +
                      " clients");
  std::vector<int> all(static_cast<std::size_t>(num_clients));
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    const std::size_t j = i + rng.below(all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(static_cast<std::size_t>(n));
  std::sort(all.begin(), all.end());
  return all;
}

Rng round_rng(std::uint64_t seed, RoundKey key) {
  return Rng(derive_seed(seed, Stream::Sampling,
                         {key.population, static_cast<std::uint64_t>(key.round_index)}));
}

Rng personalization_rng(std::uint64_t seed, RoundKey key, int client_id) {
  return Rng(derive_seed(seed, Stream::Personalization,
                         {key.population, static_cast<std::uint64_t>(key.round_index),
                          static_cast<std::uint64_t>(client_id)}));
}

double meta_lr(int round_index, const FedConfig& cfg) {
  if (round_index < 0 || round_index >= cfg.total_rounds)
    throw ConfigError("round " + std::to_string(round_index) + " outside [0, " +
                      std::to_string(cfg.total_rounds) + ")");
  if (cfg.total_rounds == 1) return cfg.eta0;
  return cfg.eta0 + (cfg.etak - cfg.eta0) * static_cast<double>(round_index) /
                        static_cast<double>(cfg.total_rounds - 1);
}

ParamVector local_train(const ModelSpec& spec, const ParamVector& start,
                        const ClientDataset& client, const FedConfig& cfg, Rng& rng) {
  ParamVector p = start;
  for (int e = 0; e < cfg.inner_epochs; ++e)
    p = sgd_epoch(spec, p, client.train.features, client.train.label_span(), cfg.local_lr,
                  cfg.batch_size, rng);
  return p;
}

ParamVector personalize(const ModelSpec& spec, const ParamVector& global,
                        const ClientDataset& client, const FedConfig& cfg, Rng& rng) {
  if (cfg.personalization_epochs < 0) throw ConfigError("personalization epochs must be >= 0");
  ParamVector p = global;
  for (int e = 0; e < cfg.personalization_epochs; ++e)
    p = sgd_epoch(spec, p, client.train.features, client.train.label_span(), cfg.local_lr,
                  cfg.batch_size, rng);
  return p;
}

namespace {

struct LocalRound {
  std::vector<int> sampled;  // indices into the client span
  std::vector<ParamVector> params;
  std::vector<double> weights;
  std::int64_t steps = 0;
};

LocalRound train_sampled(const ModelSpec& spec, const ParamVector& global,
                         std::span<const ClientDataset> clients, const FedConfig& cfg,
                         RoundKey key) {
  if (clients.empty()) throw EmptyDataError("round has no clients");
  LocalRound r;
  Rng sampler = round_rng(cfg.seed, key);
  r.sampled = sample_clients(static_cast<int>(clients.size()), cfg.meta_batch, sampler);
  r.params.resize(r.sampled.size());
  parallel_for(r.sampled.size(), [&](std::size_t i) {
    const ClientDataset& c = clients[static_cast<std::size_t>(r.sampled[i])];
    Rng rng(derive_seed(cfg.seed, Stream::LocalTraining,
                        {key.population, static_cast<std::uint64_t>(key.round_index),
                         static_cast<std::uint64_t>(c.client_id)}));
    r.params[i] = local_train(spec, global, c, cfg, rng);
  });
  for (int idx : r.sampled) {
    const auto& c = clients[static_cast<std::size_t>(idx)];
    r.weights.push_back(static_cast<double>(c.train.size()));
    r.steps += cfg.inner_epochs * steps_per_epoch(c.train.size(), cfg.batch_size);
  }
  return r;
}

RoundRecord make_record(const ParamVector& global, std::span<const ClientDataset> clients,
                        const LocalRound& local, RoundKey key, std::int64_t steps_before,
                        std::vector<double> accuracies, std::string phase) {
  RoundRecord rec;
  rec.round_index = key.round_index;
  rec.phase = std::move(phase);
  for (int idx : local.sampled)
    rec.participating_clients.push_back(clients[static_cast<std::size_t>(idx)].client_id);
  rec.global_params_hash = params_hash(global);
  rec.per_client_test_accuracy = std::move(accuracies);
  std::tie(rec.mean_accuracy, rec.std_accuracy) = mean_std(rec.per_client_test_accuracy);
  rec.cumulative_steps = steps_before + local.steps;
  return rec;
}

}  // namespace

RoundOutcome fedavg_round(const ModelSpec& spec, const ParamVector& global,
                          std::span<const ClientDataset> clients, const FedConfig& cfg,
                          RoundKey key, std::int64_t steps_before) {
  LocalRound local = train_sampled(spec, global, clients, cfg, key);
  RoundOutcome out;
  out.global = weighted_average(local.params, local.weights);
  std::vector<double> acc(clients.size());
  parallel_for(clients.size(), [&](std::size_t i) {
    acc[i] = evaluate(spec, out.global, clients[i].test.features, clients[i].test.label_span())
                 .accuracy;
  });
  out.steps = local.steps;
  out.record = make_record(out.global, clients, local, key, steps_before, std::move(acc), "fedavg");
  return out;
}

RoundOutcome fedap_round(const ModelSpec& spec, const ParamVector& global,
                         std::span<const ClientDataset> clients, const FedConfig& cfg,
                         RoundKey key, std::int64_t steps_before) {
  const double eta = meta_lr(key.round_index, cfg);
  LocalRound local = train_sampled(spec, global, clients, cfg, key);
  const ParamVector aggregate = weighted_average(local.params, local.weights);
  // The normalized weights sum to one, so global + eta * sum_i w_i (theta_i - global)
  // equals this convex form, which reproduces the FedAvg aggregate exactly at eta = 1.
  RoundOutcome out;
  out.global = ParamVector{(1.0 - eta) * global.values + eta * aggregate.values, global.fingerprint};

  std::vector<double> acc(clients.size());
  parallel_for(clients.size(), [&](std::size_t i) {
    const ClientDataset& c = clients[i];
    Rng rng = personalization_rng(cfg.seed, key, c.client_id);
    const ParamVector tuned = personalize(spec, out.global, c, cfg, rng);
    acc[i] = evaluate(spec, tuned, c.test.features, c.test.label_span()).accuracy;
  });
  out.steps = local.steps;
  out.record = make_record(out.global, clients, local, key, steps_before, std::move(acc), "fedap");
  return out;
}

}  // namespace fedsim
