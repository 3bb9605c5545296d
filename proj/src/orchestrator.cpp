#include "fedsim/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "fedsim/errors.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Centralized: return "Centralized";
    case Method::FedAvg: return "FedAvg";
    case Method::FedAvgHC: return "FedAvgHC";
    case Method::FedAP: return "FedAP";
    case Method::FedAPHC: return "FedAPHC";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::Centralized, Method::FedAvg, Method::FedAvgHC, Method::FedAP,
                   Method::FedAPHC})
    if (method_name(m) == name) return m;
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (accepted: Centralized, FedAvg, FedAvgHC, FedAP, FedAPHC)");
}

void ExperimentConfig::validate() const {
  fed.validate();
  if (extra_rounds < 0) throw ConfigError("extra_rounds must be >= 0");
  if (cluster_init_rounds < 0) throw ConfigError("cluster.init_rounds must be >= 0");
  if (is_clustered(method) && cluster_init_rounds >= fed.total_rounds + extra_rounds)
    throw ConfigError("cluster.init_rounds must be < fed.total_rounds for clustered methods");
  if (!(max_distance > 0.0)) throw ConfigError("cluster.max_distance must be > 0");
  if (model_kind == ModelKind::Mlp1 && hidden_dim < 1)
    throw ConfigError("model.hidden_dim must be >= 1 for model.kind = mlp");
  if (data.source == DataConfig::Source::Synthetic) data.synthetic.validate();
  if (data.undersample_cap < 0) throw ConfigError("data.undersample_cap must be >= 0");
  if (data.shard_size < 1) throw ConfigError("data.shard_size must be >= 1");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0))
    throw ConfigError("data.train_fraction must lie in (0, 1)");
}

Federation prepare_federation(const ExperimentConfig& cfg) {
  LabeledDataset data;
  if (cfg.data.source == DataConfig::Source::Synthetic) {
    SyntheticSpec s = cfg.data.synthetic;
    s.seed = cfg.data.seed;
    data = generate_synthetic(s);
  } else {
    data = load_csv(cfg.data.csv_path, cfg.data.csv_schema);
  }
  if (cfg.data.undersample_cap > 0) data = undersample(data, cfg.data.undersample_cap, cfg.data.seed);
  Federation f;
  f.clients = shard_split(data, cfg.data.shard_size, cfg.data.train_fraction, cfg.data.seed);
  if (f.clients.empty()) throw ShardError("the split produced no clients");
  f.model.kind = cfg.model_kind;
  f.model.input_dim = data.input_dim();
  f.model.num_classes = data.num_classes;
  f.model.hidden_dim = cfg.model_kind == ModelKind::Mlp1 ? cfg.hidden_dim : 0;
  f.model.validate();
  return f;
}

std::int64_t federated_step_budget(const FedConfig& cfg, std::span<const ClientDataset> clients,
                                   int rounds) {
  if (clients.empty()) return 0;
  std::int64_t per_client = 0;
  for (const auto& c : clients) per_client += steps_per_epoch(c.train.size(), cfg.batch_size);
  // expected steps of one sampled client, times n sampled clients per round
  const double mean = static_cast<double>(per_client) / static_cast<double>(clients.size());
  return static_cast<std::int64_t>(
      std::llround(static_cast<double>(rounds) * cfg.inner_epochs * cfg.meta_batch * mean));
}

namespace {

std::vector<double> test_accuracies(const ModelSpec& spec, const ParamVector& params,
                                    std::span<const ClientDataset> clients) {
  std::vector<double> acc(clients.size());
  parallel_for(clients.size(), [&](std::size_t i) {
    acc[i] = evaluate(spec, params, clients[i].test.features, clients[i].test.label_span()).accuracy;
  });
  return acc;
}

std::int64_t personalization_budget(const FedConfig& cfg, std::span<const ClientDataset> clients) {
  std::int64_t steps = 0;
  for (const auto& c : clients)
    steps += cfg.personalization_epochs * steps_per_epoch(c.train.size(), cfg.batch_size);
  return steps;
}

void finish(ExperimentReport& report) {
  std::tie(report.final_mean, report.final_std) = mean_std(report.final_per_client_accuracy);
}

}  // namespace

CentralizedRun train_centralized(const ModelSpec& spec, const ParamVector& start,
                                 std::span<const ClientDataset> clients, const FedConfig& cfg,
                                 std::int64_t budget_steps, std::int64_t steps_per_record) {
  const LabeledDataset pooled = pool_clients(clients, true);
  const Index rows = pooled.size();
  Rng rng(derive_seed(cfg.seed, Stream::Centralized));
  CentralizedRun run{start, {}, 0};
  std::vector<Index> order(static_cast<std::size_t>(rows));
  Matrix<double> xb;
  std::vector<int> yb;
  Index cursor = rows;
  while (run.steps < budget_steps) {
    if (cursor >= rows) {
      for (Index i = 0; i < rows; ++i) order[static_cast<std::size_t>(i)] = i;
      rng.shuffle(std::span<Index>(order));
      cursor = 0;
    }
    const Index len = std::min(cfg.batch_size, rows - cursor);
    xb.resize(len, pooled.input_dim());
    yb.resize(static_cast<std::size_t>(len));
    for (Index r = 0; r < len; ++r) {
      const Index src = order[static_cast<std::size_t>(cursor + r)];
      xb.row(r) = pooled.features.row(src);
      yb[static_cast<std::size_t>(r)] = pooled.labels[static_cast<std::size_t>(src)];
    }
    cursor += len;
    run.params.values -= cfg.local_lr * gradient(spec, run.params, xb, std::span<const int>(yb)).values;
    ++run.steps;
    if (steps_per_record > 0 && (run.steps % steps_per_record == 0 || run.steps == budget_steps)) {
      RoundRecord rec;
      rec.round_index = static_cast<int>(run.rounds.size());
      rec.phase = "centralized";
      rec.global_params_hash = params_hash(run.params);
      rec.per_client_test_accuracy = test_accuracies(spec, run.params, clients);
      std::tie(rec.mean_accuracy, rec.std_accuracy) = mean_std(rec.per_client_test_accuracy);
      rec.cumulative_steps = run.steps;
      run.rounds.push_back(std::move(rec));
    }
  }
  return run;
}

ExperimentReport run_centralized(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Federation fed = prepare_federation(cfg);
  FedConfig fc = cfg.fed;
  fc.total_rounds += cfg.extra_rounds;
  const ParamVector start = init_model(fed.model, derive_seed(fc.seed, Stream::ModelInit));
  const std::int64_t per_round = federated_step_budget(fc, fed.clients, 1);
  const std::int64_t budget = federated_step_budget(fc, fed.clients, fc.total_rounds);
  const CentralizedRun run = train_centralized(fed.model, start, fed.clients, fc, budget, per_round);

  ExperimentReport report;
  report.config = cfg;
  report.model = fed.model;
  report.num_clients = static_cast<int>(fed.clients.size());
  report.rounds = run.rounds;
  report.final_per_client_accuracy = test_accuracies(fed.model, run.params, fed.clients);
  finish(report);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

ClusteringResult cluster_clients(const ModelSpec& spec, const ParamVector& global,
                                 std::span<const ClientDataset> clients, const FedConfig& cfg,
                                 double max_distance) {
  std::vector<ParamVector> local(clients.size());
  parallel_for(clients.size(), [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, Stream::ClusterPass,
                        {static_cast<std::uint64_t>(clients[i].client_id)}));
    local[i] = local_train(spec, global, clients[i], cfg, rng);
  });
  std::vector<int> ids;
  ClusteringResult r;
  for (const auto& c : clients) {
    ids.push_back(c.client_id);
    r.steps_at_clustering += cfg.inner_epochs * steps_per_epoch(c.train.size(), cfg.batch_size);
  }
  r.updates = compute_updates(local, global, ids);
  if (clients.size() >= 2) {
    r.dendrogram = ward_dendrogram(pairwise_euclidean(r.updates));
  } else {
    r.dendrogram.leaf_count = static_cast<Index>(clients.size());
  }
  r.assignment = cut_threshold(r.dendrogram, max_distance);
  return r;
}

std::vector<RoundOutcome> train_population(const ModelSpec& spec, const ParamVector& start,
                                           std::span<const ClientDataset> clients,
                                           const FedConfig& cfg, bool fedap,
                                           std::uint64_t population) {
  std::vector<RoundOutcome> out;
  out.reserve(static_cast<std::size_t>(cfg.total_rounds));
  ParamVector global = start;
  std::int64_t steps = 0;
  for (int t = 0; t < cfg.total_rounds; ++t) {
    const RoundKey key{population, t};
    RoundOutcome o = fedap ? fedap_round(spec, global, clients, cfg, key, steps)
                           : fedavg_round(spec, global, clients, cfg, key, steps);
    steps = o.record.cumulative_steps;
    global = o.global;
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<ClusterRun> train_clusters(const ModelSpec& spec, const ParamVector& start,
                                       std::span<const ClientDataset> clients,
                                       const ClusterAssignment& assignment, const FedConfig& cfg,
                                       bool fedap) {
  if (assignment.labels.size() != clients.size())
    throw DimensionError("cluster assignment does not cover every client");
  const auto members = assignment.members();
  std::vector<ClusterRun> runs(members.size());
  parallel_for(members.size(), [&](std::size_t c) {
    ClusterRun& run = runs[c];
    run.cluster = static_cast<int>(c);
    run.members = members[c];
    std::vector<ClientDataset> group;
    for (int i : run.members) group.push_back(clients[static_cast<std::size_t>(i)]);
    FedConfig fc = cfg;
    fc.meta_batch = std::min<int>(cfg.meta_batch, static_cast<int>(group.size()));
    run.rounds = train_population(spec, start, group, fc, fedap, 1 + c);
  });
  return runs;
}

namespace {

std::string combine_hashes(const std::vector<std::string>& hashes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : hashes)
    for (char ch : s) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

ExperimentReport run_federated(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.method == Method::Centralized) throw ConfigError("run_federated needs a federated method");
  const auto t0 = std::chrono::steady_clock::now();
  const Federation fed = prepare_federation(cfg);
  const auto& clients = fed.clients;
  FedConfig fc = cfg.fed;
  fc.total_rounds += cfg.extra_rounds;
  fc.validate(static_cast<Index>(clients.size()));
  const bool fedap = uses_fedap(cfg.method);

  ExperimentReport report;
  report.config = cfg;
  report.model = fed.model;
  report.num_clients = static_cast<int>(clients.size());
  ParamVector global = init_model(fed.model, derive_seed(fc.seed, Stream::ModelInit));

  if (!is_clustered(cfg.method)) {
    for (auto& o : train_population(fed.model, global, clients, fc, fedap, 0))
      report.rounds.push_back(std::move(o.record));
  } else {
    std::int64_t steps = 0;
    for (int t = 0; t < cfg.cluster_init_rounds; ++t) {
      RoundOutcome o = fedavg_round(fed.model, global, clients, fc, {0, t}, steps);
      o.record.phase = "warmup";
      steps = o.record.cumulative_steps;
      global = o.global;
      report.rounds.push_back(std::move(o.record));
    }
    ClusteringResult clustering = cluster_clients(fed.model, global, clients, fc, cfg.max_distance);
    clustering.after_round = cfg.cluster_init_rounds;
    steps += clustering.steps_at_clustering;
    clustering.steps_at_clustering = steps;

    FedConfig cluster_cfg = fc;
    cluster_cfg.total_rounds = fc.total_rounds - cfg.cluster_init_rounds;
    const auto runs =
        train_clusters(fed.model, global, clients, clustering.assignment, cluster_cfg, fedap);
    for (int r = 0; r < cluster_cfg.total_rounds; ++r) {
      RoundRecord rec;
      rec.round_index = cfg.cluster_init_rounds + r;
      rec.phase = fedap ? "cluster-fedap" : "cluster-fedavg";
      rec.per_client_test_accuracy.assign(clients.size(), 0.0);
      rec.cumulative_steps = steps;
      std::vector<std::string> hashes;
      for (const auto& run : runs) {
        const RoundRecord& part = run.rounds[static_cast<std::size_t>(r)].record;
        for (std::size_t k = 0; k < run.members.size(); ++k)
          rec.per_client_test_accuracy[static_cast<std::size_t>(run.members[k])] =
              part.per_client_test_accuracy[k];
        rec.participating_clients.insert(rec.participating_clients.end(),
                                         part.participating_clients.begin(),
                                         part.participating_clients.end());
        rec.cumulative_steps += part.cumulative_steps;
        hashes.push_back(part.global_params_hash);
      }
      std::sort(rec.participating_clients.begin(), rec.participating_clients.end());
      rec.global_params_hash = combine_hashes(hashes);
      std::tie(rec.mean_accuracy, rec.std_accuracy) = mean_std(rec.per_client_test_accuracy);
      report.rounds.push_back(std::move(rec));
    }
    report.clustering = std::move(clustering);
  }

  report.final_per_client_accuracy = report.rounds.back().per_client_test_accuracy;
  // FedAP round records already hold the personalized accuracies of the last
  // global model; the final personalization only adds to the budget.
  if (fedap) report.personalization_steps = personalization_budget(fc, clients);
  finish(report);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  return cfg.method == Method::Centralized ? run_centralized(cfg) : run_federated(cfg);
}

std::int64_t account_budget(const ExperimentReport& report) {
  std::int64_t steps = report.rounds.empty() ? 0 : report.rounds.back().cumulative_steps;
  return steps + report.personalization_steps;
}

LossHierarchy loss_hierarchy(const ModelSpec& spec, std::span<const ClientDataset> clients,
                             const ClusterAssignment& assignment, double grad_tol) {
  if (spec.kind != ModelKind::LogisticRegression)
    throw ConfigError("the loss hierarchy is only well defined for the convex model");
  if (assignment.labels.size() != clients.size())
    throw DimensionError("cluster assignment does not cover every client");
  LossHierarchy h;
  h.converged = true;
  auto note = [&h](const FitResult& f) {
    h.converged = h.converged && f.converged;
    h.worst_gradient_norm = std::max(h.worst_gradient_norm, f.gradient_norm);
  };

  double total_rows = 0.0;
  for (const auto& c : clients) total_rows += static_cast<double>(c.train.size());

  const LabeledDataset all = pool_clients(clients, true);
  const FitResult global =
      minimize_loss(spec, zero_params<double>(spec), all.features, all.label_span(), grad_tol);
  note(global);
  h.global = global.loss;

  for (const auto& members : assignment.members()) {
    std::vector<ClientDataset> group;
    for (int i : members) group.push_back(clients[static_cast<std::size_t>(i)]);
    const LabeledDataset pooled = pool_clients(group, true);
    const FitResult cluster =
        minimize_loss(spec, global.params, pooled.features, pooled.label_span(), grad_tol);
    note(cluster);
    h.cluster += cluster.loss * static_cast<double>(pooled.size()) / total_rows;
    for (const auto& c : group) {
      const FitResult own =
          minimize_loss(spec, cluster.params, c.train.features, c.train.label_span(), grad_tol);
      note(own);
      h.personalized += own.loss * static_cast<double>(c.train.size()) / total_rows;
    }
  }
  return h;
}

}  // namespace fedsim
