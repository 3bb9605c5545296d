#include "fedsim/report_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"

namespace fedsim {

using ojson = nlohmann::ordered_json;

namespace {

std::string model_kind_name(ModelKind k) {
  return k == ModelKind::Mlp1 ? "mlp" : "logistic";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

ojson clustering_to_json(const ClusteringResult& c) {
  ojson merges = ojson::array();
  for (const auto& m : c.dendrogram.merges)
    merges.push_back(ojson::array({m.a, m.b, m.distance, m.size}));
  ojson members = ojson::array();
  for (const auto& group : c.assignment.members()) {
    ojson ids = ojson::array();
    for (int i : group) ids.push_back(c.updates.client_ids[static_cast<std::size_t>(i)]);
    members.push_back(ids);
  }
  return {
      {"after_round", c.after_round},
      {"steps_at_clustering", c.steps_at_clustering},
      {"threshold", c.assignment.threshold_used},
      {"num_clusters", c.assignment.num_clusters},
      {"client_ids", c.updates.client_ids},
      {"labels", c.assignment.labels},
      {"members", members},
      {"dendrogram", {{"leaf_count", c.dendrogram.leaf_count}, {"merges", merges}}},
  };
}

ojson report_to_json(const ExperimentReport& r) {
  ojson config = ojson::object();
  for (const auto& [k, v] : config_echo(r.config)) config[k] = v;

  ojson rounds = ojson::array();
  for (const auto& rec : r.rounds)
    rounds.push_back({
        {"round", rec.round_index},
        {"phase", rec.phase},
        {"participating_clients", rec.participating_clients},
        {"global_params_hash", rec.global_params_hash},
        {"per_client_test_accuracy", rec.per_client_test_accuracy},
        {"mean_accuracy", rec.mean_accuracy},
        {"std_accuracy", rec.std_accuracy},
        {"cumulative_steps", rec.cumulative_steps},
    });

  ojson doc = {
      {"schema", kReportSchema},
      {"method", std::string(method_name(r.config.method))},
      {"config", config},
      {"model",
       {{"kind", model_kind_name(r.model.kind)},
        {"input_dim", r.model.input_dim},
        {"num_classes", r.model.num_classes},
        {"hidden_dim", r.model.hidden_dim},
        {"parameter_count", r.model.parameter_count()}}},
      {"num_clients", r.num_clients},
      {"rounds", rounds},
      {"clustering", r.clustering ? clustering_to_json(*r.clustering) : ojson(nullptr)},
      {"final_per_client_accuracy", r.final_per_client_accuracy},
      {"final_mean", r.final_mean},
      {"final_std", r.final_std},
      {"personalization_steps", r.personalization_steps},
      {"total_steps", account_budget(r)},
  };
  return doc;
}

std::string rounds_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "round,mean_acc,std_acc,cumulative_steps\n";
  for (const auto& rec : r.rounds)
    out << rec.round_index << ',' << format_double(rec.mean_accuracy) << ','
        << format_double(rec.std_accuracy) << ',' << rec.cumulative_steps << '\n';
  return out.str();
}

void write_outputs(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_text(dir / "rounds.csv", rounds_csv(r));
  write_text(dir / "timing.json",
             ojson{{"wall_time_seconds", r.wall_time_seconds}}.dump(2) + "\n");
  if (r.clustering) write_text(dir / "clusters.json", clustering_to_json(*r.clustering).dump(2) + "\n");
}

SavedReport parse_report(const nlohmann::json& doc) {
  try {
    if (!doc.is_object() || doc.value("schema", "") != kReportSchema)
      throw SchemaError(std::string("not a ") + kReportSchema + " document");
    SavedReport s;
    s.method = doc.at("method").get<std::string>();
    for (const auto& rec : doc.at("rounds")) {
      s.round_index.push_back(rec.at("round").get<int>());
      s.mean_accuracy.push_back(rec.at("mean_accuracy").get<double>());
      s.cumulative_steps.push_back(rec.at("cumulative_steps").get<std::int64_t>());
    }
    s.final_mean = doc.at("final_mean").get<double>();
    s.final_std = doc.at("final_std").get<double>();
    s.total_steps = doc.at("total_steps").get<std::int64_t>();
    const auto& c = doc.at("clustering");
    if (!c.is_null()) {
      SavedReport::Clusters cl;
      cl.after_round = c.at("after_round").get<int>();
      cl.steps_at_clustering = c.at("steps_at_clustering").get<std::int64_t>();
      cl.threshold = c.at("threshold").is_null() ? std::numeric_limits<double>::infinity()
                                                : c.at("threshold").get<double>();
      cl.num_clusters = c.at("num_clusters").get<int>();
      cl.client_ids = c.at("client_ids").get<std::vector<int>>();
      cl.labels = c.at("labels").get<std::vector<int>>();
      for (const auto& m : c.at("dendrogram").at("merges"))
        cl.merges.push_back({m.at(0).get<Index>(), m.at(1).get<Index>(), m.at(2).get<double>(),
                             m.at(3).get<Index>()});
      s.clusters = std::move(cl);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed report: ") + e.what());
  }
}

SavedReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read report " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return parse_report(doc);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace fedsim
