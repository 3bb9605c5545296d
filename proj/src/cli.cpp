#include "fedsim/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/orchestrator.hpp"
#include "fedsim/report_io.hpp"
#include "fedsim/svg_plot.hpp"

namespace fedsim {

std::string format_accuracy(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f ± %.2f", 100.0 * mean, 100.0 * std);
  return buf;
}

namespace {

struct RunOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  int extra_rounds = -1;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunOptions& opt, std::ostream& out) {
  ExperimentConfig cfg = load_config(opt.config_path);
  for (const auto& o : opt.overrides) apply_override(cfg, o);
  if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
  if (opt.extra_rounds >= 0) cfg.extra_rounds = opt.extra_rounds;
  if (opt.seed) {
    cfg.fed.seed = *opt.seed;
    cfg.data.seed = *opt.seed;
  }
  cfg.validate();
  const ExperimentReport report = run_experiment(cfg);
  write_outputs(report, cfg.output_dir);
  out << method_name(cfg.method) << ": " << format_accuracy(report.final_mean, report.final_std)
      << '\n';
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& svg_path,
                std::ostream& out) {
  std::vector<SavedReport> reports;
  for (const auto& p : paths) reports.push_back(read_report(p));

  std::map<std::string, int> seen;
  std::vector<Curve> curves;
  std::vector<std::string> labels;
  for (const auto& r : reports) {
    const int n = ++seen[r.method];
    std::string label = r.method;
    if (n > 1) label += " (" + std::to_string(n) + ")";
    Curve c;
    c.label = label;
    for (std::size_t i = 0; i < r.mean_accuracy.size(); ++i) {
      c.x.push_back(static_cast<double>(r.cumulative_steps[i]));
      c.y.push_back(100.0 * r.mean_accuracy[i]);
    }
    if (r.clusters) c.marker_x = static_cast<double>(r.clusters->steps_at_clustering);
    curves.push_back(std::move(c));
    labels.push_back(label);
  }

  std::ofstream svg(svg_path, std::ios::binary);
  if (!svg) throw Error("cannot write " + svg_path);
  svg << render_learning_curves(curves, "cumulative training steps", "mean client test accuracy (%)");

  std::size_t width = 6;
  for (const auto& l : labels) width = std::max(width, l.size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << "Method" << "Accuracy (%)\n";
  for (std::size_t i = 0; i < reports.size(); ++i)
    out << std::left << std::setw(static_cast<int>(width) + 2) << labels[i]
        << format_accuracy(reports[i].final_mean, reports[i].final_std) << '\n';
  return kExitOk;
}

int cmd_cluster_report(const std::string& path, std::ostream& out, std::ostream& err) {
  const SavedReport r = read_report(path);
  if (!r.clusters) {
    err << "error: " << path << " was produced by method " << r.method
        << ", which does not cluster clients; use a FedAvgHC or FedAPHC report\n";
    return kExitConfig;
  }
  const auto& c = *r.clusters;
  out << "clusters: " << c.num_clusters << " (threshold " << format_double(c.threshold)
      << ", after round " << c.after_round << ")\n";
  std::vector<std::vector<int>> members(static_cast<std::size_t>(c.num_clusters));
  for (std::size_t i = 0; i < c.labels.size(); ++i)
    members[static_cast<std::size_t>(c.labels[i])].push_back(c.client_ids[i]);
  for (std::size_t k = 0; k < members.size(); ++k) {
    out << "cluster " << k << " (size " << members[k].size() << "):";
    for (int id : members[k]) out << ' ' << id;
    if (members[k].size() == 1) out << " [local-only]";
    out << '\n';
  }
  out << "merge heights:";
  for (const auto& m : c.merges) out << ' ' << format_double(m.distance);
  out << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated learning simulator with clustering and adaptive personalization",
               "fedsim"};
  app.require_subcommand(1);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "run one experiment and write its outputs");
  run->add_option("--config", run_opt.config_path, "experiment config file")->required();
  run->add_option("--override", run_opt.overrides, "KEY=VALUE setting, repeatable");
  run->add_option("--out", run_opt.out_dir, "output directory (run.output_dir)");
  run->add_option("--extra-rounds", run_opt.extra_rounds, "rounds appended to fed.total_rounds")
      ->check(CLI::NonNegativeNumber);
  run->add_option_function<std::uint64_t>(
      "--seed", [&run_opt](const std::uint64_t& s) { run_opt.seed = s; },
      "seed for data and training");

  std::vector<std::string> compare_paths;
  std::string svg_path = "comparison.svg";
  auto* compare = app.add_subcommand("compare", "overlay learning curves of several reports");
  compare->add_option("reports", compare_paths, "report.json files")->required();
  compare->add_option("--out", svg_path, "SVG output path");

  std::string cluster_path;
  auto* clusters = app.add_subcommand("cluster-report", "print the clusters of an HC run");
  clusters->add_option("report", cluster_path, "report.json of a FedAvgHC or FedAPHC run")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opt, out);
    if (*compare) return cmd_compare(compare_paths, svg_path, out);
    return cmd_cluster_report(cluster_path, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SchemaError& e) {
    err << "report error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace fedsim
