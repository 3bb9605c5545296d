#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "fedsim/cli.hpp"
#include "fedsim/config.hpp"

using namespace fedsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("fedsim_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fedsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string small_config(const std::string& method) {
  return "# quick run\n"
         "method = " + method + "\n"
         "fed.total_rounds = 10   # short\n"
         "cluster.init_rounds = 5\n"
         "cluster.max_distance = 0.14\n";
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("default configuration") {
  const ExperimentConfig c = default_experiment_config();
  CHECK(c.fed.local_lr == 0.001);
  CHECK(c.fed.inner_epochs == 1);
  CHECK(c.fed.personalization_epochs == 7);
  CHECK(c.fed.batch_size == 16);
  CHECK(c.fed.eta0 == 1.0);
  CHECK(c.fed.etak == 0.46);
  CHECK(c.fed.total_rounds == 220);
  CHECK(c.fed.meta_batch == 5);
  CHECK(c.cluster_init_rounds == 20);
  CHECK(c.max_distance == 5.0);
  CHECK(c.data.shard_size == 35);
  CHECK(c.data.train_fraction == 0.8);
  CHECK(c.data.undersample_cap == 500);
  CHECK(c.method == Method::FedAP);
}

TEST_CASE("config documents") {
  const ExperimentConfig c = parse_config(
      "  method=FedAvgHC\n\n# a comment line\nfed.local_lr = 0.01 # trailing\n"
      "model.kind = mlp\nmodel.hidden_dim = 8\ndata.feature_columns = a, b\n");
  CHECK(c.method == Method::FedAvgHC);
  CHECK(c.fed.local_lr == 0.01);
  CHECK(c.model_kind == ModelKind::Mlp1);
  CHECK(c.hidden_dim == 8);
  CHECK(c.data.csv_schema.feature_columns == std::vector<std::string>{"a", "b"});

  CHECK(parse_config("").fed.total_rounds == 220);

  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("metalr = 0.5\n").find("metalr") != std::string::npos);
  CHECK(message("method = FedAvg\njunk\n").find("line 2") != std::string::npos);
  const std::string bad_lr = message("fed.local_lr = -1\n");
  CHECK(bad_lr.find("fed.local_lr") != std::string::npos);
  CHECK(bad_lr.find("accepted") != std::string::npos);
  CHECK_FALSE(message("fed.batch_size = 2.5\n").empty());
  CHECK_FALSE(message("fed.total_rounds = 0\n").empty());
  CHECK_FALSE(message("method = FedProx\n").empty());
  CHECK_FALSE(message("data.train_fraction = 1\n").empty());
  CHECK_FALSE(message("fed.etak = nan\n").empty());

  ExperimentConfig o = default_experiment_config();
  apply_override(o, "fed.meta_batch=7");
  CHECK(o.fed.meta_batch == 7);
  CHECK_THROWS_AS(apply_override(o, "fed.meta_batch"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/fedsim.cfg"), ConfigError);
}

TEST_CASE("config echo round trips") {
  ExperimentConfig c = parse_config(small_config("FedAPHC") + "fed.local_lr = 0.1\n");
  c.output_dir = "somewhere";
  const auto echo = config_echo(c);
  for (const auto& [k, v] : echo) CHECK(k != "run.output_dir");
  ExperimentConfig d = default_experiment_config();
  for (const auto& [k, v] : echo) apply_setting(d, k, v);
  CHECK(config_echo(d) == echo);
}

TEST_CASE("number formatting") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 0.46, 123456789.125, -2.5, 0.0})
    CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.46) == "0.46");
  CHECK(format_accuracy(0.841, 0.1453) == "84.1 ± 14.53");
  CHECK(format_accuracy(1.0, 0.0) == "100.0 ± 0.00");
}

TEST_CASE("run writes outputs and repeats byte for byte") {
  TempDir tmp;
  spit(tmp / "a.cfg", small_config("FedAPHC"));
  const Result r1 = cli({"run", "--config", (tmp / "a.cfg").string(), "--out", (tmp / "one").string()});
  REQUIRE(r1.code == kExitOk);
  CHECK(r1.out.rfind("FedAPHC: ", 0) == 0);
  const Result r2 = cli({"run", "--config", (tmp / "a.cfg").string(), "--out", (tmp / "two").string()});
  REQUIRE(r2.code == kExitOk);
  CHECK(r1.out == r2.out);

  const std::string j1 = slurp(tmp / "one" / "report.json");
  CHECK_FALSE(j1.empty());
  CHECK(j1 == slurp(tmp / "two" / "report.json"));
  CHECK(slurp(tmp / "one" / "rounds.csv") == slurp(tmp / "two" / "rounds.csv"));
  CHECK(fs::exists(tmp / "one" / "timing.json"));
  CHECK(fs::exists(tmp / "one" / "clusters.json"));

  const auto doc = read_json(tmp / "one" / "report.json");
  CHECK(doc["schema"] == kReportSchema);
  CHECK(doc["rounds"].size() == 10);
  CHECK(doc["num_clients"] == 49);
  CHECK(r1.out == "FedAPHC: " + format_accuracy(doc["final_mean"], doc["final_std"]) + "\n");

  const std::string csv = slurp(tmp / "one" / "rounds.csv");
  CHECK(csv.rfind("round,mean_acc,std_acc,cumulative_steps\n", 0) == 0);
  CHECK(count_lines(csv) == 11);
}

TEST_CASE("run options") {
  TempDir tmp;
  spit(tmp / "a.cfg", small_config("FedAvg"));
  const std::string cfg = (tmp / "a.cfg").string();

  REQUIRE(cli({"run", "--config", cfg, "--out", (tmp / "o").string(), "--override",
               "fed.total_rounds=3", "--extra-rounds", "2"})
              .code == kExitOk);
  CHECK(read_json(tmp / "o" / "report.json")["rounds"].size() == 5);

  REQUIRE(cli({"run", "--config", cfg, "--out", (tmp / "s0").string()}).code == kExitOk);
  REQUIRE(cli({"run", "--config", cfg, "--out", (tmp / "s1").string(), "--seed", "1"}).code == kExitOk);
  CHECK(slurp(tmp / "s0" / "report.json") != slurp(tmp / "s1" / "report.json"));
  CHECK_FALSE(fs::exists(tmp / "s0" / "clusters.json"));

  spit(tmp / "out.cfg", small_config("FedAvg") + "run.output_dir = " + (tmp / "fromfile").string() + "\n");
  REQUIRE(cli({"run", "--config", (tmp / "out.cfg").string()}).code == kExitOk);
  CHECK(fs::exists(tmp / "fromfile" / "report.json"));
}

TEST_CASE("configuration mistakes exit with code 2") {
  TempDir tmp;
  spit(tmp / "bad.cfg", "metalr = 0.5\n");
  const Result unknown = cli({"run", "--config", (tmp / "bad.cfg").string(), "--out", (tmp / "x").string()});
  CHECK(unknown.code == kExitConfig);
  CHECK(unknown.err.find("metalr") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp / "x" / "report.json"));

  spit(tmp / "a.cfg", small_config("FedAvg"));
  const std::string cfg = (tmp / "a.cfg").string();
  CHECK(cli({"run", "--config", cfg, "--override", "fed.meta_batch=-3"}).code == kExitConfig);
  CHECK(cli({"run", "--config", cfg, "--override", "nonsense"}).code == kExitConfig);
  CHECK(cli({"run", "--config", cfg, "--override", "fed.meta_batch=50", "--out", (tmp / "y").string()}).code ==
        kExitConfig);
  CHECK(cli({"run", "--config", (tmp / "missing.cfg").string()}).code == kExitConfig);
  CHECK(cli({"run"}).code == kExitConfig);
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"fly"}).code == kExitConfig);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("compare and cluster-report") {
  TempDir tmp;
  for (const char* m : {"FedAvg", "FedAvgHC"}) {
    spit(tmp / (std::string(m) + ".cfg"), small_config(m));
    REQUIRE(cli({"run", "--config", (tmp / (std::string(m) + ".cfg")).string(), "--out",
                 (tmp / m).string()})
                .code == kExitOk);
  }
  const std::string avg = (tmp / "FedAvg" / "report.json").string();
  const std::string hc = (tmp / "FedAvgHC" / "report.json").string();
  const std::string svg = (tmp / "cmp.svg").string();

  const Result cmp = cli({"compare", avg, hc, avg, "--out", svg});
  REQUIRE(cmp.code == kExitOk);
  std::istringstream table(cmp.out);
  std::string line;
  std::getline(table, line);
  CHECK(line.rfind("Method", 0) == 0);
  const auto da = read_json(avg);
  const auto dh = read_json(hc);
  const std::string acc_avg = format_accuracy(da["final_mean"], da["final_std"]);
  const std::string acc_hc = format_accuracy(dh["final_mean"], dh["final_std"]);
  std::getline(table, line);
  CHECK(line.rfind("FedAvg ", 0) == 0);
  CHECK(line.find(acc_avg) != std::string::npos);
  std::getline(table, line);
  CHECK(line.rfind("FedAvgHC", 0) == 0);
  CHECK(line.find(acc_hc) != std::string::npos);
  std::getline(table, line);
  CHECK(line.rfind("FedAvg (2)", 0) == 0);

  boost::property_tree::ptree tree;
  std::ifstream in(svg);
  REQUIRE_NOTHROW(boost::property_tree::read_xml(in, tree));
  int curves = 0;
  int markers = 0;
  int legends = 0;
  for (const auto& [tag, node] : tree.get_child("svg")) {
    const std::string cls = node.get("<xmlattr>.class", "");
    if (tag == "polyline" && cls == "curve") {
      ++curves;
      std::istringstream pts(node.get<std::string>("<xmlattr>.points"));
      std::string pt;
      int n = 0;
      while (pts >> pt) ++n;
      CHECK(n == 10);
    }
    if (tag == "line" && cls == "cluster-marker") ++markers;
    if (tag == "g" && cls == "legend") ++legends;
  }
  CHECK(curves == 3);
  CHECK(markers == 1);
  CHECK(legends == 3);

  const Result cr = cli({"cluster-report", hc});
  REQUIRE(cr.code == kExitOk);
  const auto& cl = dh["clustering"];
  const int k = cl["num_clusters"];
  CHECK(cr.out.rfind("clusters: " + std::to_string(k) + " (threshold 0.14, after round 5)\n", 0) == 0);
  std::istringstream rep(cr.out);
  int cluster_lines = 0;
  std::size_t listed = 0;
  while (std::getline(rep, line)) {
    if (line.rfind("cluster ", 0) == 0) {
      ++cluster_lines;
      const auto size_at = line.find("(size ");
      listed += std::stoul(line.substr(size_at + 6));
    }
    if (line.rfind("merge heights:", 0) == 0) {
      std::istringstream hs(line.substr(14));
      double h = 0;
      int n = 0;
      while (hs >> h) ++n;
      CHECK(n == 48);
    }
  }
  CHECK(cluster_lines == k);
  CHECK(listed == 49);

  const Result flat = cli({"cluster-report", avg});
  CHECK(flat.code == kExitConfig);
  CHECK(flat.err.find("FedAvg") != std::string::npos);

  spit(tmp / "junk.json", "{\"schema\": \"other\"}");
  CHECK(cli({"cluster-report", (tmp / "junk.json").string()}).code == kExitConfig);
  CHECK(cli({"compare", (tmp / "junk.json").string(), "--out", svg}).code == kExitConfig);
  spit(tmp / "broken.json", "{not json");
  CHECK(cli({"cluster-report", (tmp / "broken.json").string()}).code == kExitConfig);
}

TEST_CASE("the installed binary behaves like cli_main") {
  TempDir tmp;
  spit(tmp / "a.cfg", small_config("FedAP"));
  const std::string cmd = std::string(FEDSIM_CLI_PATH) + " run --config " + (tmp / "a.cfg").string() +
                          " --out " + (tmp / "bin").string() + " > " + (tmp / "stdout.txt").string();
  REQUIRE(std::system(cmd.c_str()) == 0);
  REQUIRE(cli({"run", "--config", (tmp / "a.cfg").string(), "--out", (tmp / "lib").string()}).code == kExitOk);
  CHECK(slurp(tmp / "bin" / "report.json") == slurp(tmp / "lib" / "report.json"));
  CHECK(slurp(tmp / "stdout.txt").rfind("FedAP: ", 0) == 0);

  spit(tmp / "bad.cfg", "metalr = 1\n");
  const std::string bad = std::string(FEDSIM_CLI_PATH) + " run --config " + (tmp / "bad.cfg").string() + " 2> /dev/null";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == kExitConfig);
}
