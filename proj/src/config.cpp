#include "fedsim/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void reject(const std::string& key, const std::string& accepted, const std::string& value) {
  throw ConfigError("invalid value '" + value + "' for key '" + key + "' (accepted: " + accepted + ")");
}

long long to_integer(const std::string& key, const std::string& accepted, const std::string& v,
                     long long lo, long long hi) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty() || out < lo || out > hi)
    reject(key, accepted, v);
  return out;
}

std::uint64_t to_seed(const std::string& key, const std::string& accepted, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) reject(key, accepted, v);
  return out;
}

double to_real(const std::string& key, const std::string& accepted, const std::string& v, double lo,
               bool lo_open, double hi, bool hi_open) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  const bool ok = ec == std::errc() && ptr == v.data() + v.size() && !v.empty() &&
                  !std::isnan(out) && (lo_open ? out > lo : out >= lo) &&
                  (hi_open ? out < hi : out <= hi);
  if (!ok) reject(key, accepted, v);
  return out;
}

constexpr long long kIntMax = std::numeric_limits<int>::max();
constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename T>
ConfigKey integer_key(std::string name, long long lo, long long hi, T ExperimentConfig::*member) {
  std::string accepted = "integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
  ConfigKey k{std::move(name), accepted, {}, {}};
  k.set = [name = k.name, accepted, lo, hi, member](ExperimentConfig& c, const std::string& v) {
    c.*member = static_cast<T>(to_integer(name, accepted, v, lo, hi));
  };
  k.get = [member](const ExperimentConfig& c) { return std::to_string(c.*member); };
  return k;
}

ConfigKey field_key(std::string name, std::string accepted,
                    std::function<void(ExperimentConfig&, const std::string&, const std::string&,
                                       const std::string&)>
                        set,
                    std::function<std::string(const ExperimentConfig&)> get) {
  ConfigKey k{std::move(name), std::move(accepted), {}, std::move(get)};
  k.set = [name = k.name, accepted = k.accepted, set = std::move(set)](ExperimentConfig& c,
                                                                       const std::string& v) {
    set(c, name, accepted, v);
  };
  return k;
}

std::vector<ConfigKey> build_keys() {
  using C = ExperimentConfig;
  using S = const std::string&;
  std::vector<ConfigKey> keys;
  auto add = [&keys](ConfigKey k) { keys.push_back(std::move(k)); };

  add(field_key(
      "method", "Centralized, FedAvg, FedAvgHC, FedAP, FedAPHC",
      [](C& c, S n, S a, S v) {
        try {
          c.method = parse_method(v);
        } catch (const ConfigError&) {
          reject(n, a, v);
        }
      },
      [](const C& c) { return std::string(method_name(c.method)); }));

  add(field_key(
      "model.kind", "logistic, mlp",
      [](C& c, S n, S a, S v) {
        if (v == "logistic") {
          c.model_kind = ModelKind::LogisticRegression;
        } else if (v == "mlp") {
          c.model_kind = ModelKind::Mlp1;
        } else {
          reject(n, a, v);
        }
      },
      [](const C& c) {
        return std::string(c.model_kind == ModelKind::Mlp1 ? "mlp" : "logistic");
      }));
  add(integer_key("model.hidden_dim", 0, 1 << 20, &C::hidden_dim));

  auto real = [&add](std::string name, double lo, bool lo_open, double hi, bool hi_open,
                     auto ref) {
    std::string accepted = std::string("real in ") + (lo_open ? "(" : "[") + format_double(lo) +
                           ", " + format_double(hi) + (hi_open ? ")" : "]");
    ConfigKey k{std::move(name), accepted, {}, {}};
    k.set = [name = k.name, accepted, lo, lo_open, hi, hi_open, ref](C& c, S v) {
      ref(c) = to_real(name, accepted, v, lo, lo_open, hi, hi_open);
    };
    k.get = [ref](const C& c) { return format_double(ref(c)); };
    add(std::move(k));
  };
  auto integer = [&add](std::string name, long long lo, long long hi,
                        std::function<void(C&, long long)> set,
                        std::function<long long(const C&)> get) {
    std::string accepted = "integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
    ConfigKey k{std::move(name), accepted, {}, {}};
    k.set = [name = k.name, accepted, lo, hi, set](C& c, S v) {
      set(c, to_integer(name, accepted, v, lo, hi));
    };
    k.get = [get](const C& c) { return std::to_string(get(c)); };
    add(std::move(k));
  };
  auto seed = [&add](std::string name, auto ref) {
    ConfigKey k{std::move(name), "unsigned 64-bit integer", {}, {}};
    k.set = [name = k.name, accepted = k.accepted, ref](C& c, S v) {
      ref(c) = to_seed(name, accepted, v);
    };
    k.get = [ref](const C& c) { return std::to_string(ref(c)); };
    add(std::move(k));
  };

  real("fed.local_lr", 0.0, true, kInf, true, [](auto& c) -> auto& { return c.fed.local_lr; });
  integer("fed.inner_epochs", 1, kIntMax, [](C& c, long long v) { c.fed.inner_epochs = static_cast<int>(v); },
          [](const C& c) { return c.fed.inner_epochs; });
  integer("fed.batch_size", 1, kIntMax, [](C& c, long long v) { c.fed.batch_size = v; },
          [](const C& c) { return static_cast<long long>(c.fed.batch_size); });
  integer("fed.meta_batch", 1, kIntMax, [](C& c, long long v) { c.fed.meta_batch = static_cast<int>(v); },
          [](const C& c) { return c.fed.meta_batch; });
  integer("fed.total_rounds", 1, kIntMax, [](C& c, long long v) { c.fed.total_rounds = static_cast<int>(v); },
          [](const C& c) { return c.fed.total_rounds; });
  real("fed.eta0", 0.0, true, kInf, true, [](auto& c) -> auto& { return c.fed.eta0; });
  real("fed.etak", 0.0, true, kInf, true, [](auto& c) -> auto& { return c.fed.etak; });
  integer("fed.personalization_epochs", 0, kIntMax,
          [](C& c, long long v) { c.fed.personalization_epochs = static_cast<int>(v); },
          [](const C& c) { return c.fed.personalization_epochs; });
  seed("fed.seed", [](auto& c) -> auto& { return c.fed.seed; });

  integer("cluster.init_rounds", 0, kIntMax, [](C& c, long long v) { c.cluster_init_rounds = static_cast<int>(v); },
          [](const C& c) { return c.cluster_init_rounds; });
  real("cluster.max_distance", 0.0, true, kInf, false, [](auto& c) -> auto& { return c.max_distance; });

  add(field_key(
      "data.source", "synthetic, csv",
      [](C& c, S n, S a, S v) {
        if (v == "synthetic") {
          c.data.source = DataConfig::Source::Synthetic;
        } else if (v == "csv") {
          c.data.source = DataConfig::Source::Csv;
        } else {
          reject(n, a, v);
        }
      },
      [](const C& c) {
        return std::string(c.data.source == DataConfig::Source::Csv ? "csv" : "synthetic");
      }));
  integer("data.num_classes", 2, 1 << 16, [](C& c, long long v) { c.data.synthetic.num_classes = static_cast<int>(v); },
          [](const C& c) { return c.data.synthetic.num_classes; });
  integer("data.input_dim", 1, 1 << 20, [](C& c, long long v) { c.data.synthetic.input_dim = v; },
          [](const C& c) { return static_cast<long long>(c.data.synthetic.input_dim); });
  integer("data.per_class_count", 1, 1 << 24, [](C& c, long long v) { c.data.synthetic.per_class_count = v; },
          [](const C& c) { return static_cast<long long>(c.data.synthetic.per_class_count); });
  real("data.class_separation", 0.0, true, kInf, true,
       [](auto& c) -> auto& { return c.data.synthetic.class_separation; });
  real("data.noise_sigma", 0.0, true, kInf, true, [](auto& c) -> auto& { return c.data.synthetic.noise_sigma; });

  add(field_key(
      "data.csv_path", "path to a CSV file",
      [](C& c, S, S, S v) { c.data.csv_path = v; },
      [](const C& c) { return c.data.csv_path.string(); }));
  add(field_key(
      "data.label_column", "column name",
      [](C& c, S n, S a, S v) {
        if (v.empty()) reject(n, a, v);
        c.data.csv_schema.label_column = v;
      },
      [](const C& c) { return c.data.csv_schema.label_column; }));
  add(field_key(
      "data.feature_columns", "comma-separated column names, empty for all other columns",
      [](C& c, S, S, S v) {
        c.data.csv_schema.feature_columns.clear();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ','))
          if (!trim(item).empty()) c.data.csv_schema.feature_columns.push_back(trim(item));
      },
      [](const C& c) {
        std::string out;
        for (const auto& f : c.data.csv_schema.feature_columns) out += (out.empty() ? "" : ",") + f;
        return out;
      }));
  integer("data.undersample_cap", 0, 1LL << 40, [](C& c, long long v) { c.data.undersample_cap = v; },
          [](const C& c) { return static_cast<long long>(c.data.undersample_cap); });
  integer("data.shard_size", 1, 1LL << 40, [](C& c, long long v) { c.data.shard_size = v; },
          [](const C& c) { return static_cast<long long>(c.data.shard_size); });
  real("data.train_fraction", 0.0, true, 1.0, true, [](auto& c) -> auto& { return c.data.train_fraction; });
  seed("data.seed", [](auto& c) -> auto& { return c.data.seed; });

  integer("run.extra_rounds", 0, kIntMax, [](C& c, long long v) { c.extra_rounds = static_cast<int>(v); },
          [](const C& c) { return c.extra_rounds; });
  add(field_key(
      "run.output_dir", "directory path",
      [](C& c, S n, S a, S v) {
        if (v.empty()) reject(n, a, v);
        c.output_dir = v;
      },
      [](const C& c) { return c.output_dir.string(); }));
  return keys;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.method = Method::FedAP;
  c.model_kind = ModelKind::LogisticRegression;
  c.fed = FedConfig{};
  c.cluster_init_rounds = 20;
  c.max_distance = 5.0;
  c.data.source = DataConfig::Source::Synthetic;
  c.data.synthetic = SyntheticSpec{};
  c.data.undersample_cap = 500;
  c.data.shard_size = 35;
  c.data.train_fraction = 0.8;
  return c;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      k.set(cfg, trim(value));
      return;
    }
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form KEY=VALUE");
  apply_setting(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg = default_experiment_config();
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys())
    if (k.name != "run.output_dir") out.emplace_back(k.name, k.get(cfg));
  return out;
}

}  // namespace fedsim
