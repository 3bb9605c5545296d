#include "fedsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

std::vector<Index> LabeledDataset::class_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

LabeledDataset LabeledDataset::subset(std::span<const Index> rows) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.class_names = class_names;
  out.features.resize(static_cast<Index>(rows.size()), input_dim());
  out.labels.reserve(rows.size());
  out.row_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = features.row(rows[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
    out.row_ids.push_back(row_ids[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
  if (input_dim < 1) throw ConfigError("data.input_dim must be >= 1");
  if (per_class_count < 1) throw ConfigError("data.per_class_count must be >= 1");
  if (!(class_separation > 0.0)) throw ConfigError("data.class_separation must be > 0");
  if (!(noise_sigma > 0.0)) throw ConfigError("data.noise_sigma must be > 0");
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, Stream::Synthetic));
  const Index d = spec.input_dim;
  const Index c = spec.num_classes;

  Eigen::MatrixXd g(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = rng.normal();
  Eigen::MatrixXd directions(d, c);
  if (d >= c) {
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    directions = q.leftCols(c);
  } else {
    for (Index k = 0; k < c; ++k) {
      Eigen::VectorXd v(d);
      for (Index i = 0; i < d; ++i) v(i) = rng.normal();
      directions.col(k) = v.normalized();
    }
    // spread the directions by Coulomb repulsion on the unit sphere
    for (int it = 0; it < 2000; ++it) {
      Eigen::MatrixXd force = Eigen::MatrixXd::Zero(d, c);
      for (Index a = 0; a < c; ++a)
        for (Index b = 0; b < c; ++b) {
          if (a == b) continue;
          const Eigen::VectorXd diff = directions.col(a) - directions.col(b);
          const double r2 = std::max(diff.squaredNorm(), 1e-12);
          force.col(a) += diff / (r2 * std::sqrt(r2));
        }
      for (Index a = 0; a < c; ++a)
        directions.col(a) = (directions.col(a) + 0.01 * force.col(a)).normalized();
    }
  }

  LabeledDataset out;
  out.num_classes = spec.num_classes;
  const Index n = c * spec.per_class_count;
  out.features.resize(n, d);
  out.labels.reserve(static_cast<std::size_t>(n));
  out.row_ids.reserve(static_cast<std::size_t>(n));
  Index row = 0;
  for (Index k = 0; k < c; ++k) {
    const Eigen::VectorXd mean = spec.class_separation * directions.col(k);
    for (Index i = 0; i < spec.per_class_count; ++i, ++row) {
      for (Index j = 0; j < d; ++j) out.features(row, j) = mean(j) + spec.noise_sigma * rng.normal();
      out.labels.push_back(static_cast<int>(k));
      out.row_ids.push_back(row);
    }
  }
  return out;
}

LabeledDataset undersample(const LabeledDataset& data, Index cap, std::uint64_t seed) {
  if (cap < 1) throw ConfigError("undersample cap must be >= 1");
  Rng rng(derive_seed(seed, Stream::Undersample));
  std::vector<bool> keep(static_cast<std::size_t>(data.size()), false);
  for (int c = 0; c < data.num_classes; ++c) {
    std::vector<Index> rows;
    for (Index i = 0; i < data.size(); ++i)
      if (data.labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
    if (static_cast<Index>(rows.size()) > cap) {
      // partial Fisher-Yates: the first `cap` slots become the sample
      for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
        const std::size_t j = i + rng.below(rows.size() - i);
        std::swap(rows[i], rows[j]);
      }
      rows.resize(static_cast<std::size_t>(cap));
    }
    for (Index r : rows) keep[static_cast<std::size_t>(r)] = true;
  }
  std::vector<Index> selected;
  for (Index i = 0; i < data.size(); ++i)
    if (keep[static_cast<std::size_t>(i)]) selected.push_back(i);
  return data.subset(selected);
}

namespace {

std::string class_label(const LabeledDataset& data, int c) {
  if (static_cast<std::size_t>(c) < data.class_names.size())
    return "'" + data.class_names[static_cast<std::size_t>(c)] + "' (index " + std::to_string(c) + ")";
  return std::to_string(c);
}

}  // namespace

std::vector<ClientDataset> shard_split(const LabeledDataset& data, Index shard_size,
                                       double train_fraction, std::uint64_t seed) {
  if (shard_size < 1) throw ConfigError("shard size must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must lie in (0, 1)");
  const Index test_per_shard =
      static_cast<Index>(std::llround(static_cast<double>(shard_size) * (1.0 - train_fraction)));
  if (test_per_shard < 1 || test_per_shard >= shard_size)
    throw ShardError("shard size " + std::to_string(shard_size) + " with train fraction " +
                     std::to_string(train_fraction) + " leaves an empty train or test partition");

  Rng rng(derive_seed(seed, Stream::ShardSplit));
  const auto counts = data.class_counts();
  for (int c = 0; c < data.num_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] < shard_size)
      throw ShardError("class " + class_label(data, c) + " has " +
                       std::to_string(counts[static_cast<std::size_t>(c)]) +
                       " rows, fewer than the shard size " + std::to_string(shard_size));

  // shards[c] holds the remaining shards of class c
  std::vector<std::vector<std::vector<Index>>> shards(static_cast<std::size_t>(data.num_classes));
  for (int c = 0; c < data.num_classes; ++c) {
    std::vector<Index> rows;
    for (Index i = 0; i < data.size(); ++i)
      if (data.labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
    rng.shuffle(std::span<Index>(rows));
    const std::size_t whole = rows.size() / static_cast<std::size_t>(shard_size);
    for (std::size_t s = 0; s < whole; ++s)
      shards[static_cast<std::size_t>(c)].emplace_back(
          rows.begin() + static_cast<std::ptrdiff_t>(s * shard_size),
          rows.begin() + static_cast<std::ptrdiff_t>((s + 1) * shard_size));
  }

  std::vector<ClientDataset> clients;
  const auto classes = static_cast<std::size_t>(data.num_classes);
  for (;;) {
    std::uint64_t total = 0;
    std::uint64_t largest = 0;
    for (const auto& s : shards) {
      total += s.size();
      largest = std::max<std::uint64_t>(largest, s.size());
    }
    // While every remaining shard can still be paired across classes, only
    // pairs that preserve that property are eligible.
    const bool perfect = 2 * largest <= total;
    auto eligible = [&](std::size_t a, std::size_t b) {
      if (!perfect) return true;
      std::uint64_t rest_max = 0;
      for (std::size_t c = 0; c < classes; ++c) {
        std::uint64_t n = shards[c].size() - (c == a || c == b ? 1 : 0);
        rest_max = std::max(rest_max, n);
      }
      return 2 * rest_max <= total - 2;
    };

    // Each cross-class shard pair is equally likely: weight (a, b) by n_a * n_b.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::uint64_t> weights;
    std::uint64_t weight_sum = 0;
    for (std::size_t a = 0; a < classes; ++a)
      for (std::size_t b = a + 1; b < classes; ++b) {
        const std::uint64_t w = shards[a].size() * shards[b].size();
        if (w == 0 || !eligible(a, b)) continue;
        pairs.emplace_back(a, b);
        weights.push_back(w);
        weight_sum += w;
      }
    if (pairs.empty()) break;

    std::uint64_t pick = rng.below(weight_sum);
    std::size_t chosen = 0;
    while (pick >= weights[chosen]) pick -= weights[chosen++];
    const auto [a, b] = pairs[chosen];

    auto take = [&](std::size_t c) {
      auto& pool = shards[c];
      const auto i = static_cast<std::ptrdiff_t>(rng.below(pool.size()));
      std::vector<Index> shard = std::move(pool[static_cast<std::size_t>(i)]);
      pool.erase(pool.begin() + i);
      return shard;
    };
    const std::vector<Index> first = take(a);
    const std::vector<Index> second = take(b);

    const auto train_len = static_cast<std::ptrdiff_t>(shard_size - test_per_shard);
    std::vector<Index> train_rows;
    std::vector<Index> test_rows;
    for (const auto* shard : {&first, &second}) {
      train_rows.insert(train_rows.end(), shard->begin(), shard->begin() + train_len);
      test_rows.insert(test_rows.end(), shard->begin() + train_len, shard->end());
    }
    ClientDataset client;
    client.client_id = static_cast<int>(clients.size());
    client.train = data.subset(train_rows);
    client.test = data.subset(test_rows);
    client.classes_present = {static_cast<int>(a), static_cast<int>(b)};
    clients.push_back(std::move(client));
  }
  return clients;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_integer(const std::string& s, long long& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    header = split_line(line);
    break;
  }
  if (header.empty()) throw EmptyDataError(path.string() + " is empty");
  for (auto& h : header) h = unquote(h);

  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' not found in " + path.string());
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column_of(schema.label_column);
  std::vector<std::size_t> feature_cols;
  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty())
    for (std::size_t i = 0; i < header.size(); ++i)
      if (i != label_col) feature_names.push_back(header[i]);
  for (const auto& name : feature_names) feature_cols.push_back(column_of(name));
  if (feature_cols.empty()) throw SchemaError(path.string() + " has no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    std::vector<double> values;
    values.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const std::string& cell = cells[feature_cols[k]];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() ||
          !std::isfinite(v))
        throw ParseError(path.string() + " line " + std::to_string(line_no) + ", column '" +
                         feature_names[k] + "': '" + cell + "' is not a number");
      values.push_back(v);
    }
    rows.push_back(std::move(values));
    raw_labels.push_back(unquote(cells[label_col]));
  }
  if (rows.empty()) throw EmptyDataError(path.string() + " has no data rows");

  // Integer labels sort numerically, anything else lexicographically.
  std::vector<std::string> names(raw_labels);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  const bool numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) {
    long long v = 0;
    return parse_integer(s, v);
  });
  if (numeric)
    std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      long long x = 0;
      long long y = 0;
      parse_integer(a, x);
      parse_integer(b, y);
      return x < y;
    });
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = static_cast<int>(i);

  LabeledDataset out;
  out.num_classes = static_cast<int>(names.size());
  out.class_names = names;
  out.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(feature_cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < feature_cols.size(); ++k)
      out.features(static_cast<Index>(r), static_cast<Index>(k)) = rows[r][k];
    out.labels.push_back(index.at(raw_labels[r]));
    out.row_ids.push_back(static_cast<Index>(r));
  }
  return out;
}

void save_csv(const LabeledDataset& data, const std::filesystem::path& path,
              const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << label_column;
  for (Index j = 0; j < data.input_dim(); ++j) out << ",x" << j;
  out << '\n';
  char buf[64];
  for (Index i = 0; i < data.size(); ++i) {
    const int y = data.labels[static_cast<std::size_t>(i)];
    if (static_cast<std::size_t>(y) < data.class_names.size())
      out << data.class_names[static_cast<std::size_t>(y)];
    else
      out << y;
    for (Index j = 0; j < data.input_dim(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, data.features(i, j));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

LabeledDataset pool_clients(std::span<const ClientDataset> clients, bool train) {
  if (clients.empty()) throw EmptyDataError("no clients to pool");
  LabeledDataset out;
  const auto& first = train ? clients.front().train : clients.front().test;
  out.num_classes = first.num_classes;
  out.class_names = first.class_names;
  Index rows = 0;
  for (const auto& c : clients) rows += (train ? c.train : c.test).size();
  out.features.resize(rows, first.input_dim());
  Index r = 0;
  for (const auto& c : clients) {
    const auto& part = train ? c.train : c.test;
    out.features.middleRows(r, part.size()) = part.features;
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    out.row_ids.insert(out.row_ids.end(), part.row_ids.begin(), part.row_ids.end());
    r += part.size();
  }
  return out;
}

}  // namespace fedsim
