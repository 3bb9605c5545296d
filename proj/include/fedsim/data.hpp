#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsim/model.hpp"

namespace fedsim {

/// Labeled feature vectors. `row_ids` records the row each sample came from
/// in the originating dataset so splits can be checked for overlap.
struct LabeledDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<Index> row_ids;
  std::vector<std::string> class_names;
  int num_classes = 0;

  Index size() const { return features.rows(); }
  Index input_dim() const { return features.cols(); }
  std::span<const int> label_span() const { return labels; }

  std::vector<Index> class_counts() const;

  /// Rows `rows` in the given order.
  LabeledDataset subset(std::span<const Index> rows) const;
};

struct ClientDataset {
  int client_id = 0;
  LabeledDataset train;
  LabeledDataset test;
  std::vector<int> classes_present;
};

/// Gaussian-blob benchmark: class c is centred at class_separation * u_c
/// with isotropic noise_sigma, u_c orthonormal when input_dim >= num_classes
/// and otherwise spread apart by repulsion on the unit sphere.
struct SyntheticSpec {
  int num_classes = 7;
  Index input_dim = 2;
  Index per_class_count = 500;
  double class_separation = 18.75;
  double noise_sigma = 6.25;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CsvSchema {
  std::string label_column = "label";
  std::vector<std::string> feature_columns;  // empty: every other column
};

LabeledDataset generate_synthetic(const SyntheticSpec& spec);

/// Keeps min(count_c, cap) rows of each class, sampled without replacement.
/// Surviving rows keep their original relative order.
LabeledDataset undersample(const LabeledDataset& data, Index cap, std::uint64_t seed);

/// Cuts every class into shards of `shard_size` rows and hands each client
/// two shards of different classes. Each shard contributes
/// round(shard_size * (1 - train_fraction)) rows to the client's test set.
std::vector<ClientDataset> shard_split(const LabeledDataset& data, Index shard_size,
                                       double train_fraction, std::uint64_t seed);

/// Class indices follow the sorted order of the distinct label strings.
LabeledDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes a header row and one line per sample with shortest round-trip
/// number formatting, so `load_csv` recovers identical values.
void save_csv(const LabeledDataset& data, const std::filesystem::path& path,
              const std::string& label_column = "label");

/// Concatenation of every client's train (or test) rows, in client order.
LabeledDataset pool_clients(std::span<const ClientDataset> clients, bool train);

}  // namespace fedsim
