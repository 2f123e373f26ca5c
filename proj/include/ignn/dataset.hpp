#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ignn/graph.hpp"
#include "ignn/tensor.hpp"

namespace ignn {

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Node-classification dataset. `graph` holds the raw adjacency A (symmetric,
/// unnormalised); callers normalise explicitly.
struct Dataset {
  std::string name;
  SparseGraph graph;
  Matrix features;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  Splits splits;

  std::size_t num_nodes() const noexcept { return graph.n(); }
  std::size_t num_features() const noexcept { return features.cols(); }
  /// Undirected edges, self loops counted once.
  std::size_t num_edges() const;

  /// Checks label range, split bounds and split disjointness.
  void validate() const;
};

/// File names used inside a dataset directory.
inline constexpr const char* kEdgesFile = "edges.tsv";
inline constexpr const char* kFeaturesFile = "features.tsv";
inline constexpr const char* kLabelsFile = "labels.txt";
inline constexpr const char* kSplitsFile = "splits.txt";

Dataset load_dataset(const std::filesystem::path& edges_path,
                     const std::filesystem::path& features_path,
                     const std::filesystem::path& labels_path,
                     const std::filesystem::path& splits_path);
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Disjoint path graphs. Every node of a chain carries the chain's label, but
/// only the first node's features encode it, so classifying the tail needs
/// information propagated along the whole chain.
Dataset synth_chain(std::size_t num_chains, std::size_t chain_len, std::size_t d,
                    std::uint64_t seed);

struct CiteseerLikeOptions {
  std::size_t nodes = 3327;
  std::size_t edges = 4732;
  std::size_t classes = 6;
  std::size_t features = 3703;
  std::size_t words_per_node = 32;
  double homophily = 0.74;
  double topic_focus = 0.6;
  std::size_t train_per_class = 60;
  std::size_t val = 500;
  std::size_t test = 1000;
};

/// Citation-style random graph matching Citeseer's size: homophilous edges,
/// heavy-tailed degrees and sparse binary bag-of-words features.
Dataset synth_citeseer(std::uint64_t seed, const CiteseerLikeOptions& options = {});

/// Resolves a dataset spec: a directory, "synth:citeseer", or
/// "synth:chain:<chains>:<length>:<features>".
Dataset open_dataset(const std::string& spec, std::uint64_t seed);

}  // namespace ignn
