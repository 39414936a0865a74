#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "fedgmc/numerics.hpp"

namespace fedgmc {

inline constexpr int kUnlabeled = -1;

using NodeId = std::int32_t;
using Edge = std::pair<NodeId, NodeId>;

// Undirected attributed graph held by one client (or the whole dataset).
//
// Neighbor lists are sorted, deduplicated, symmetric and free of self-loops.
// Masks are pairwise disjoint and every train node carries a label.
// `global_ids` maps local node indices back to the source dataset.
struct Graph {
  std::vector<std::vector<NodeId>> neighbors;
  Matrix features;
  std::vector<int> labels;
  std::vector<bool> train_mask;
  std::vector<bool> val_mask;
  std::vector<bool> test_mask;
  std::vector<NodeId> global_ids;
  int num_classes = 0;

  std::size_t num_nodes() const noexcept { return neighbors.size(); }
  std::size_t num_edges() const;
  std::size_t feature_dim() const noexcept { return features.cols(); }

  // Builds a graph from an edge list; edges are symmetrized, duplicates and
  // self-loops dropped. Masks start empty, global ids are 0..n-1.
  static Graph from_edges(std::size_t n, const std::vector<Edge>& edges, Matrix features,
                          std::vector<int> labels, int num_classes);

  // Throws ValueError naming the first violated invariant.
  void validate() const;
};

enum class PartitionMode { kNonOverlapping, kOverlapping };

struct PartitionSpec {
  std::size_t num_clients = 10;
  PartitionMode mode = PartitionMode::kNonOverlapping;
  std::uint64_t seed = 0;
};

// Induced subgraph on `nodes` (in the given order); masks and labels are inherited.
Graph induced_subgraph(const Graph& g, const std::vector<NodeId>& nodes);

// Balanced region-growing partition: farthest-point seeds, round-robin BFS
// growth to exact target sizes, then one boundary refinement pass.
// Returns the part index of every node.
std::vector<int> partition_assignment(const Graph& g, std::size_t num_parts, std::uint64_t seed);

std::vector<Graph> partition_nonoverlapping(const Graph& g, const PartitionSpec& spec);

// M/5 coarse parts, each sampled five times at ceil(|part|/2) nodes.
std::vector<Graph> partition_overlapping(const Graph& g, const PartitionSpec& spec);

std::vector<Graph> partition(const Graph& g, const PartitionSpec& spec);

struct SbmParams {
  std::size_t num_nodes = 600;
  int num_classes = 2;
  double p_in = 0.05;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  double feature_sep = 1.0;
  std::uint64_t seed = 0;
};

Graph generate_sbm(const SbmParams& params);

// Fraction of edges joining same-class nodes (edges with an unlabeled endpoint ignored).
double edge_homophily(const Graph& g);

struct SplitRatios {
  double train = 0.2;
  double val = 0.4;
  double test = 0.4;
};

// Stratified per class with largest-remainder rounding; unlabeled nodes stay
// outside every mask.
Graph split_masks(Graph g, const SplitRatios& ratios, std::uint64_t seed);

// Reads the three text files. `num_classes` defaults to max label + 1.
Graph load_graph(const std::filesystem::path& edges_path,
                 const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path,
                 std::optional<int> num_classes = std::nullopt);

void save_graph(const Graph& g, const std::filesystem::path& edges_path,
                const std::filesystem::path& features_path,
                const std::filesystem::path& labels_path);

// k = 1: direct neighbors; k = 2: nodes at shortest-path distance exactly 2.
// Result is sorted.
std::vector<NodeId> k_hop_set(const Graph& g, NodeId v, int k);

}  // namespace fedgmc
