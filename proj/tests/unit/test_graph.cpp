#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <queue>
#include <set>

#include "fedgmc/errors.hpp"
#include "fedgmc/graph.hpp"
#include "support.hpp"

using namespace fedgmc;
namespace fs = std::filesystem;

namespace {

Graph path_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(static_cast<int>(i), static_cast<int>(i + 1));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  auto g = Graph::from_edges(n, edges, Matrix(n, 2, 1.0), labels, 2);
  return split_masks(std::move(g), {}, 1);
}

std::vector<NodeId> bfs_level(const Graph& g, NodeId src, int level) {
  std::vector<int> dist(g.num_nodes(), -1);
  std::queue<NodeId> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId w : g.neighbors[u]) {
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        q.push(w);
      }
    }
  }
  std::vector<NodeId> out;
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    if (dist[v] == level) out.push_back(static_cast<NodeId>(v));
  return out;
}

void check_disjoint_cover(const Graph& g, const std::vector<Graph>& parts) {
  std::vector<int> owner(g.num_nodes(), -1);
  for (std::size_t m = 0; m < parts.size(); ++m) {
    for (NodeId gid : parts[m].global_ids) {
      CHECK(owner[gid] == -1);
      owner[gid] = static_cast<int>(m);
    }
  }
  for (int o : owner) CHECK(o >= 0);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("fedgmc_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& file, const std::string& text) const {
    std::ofstream(path / file) << text;
    return path / file;
  }
};

}  // namespace

TEST_CASE("from_edges symmetrizes and drops self-loops and duplicates") {
  auto g = Graph::from_edges(3, {{0, 1}, {1, 0}, {1, 1}, {2, 1}}, Matrix(3, 1), {0, 1, 0}, 2);
  CHECK(g.neighbors[0] == std::vector<NodeId>{1});
  CHECK(g.neighbors[1] == std::vector<NodeId>{0, 2});
  CHECK(g.num_edges() == 2);
  CHECK_THROWS_AS(Graph::from_edges(2, {{0, 2}}, Matrix(2, 1), {0, 0}, 1), ValueError);
  CHECK_THROWS_AS(Graph::from_edges(2, {}, Matrix(3, 1), {0, 0}, 1), DimensionError);
}

TEST_CASE("validate reports broken invariants") {
  auto g = path_graph(4);
  g.validate();
  auto asym = g;
  asym.neighbors[0].clear();
  CHECK_THROWS_AS(asym.validate(), ValueError);
  auto overlap = g;
  overlap.train_mask[0] = overlap.val_mask[0] = true;
  CHECK_THROWS_AS(overlap.validate(), ValueError);
  auto unlabeled = g;
  unlabeled.train_mask.assign(4, true);
  unlabeled.val_mask.assign(4, false);
  unlabeled.test_mask.assign(4, false);
  unlabeled.labels[2] = kUnlabeled;
  CHECK_THROWS_AS(unlabeled.validate(), ValueError);
}

TEST_CASE("path of 10 nodes splits into two halves") {
  const Graph g = path_graph(10);
  const auto parts = partition_nonoverlapping(g, {2, PartitionMode::kNonOverlapping, 3});
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].num_nodes() == 5);
  CHECK(parts[1].num_nodes() == 5);
  check_disjoint_cover(g, parts);
  for (const auto& p : parts) {
    p.validate();
    CHECK(p.num_edges() == 4);
  }
}

TEST_CASE("M = n gives singleton clients") {
  const Graph g = testing::random_graph(12, 0.3, 3, 2, 4);
  const auto parts = partition_nonoverlapping(g, {12, PartitionMode::kNonOverlapping, 1});
  REQUIRE(parts.size() == 12);
  for (const auto& p : parts) CHECK(p.num_nodes() == 1);
  check_disjoint_cover(g, parts);
  CHECK_THROWS_AS(partition_nonoverlapping(g, {13, PartitionMode::kNonOverlapping, 1}), ParameterError);
  CHECK_THROWS_AS(partition_nonoverlapping(g, {1, PartitionMode::kNonOverlapping, 1}), ParameterError);
}

TEST_CASE("SBM partitions are disjoint, covering and balanced") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Graph g = split_masks(generate_sbm({600, 2, 0.05, 0.01, 8, 1.0, seed}), {}, seed);
    for (std::size_t M : {2u, 5u, 10u}) {
      const auto parts = partition_nonoverlapping(g, {M, PartitionMode::kNonOverlapping, seed});
      REQUIRE(parts.size() == M);
      check_disjoint_cover(g, parts);
      const double avg = 600.0 / static_cast<double>(M);
      for (const auto& p : parts) {
        p.validate();
        CHECK(static_cast<double>(p.num_nodes()) >= 0.8 * avg);
        CHECK(static_cast<double>(p.num_nodes()) <= 1.2 * avg);
      }
    }
  }
}

TEST_CASE("induced subgraphs keep exactly the internal edges") {
  const Graph g = testing::random_graph(30, 0.2, 2, 2, 8);
  const std::vector<NodeId> nodes{3, 7, 11, 12, 20, 29};
  const Graph sub = induced_subgraph(g, nodes);
  sub.validate();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const bool in_g = std::binary_search(g.neighbors[nodes[i]].begin(), g.neighbors[nodes[i]].end(), nodes[j]);
      const bool in_sub = std::binary_search(sub.neighbors[i].begin(), sub.neighbors[i].end(), static_cast<NodeId>(j));
      CHECK(in_g == in_sub);
    }
    CHECK(sub.labels[i] == g.labels[nodes[i]]);
    CHECK(sub.train_mask[i] == g.train_mask[nodes[i]]);
    CHECK(sub.global_ids[i] == nodes[i]);
  }
  CHECK_THROWS_AS(induced_subgraph(g, {1, 1}), ValueError);
}

TEST_CASE("overlapping partition with M = 5 samples half the graph five times") {
  const Graph g = split_masks(generate_sbm({101, 2, 0.1, 0.02, 4, 1.0, 3}), {}, 3);
  const auto parts = partition_overlapping(g, {5, PartitionMode::kOverlapping, 9});
  REQUIRE(parts.size() == 5);
  for (const auto& p : parts) {
    p.validate();
    CHECK(p.num_nodes() == 51);
    std::set<NodeId> ids(p.global_ids.begin(), p.global_ids.end());
    CHECK(ids.size() == 51);
  }
  CHECK_THROWS_AS(partition_overlapping(g, {7, PartitionMode::kOverlapping, 1}), ParameterError);
}

TEST_CASE("overlapping clients stay inside their coarse part") {
  const Graph g = split_masks(generate_sbm({300, 2, 0.05, 0.01, 4, 1.0, 5}), {}, 5);
  const PartitionSpec spec{10, PartitionMode::kOverlapping, 2};
  const auto parts = partition_overlapping(g, spec);
  REQUIRE(parts.size() == 10);
  const auto coarse = partition_nonoverlapping(g, {2, PartitionMode::kNonOverlapping, spec.seed});
  for (std::size_t m = 0; m < parts.size(); ++m) {
    // clients 5k..5k+4 come from coarse part k
    const auto& home = coarse[m / 5].global_ids;
    std::set<NodeId> allowed(home.begin(), home.end());
    for (NodeId gid : parts[m].global_ids) CHECK(allowed.count(gid) == 1);
    CHECK(parts[m].num_nodes() == (home.size() + 1) / 2);
  }
}

TEST_CASE("overlap between sibling clients matches the hypergeometric mean") {
  const Graph g = split_masks(generate_sbm({200, 2, 0.05, 0.01, 2, 1.0, 1}), {}, 1);
  const double N = 200.0, k = 100.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto parts = partition_overlapping(g, {5, PartitionMode::kOverlapping, seed});
    for (std::size_t a = 0; a < 5; ++a) {
      std::set<NodeId> sa(parts[a].global_ids.begin(), parts[a].global_ids.end());
      for (std::size_t b = a + 1; b < 5; ++b) {
        std::size_t common = 0;
        for (NodeId gid : parts[b].global_ids) common += sa.count(gid);
        total += static_cast<double>(common);
        ++pairs;
      }
    }
  }
  const double expected = k * k / N;
  CHECK(std::abs(total / static_cast<double>(pairs) - expected) <= 0.1 * expected);
}

TEST_CASE("SBM extremes and homophily") {
  const Graph cliques = generate_sbm({40, 2, 1.0, 0.0, 3, 1.0, 7});
  for (std::size_t v = 0; v < cliques.num_nodes(); ++v) {
    CHECK(cliques.neighbors[v].size() == 19);
    for (NodeId u : cliques.neighbors[v]) CHECK(cliques.labels[u] == cliques.labels[v]);
  }
  CHECK(edge_homophily(cliques) == 1.0);

  for (int C : {2, 3}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) mean += edge_homophily(generate_sbm({300, C, 0.03, 0.03, 2, 1.0, seed})) / 20.0;
    CHECK(std::abs(mean - 1.0 / C) <= 0.05);
  }
  CHECK(edge_homophily(generate_sbm({600, 2, 0.01, 0.05, 2, 1.0, 1})) < 0.5);

  const Graph g = generate_sbm({600, 3, 0.02, 0.01, 4, 2.0, 3});
  std::vector<int> count(3, 0);
  for (int y : g.labels) ++count[y];
  for (int c : count) CHECK(c == 200);
  CHECK_THROWS_AS(generate_sbm({10, 2, 1.5, 0.0, 2, 1.0, 1}), ParameterError);
  CHECK_THROWS_AS(generate_sbm({10, 2, 0.5, 0.0, 2, -1.0, 1}), ParameterError);
}

TEST_CASE("zero separation leaves class feature means indistinguishable") {
  const Graph g = generate_sbm({4000, 2, 0.0, 0.0, 3, 0.0, 11});
  std::vector<std::vector<double>> mean(2, std::vector<double>(3, 0.0));
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    for (std::size_t j = 0; j < 3; ++j) mean[g.labels[v]][j] += g.features(v, j) / 2000.0;
  // standard error of each mean is 1/sqrt(2000) ~ 0.022
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(mean[0][j] - mean[1][j]) < 0.15);
  const Graph s = generate_sbm({4000, 2, 0.0, 0.0, 3, 3.0, 11});
  double gap = 0.0;
  std::vector<std::vector<double>> ms(2, std::vector<double>(3, 0.0));
  for (std::size_t v = 0; v < s.num_nodes(); ++v)
    for (std::size_t j = 0; j < 3; ++j) ms[s.labels[v]][j] += s.features(v, j) / 2000.0;
  for (std::size_t j = 0; j < 3; ++j) gap += (ms[0][j] - ms[1][j]) * (ms[0][j] - ms[1][j]);
  CHECK(std::sqrt(gap) > 1.0);
}

TEST_CASE("stratified split sizes") {
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[i] = i % 2;
  Graph g = Graph::from_edges(100, {}, Matrix(100, 1), labels, 2);
  const Graph s = split_masks(g, {}, 5);
  auto count = [](const std::vector<bool>& m) { return std::count(m.begin(), m.end(), true); };
  CHECK(count(s.train_mask) == 20);
  CHECK(count(s.val_mask) == 40);
  CHECK(count(s.test_mask) == 40);
  s.validate();
  CHECK(split_masks(g, {}, 5).train_mask == s.train_mask);
  CHECK_FALSE(split_masks(g, {}, 6).train_mask == s.train_mask);

  const Graph all = split_masks(g, {1.0, 0.0, 0.0}, 5);
  CHECK(count(all.train_mask) == 100);

  labels[0] = kUnlabeled;
  const Graph u = split_masks(Graph::from_edges(100, {}, Matrix(100, 1), labels, 2), {}, 5);
  CHECK_FALSE(u.train_mask[0]);
  CHECK_FALSE(u.val_mask[0]);
  CHECK_FALSE(u.test_mask[0]);
  CHECK_THROWS_AS(split_masks(g, {0.8, 0.4, 0.0}, 1), ParameterError);
  CHECK_THROWS_AS(split_masks(g, {-0.1, 0.5, 0.5}, 1), ParameterError);
}

TEST_CASE("k-hop sets") {
  const Graph path = Graph::from_edges(3, {{0, 1}, {1, 2}}, Matrix(3, 1), {0, 0, 0}, 1);
  CHECK(k_hop_set(path, 0, 1) == std::vector<NodeId>{1});
  CHECK(k_hop_set(path, 0, 2) == std::vector<NodeId>{2});
  const Graph tri = Graph::from_edges(3, {{0, 1}, {1, 2}, {0, 2}}, Matrix(3, 1), {0, 0, 0}, 1);
  for (NodeId v = 0; v < 3; ++v) CHECK(k_hop_set(tri, v, 2).empty());
  CHECK_THROWS_AS(k_hop_set(tri, 3, 1), ValueError);
  CHECK_THROWS_AS(k_hop_set(tri, 0, 3), ParameterError);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = testing::random_graph(40, 0.08, 1, 2, seed);
    for (NodeId v = 0; v < 40; ++v) {
      const auto n1 = k_hop_set(g, v, 1), n2 = k_hop_set(g, v, 2);
      CHECK(n1 == bfs_level(g, v, 1));
      CHECK(n2 == bfs_level(g, v, 2));
      for (NodeId u : n2) {
        CHECK(u != v);
        CHECK_FALSE(std::binary_search(n1.begin(), n1.end(), u));
      }
    }
  }
}

TEST_CASE("graph files round-trip and report parse errors by line") {
  TempDir dir("graph_io");
  Graph g = testing::random_graph(15, 0.3, 3, 3, 2);
  g.labels[4] = kUnlabeled;
  save_graph(g, dir.path / "e.txt", dir.path / "f.txt", dir.path / "l.txt");
  const Graph h = load_graph(dir.path / "e.txt", dir.path / "f.txt", dir.path / "l.txt", 3);
  CHECK(h.neighbors == g.neighbors);
  CHECK(h.features == g.features);
  CHECK(h.labels == g.labels);

  const auto feats = dir.write("feat.txt", "1 2\n3 4\n# comment\n5 6\n");
  const auto labels = dir.write("lab.txt", "0\n1\n-1\n");
  const auto edges = dir.write("edges.txt", "0 1 # first\n\n1 2\n");
  const Graph ok = load_graph(edges, feats, labels);
  CHECK(ok.num_nodes() == 3);
  CHECK(ok.num_classes == 2);
  CHECK(ok.num_edges() == 2);

  auto expect_line = [&](const fs::path& e, const fs::path& f, const fs::path& l, std::size_t line) {
    try {
      load_graph(e, f, l);
      FAIL("expected a parse error");
    } catch (const ParseError& err) {
      CHECK(err.line() == line);
    }
  };
  expect_line(dir.write("bad_e.txt", "0 1\n1 x\n"), feats, labels, 2);
  expect_line(edges, dir.write("bad_f.txt", "1 2\n3\n5 6\n"), labels, 2);
  expect_line(edges, dir.write("bad_f2.txt", "1 2\n3 4\nnan 6\n"), labels, 3);
  expect_line(edges, feats, dir.write("bad_l.txt", "0\n1.5\n0\n"), 2);
  expect_line(dir.write("bad_e2.txt", "0 1 2\n"), feats, labels, 1);

  CHECK_THROWS_AS(load_graph(edges, feats, dir.write("big.txt", "0\n5\n1\n"), 3), ValueError);
  CHECK_THROWS_AS(load_graph(dir.write("oob.txt", "0 9\n"), feats, labels), ValueError);
  CHECK_THROWS_AS(load_graph(dir.path / "missing.txt", feats, labels), IoError);
}
