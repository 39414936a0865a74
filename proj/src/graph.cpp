#include "fedgmc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

constexpr int kUnassigned = -1;
constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

// Multi-source BFS hop distances; unreachable nodes stay kUnreached.
std::vector<std::size_t> bfs_distances(const Graph& g, const std::vector<NodeId>& sources) {
  std::vector<std::size_t> dist(g.num_nodes(), kUnreached);
  std::deque<NodeId> queue;
  for (NodeId s : sources) {
    if (dist[s] == kUnreached) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    for (NodeId u : g.neighbors[v]) {
      if (dist[u] == kUnreached) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

std::vector<NodeId> farthest_point_seeds(const Graph& g, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = g.num_nodes();
  std::vector<NodeId> seeds;
  seeds.reserve(k);
  seeds.push_back(static_cast<NodeId>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)));
  std::vector<bool> is_seed(n, false);
  is_seed[seeds[0]] = true;
  while (seeds.size() < k) {
    const auto dist = bfs_distances(g, seeds);
    NodeId best = -1;
    for (std::size_t v = 0; v < n; ++v) {
      if (is_seed[v]) continue;
      if (best < 0 || dist[v] > dist[best]) best = static_cast<NodeId>(v);
    }
    seeds.push_back(best);
    is_seed[best] = true;
  }
  // The random start usually sits mid-graph; move it to the periphery.
  if (k >= 2) {
    is_seed[seeds[0]] = false;
    const auto dist = bfs_distances(g, std::vector<NodeId>(seeds.begin() + 1, seeds.end()));
    NodeId best = -1;
    for (std::size_t v = 0; v < n; ++v) {
      if (is_seed[v]) continue;
      if (best < 0 || dist[v] > dist[best]) best = static_cast<NodeId>(v);
    }
    seeds[0] = best;
    is_seed[best] = true;
  }
  return seeds;
}

std::vector<std::size_t> balanced_targets(std::size_t n, std::size_t parts) {
  std::vector<std::size_t> t(parts, n / parts);
  for (std::size_t k = 0; k < n % parts; ++k) ++t[k];
  return t;
}

void refine_boundary(const Graph& g, std::vector<int>& part, std::vector<std::size_t>& sizes,
                     std::size_t lo, std::size_t hi) {
  const std::size_t parts = sizes.size();
  std::vector<int> links(parts);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const int from = part[v];
    std::fill(links.begin(), links.end(), 0);
    for (NodeId u : g.neighbors[v]) ++links[part[u]];
    int best = from;
    for (std::size_t p = 0; p < parts; ++p) {
      if (links[p] > links[best]) best = static_cast<int>(p);
    }
    if (best == from || sizes[from] <= lo || sizes[best] >= hi) continue;
    part[v] = best;
    --sizes[from];
    ++sizes[best];
  }
}

std::vector<std::string> split_fields(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// Drops comments and surrounding whitespace; returns false for blank lines.
bool content_of(std::string& line) {
  if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
  return line.find_first_not_of(" \t\r\n") != std::string::npos;
}

long long parse_integer(const std::string& tok, const std::string& source, std::size_t line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &used);
  } catch (const std::exception&) {
    throw ParseError(source, line, "expected integer, got '" + tok + "'");
  }
  if (used != tok.size()) throw ParseError(source, line, "expected integer, got '" + tok + "'");
  return v;
}

double parse_real(const std::string& tok, const std::string& source, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ParseError(source, line, "expected number, got '" + tok + "'");
  }
  if (used != tok.size() || !std::isfinite(v)) {
    throw ParseError(source, line, "expected finite number, got '" + tok + "'");
  }
  return v;
}

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  return in;
}

}  // namespace

std::size_t Graph::num_edges() const {
  std::size_t deg = 0;
  for (const auto& nb : neighbors) deg += nb.size();
  return deg / 2;
}

Graph Graph::from_edges(std::size_t n, const std::vector<Edge>& edges, Matrix features,
                        std::vector<int> labels, int num_classes) {
  if (features.rows() != n) throw DimensionError("Graph: feature rows != node count");
  if (labels.size() != n) throw DimensionError("Graph: label count != node count");
  Graph g;
  g.neighbors.resize(n);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
      throw ValueError("Graph: edge endpoint out of range");
    }
    if (u == v) continue;
    g.neighbors[u].push_back(v);
    g.neighbors[v].push_back(u);
  }
  for (auto& nb : g.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.num_classes = num_classes;
  g.train_mask.assign(n, false);
  g.val_mask.assign(n, false);
  g.test_mask.assign(n, false);
  g.global_ids.resize(n);
  std::iota(g.global_ids.begin(), g.global_ids.end(), NodeId{0});
  g.validate();
  return g;
}

void Graph::validate() const {
  const std::size_t n = num_nodes();
  if (features.rows() != n || labels.size() != n || train_mask.size() != n ||
      val_mask.size() != n || test_mask.size() != n || global_ids.size() != n) {
    throw ValueError("Graph: per-node arrays disagree on node count");
  }
  if (!all_finite(features)) throw ValueError("Graph: non-finite feature");
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = neighbors[v];
    for (std::size_t i = 0; i < nb.size(); ++i) {
      const NodeId u = nb[i];
      if (u < 0 || static_cast<std::size_t>(u) >= n) throw ValueError("Graph: neighbor out of range");
      if (static_cast<std::size_t>(u) == v) throw ValueError("Graph: self-loop");
      if (i > 0 && nb[i - 1] >= u) throw ValueError("Graph: neighbor list not sorted/unique");
      if (!std::binary_search(neighbors[u].begin(), neighbors[u].end(), static_cast<NodeId>(v))) {
        throw ValueError("Graph: asymmetric adjacency");
      }
    }
    if (labels[v] < kUnlabeled || labels[v] >= num_classes) throw ValueError("Graph: label out of range");
    if (int(train_mask[v]) + int(val_mask[v]) + int(test_mask[v]) > 1) {
      throw ValueError("Graph: masks overlap");
    }
    if (train_mask[v] && labels[v] == kUnlabeled) throw ValueError("Graph: unlabeled train node");
  }
}

Graph induced_subgraph(const Graph& g, const std::vector<NodeId>& nodes) {
  const std::size_t n = nodes.size();
  std::vector<NodeId> local(g.num_nodes(), -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (local[nodes[i]] >= 0) throw ValueError("induced_subgraph: duplicate node");
    local[nodes[i]] = static_cast<NodeId>(i);
  }
  Graph s;
  s.num_classes = g.num_classes;
  s.neighbors.resize(n);
  s.features = Matrix(n, g.feature_dim());
  s.labels.resize(n);
  s.train_mask.resize(n);
  s.val_mask.resize(n);
  s.test_mask.resize(n);
  s.global_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId v = nodes[i];
    for (NodeId u : g.neighbors[v]) {
      if (local[u] >= 0) s.neighbors[i].push_back(local[u]);
    }
    std::sort(s.neighbors[i].begin(), s.neighbors[i].end());
    std::copy(g.features.row(v).begin(), g.features.row(v).end(), s.features.row(i).begin());
    s.labels[i] = g.labels[v];
    s.train_mask[i] = g.train_mask[v];
    s.val_mask[i] = g.val_mask[v];
    s.test_mask[i] = g.test_mask[v];
    s.global_ids[i] = g.global_ids[v];
  }
  return s;
}

std::vector<int> partition_assignment(const Graph& g, std::size_t num_parts, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  if (num_parts == 0) throw ParameterError("partition: need at least one part");
  if (num_parts > n) {
    throw ParameterError("partition: " + std::to_string(num_parts) + " parts for " +
                         std::to_string(n) + " nodes");
  }
  std::vector<int> part(n, kUnassigned);
  if (num_parts == 1) {
    std::fill(part.begin(), part.end(), 0);
    return part;
  }

  std::mt19937_64 rng(seed);
  const auto seeds = farthest_point_seeds(g, num_parts, rng);
  auto targets = balanced_targets(n, num_parts);
  std::vector<std::size_t> sizes(num_parts, 0);
  std::vector<std::deque<NodeId>> fronts(num_parts);
  for (std::size_t p = 0; p < num_parts; ++p) {
    part[seeds[p]] = static_cast<int>(p);
    sizes[p] = 1;
    fronts[p].push_back(seeds[p]);
  }

  std::size_t assigned = num_parts;
  std::size_t next_free = 0;  // scan pointer for reseeding stalled parts
  while (assigned < n) {
    for (std::size_t p = 0; p < num_parts && assigned < n; ++p) {
      if (sizes[p] >= targets[p]) continue;
      bool grew = false;
      while (!fronts[p].empty() && !grew) {
        const NodeId v = fronts[p].front();
        for (NodeId u : g.neighbors[v]) {
          if (part[u] == kUnassigned) {
            part[u] = static_cast<int>(p);
            ++sizes[p];
            ++assigned;
            fronts[p].push_back(u);
            grew = true;
            break;
          }
        }
        if (!grew) fronts[p].pop_front();
      }
      if (!grew) {
        // Front exhausted (component boundary or enclosed): restart elsewhere.
        while (part[next_free] != kUnassigned) ++next_free;
        part[next_free] = static_cast<int>(p);
        ++sizes[p];
        ++assigned;
        fronts[p].push_back(static_cast<NodeId>(next_free));
      }
    }
  }

  const double avg = static_cast<double>(n) / static_cast<double>(num_parts);
  const std::size_t lo = std::min(static_cast<std::size_t>(std::ceil(avg * 0.9)), n / num_parts);
  const std::size_t hi =
      std::max(static_cast<std::size_t>(std::floor(avg * 1.1)), (n + num_parts - 1) / num_parts);
  refine_boundary(g, part, sizes, lo, hi);
  return part;
}

std::vector<Graph> partition_nonoverlapping(const Graph& g, const PartitionSpec& spec) {
  if (spec.num_clients < 2) throw ParameterError("partition: need at least 2 clients");
  const auto part = partition_assignment(g, spec.num_clients, spec.seed);
  std::vector<std::vector<NodeId>> members(spec.num_clients);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) members[part[v]].push_back(static_cast<NodeId>(v));
  std::vector<Graph> out;
  out.reserve(spec.num_clients);
  for (const auto& m : members) out.push_back(induced_subgraph(g, m));
  return out;
}

std::vector<Graph> partition_overlapping(const Graph& g, const PartitionSpec& spec) {
  constexpr std::size_t kSamplesPerPart = 5;
  if (spec.num_clients == 0 || spec.num_clients % kSamplesPerPart != 0) {
    throw ParameterError("overlapping partition: client count must be a positive multiple of 5, got " +
                         std::to_string(spec.num_clients));
  }
  const std::size_t coarse = spec.num_clients / kSamplesPerPart;
  const auto part = partition_assignment(g, coarse, spec.seed);
  std::vector<std::vector<NodeId>> members(coarse);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) members[part[v]].push_back(static_cast<NodeId>(v));

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Graph> out;
  out.reserve(spec.num_clients);
  for (const auto& pool : members) {
    const std::size_t half = (pool.size() + 1) / 2;
    for (std::size_t s = 0; s < kSamplesPerPart; ++s) {
      std::vector<NodeId> sample = pool;
      for (std::size_t i = 0; i < half; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, sample.size() - 1);
        std::swap(sample[i], sample[pick(rng)]);
      }
      sample.resize(half);
      std::sort(sample.begin(), sample.end());
      out.push_back(induced_subgraph(g, sample));
    }
  }
  return out;
}

std::vector<Graph> partition(const Graph& g, const PartitionSpec& spec) {
  return spec.mode == PartitionMode::kOverlapping ? partition_overlapping(g, spec)
                                                  : partition_nonoverlapping(g, spec);
}

Graph generate_sbm(const SbmParams& p) {
  if (p.p_in < 0.0 || p.p_in > 1.0 || p.p_out < 0.0 || p.p_out > 1.0) {
    throw ParameterError("sbm: probabilities must lie in [0,1]");
  }
  if (p.feature_sep < 0.0) throw ParameterError("sbm: feature separation must be >= 0");
  if (p.num_classes < 1) throw ParameterError("sbm: need at least one class");
  if (p.feature_dim < 1) throw ParameterError("sbm: feature dimension must be >= 1");
  const std::size_t n = p.num_nodes;
  const auto C = static_cast<std::size_t>(p.num_classes);

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v % C);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double prob = labels[u] == labels[v] ? p.p_in : p.p_out;
      if (unif(rng) < prob) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  }

  Matrix means(C, p.feature_dim);
  for (std::size_t c = 0; c < C; ++c) {
    auto row = means.row(c);
    for (double& x : row) x = normal(rng);
    const double nrm = norm2(row);
    for (double& x : row) x = x / nrm * p.feature_sep;
  }
  Matrix features(n, p.feature_dim);
  for (std::size_t v = 0; v < n; ++v) {
    auto mu = means.row(static_cast<std::size_t>(labels[v]));
    auto row = features.row(v);
    for (std::size_t j = 0; j < p.feature_dim; ++j) row[j] = mu[j] + normal(rng);
  }
  return Graph::from_edges(n, edges, std::move(features), std::move(labels), p.num_classes);
}

double edge_homophily(const Graph& g) {
  std::size_t same = 0, total = 0;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    for (NodeId u : g.neighbors[v]) {
      if (static_cast<std::size_t>(u) <= v) continue;
      if (g.labels[v] == kUnlabeled || g.labels[u] == kUnlabeled) continue;
      ++total;
      if (g.labels[v] == g.labels[u]) ++same;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(total);
}

Graph split_masks(Graph g, const SplitRatios& r, std::uint64_t seed) {
  const double sum = r.train + r.val + r.test;
  if (r.train < 0.0 || r.val < 0.0 || r.test < 0.0 || !(sum > 0.0) || sum > 1.0 + 1e-12) {
    throw ParameterError("split: ratios must be non-negative with 0 < sum <= 1");
  }
  const std::size_t n = g.num_nodes();
  g.train_mask.assign(n, false);
  g.val_mask.assign(n, false);
  g.test_mask.assign(n, false);

  std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(std::max(g.num_classes, 0)));
  for (std::size_t v = 0; v < n; ++v) {
    if (g.labels[v] != kUnlabeled) by_class[g.labels[v]].push_back(static_cast<NodeId>(v));
  }

  std::mt19937_64 rng(seed);
  const std::array<double, 3> ratios{r.train, r.val, r.test};
  for (auto& nodes : by_class) {
    std::shuffle(nodes.begin(), nodes.end(), rng);
    const double count = static_cast<double>(nodes.size());
    const auto total = static_cast<std::size_t>(std::floor(count * sum + 1e-9));
    std::array<std::size_t, 3> quota{};
    std::array<double, 3> frac{};
    std::size_t given = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double exact = ratios[k] * count;
      quota[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[k] = exact - static_cast<double>(quota[k]);
      given += quota[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; given < total && i < 3; ++i, ++given) ++quota[order[i]];

    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      auto& mask = k == 0 ? g.train_mask : k == 1 ? g.val_mask : g.test_mask;
      for (std::size_t i = 0; i < quota[k]; ++i) mask[nodes[pos++]] = true;
    }
  }
  return g;
}

Graph load_graph(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path, std::optional<int> num_classes) {
  std::vector<double> feat;
  std::size_t dim = 0, n = 0;
  {
    auto in = open_input(features_path);
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
      if (!content_of(line)) continue;
      const auto fields = split_fields(line);
      if (n == 0) dim = fields.size();
      if (fields.size() != dim) {
        throw ParseError(features_path.string(), ln,
                         "expected " + std::to_string(dim) + " values, got " + std::to_string(fields.size()));
      }
      for (const auto& f : fields) feat.push_back(parse_real(f, features_path.string(), ln));
      ++n;
    }
  }
  if (n == 0) throw ParseError(features_path.string(), 0, "no feature rows");

  std::vector<int> labels;
  {
    auto in = open_input(labels_path);
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
      if (!content_of(line)) continue;
      const auto fields = split_fields(line);
      if (fields.size() != 1) throw ParseError(labels_path.string(), ln, "expected one label");
      const long long y = parse_integer(fields[0], labels_path.string(), ln);
      if (y < kUnlabeled) throw ValueError(labels_path.string() + ":" + std::to_string(ln) + ": negative label");
      if (num_classes && y >= *num_classes) {
        throw ValueError(labels_path.string() + ":" + std::to_string(ln) + ": label " +
                         std::to_string(y) + " >= class count " + std::to_string(*num_classes));
      }
      labels.push_back(static_cast<int>(y));
    }
  }
  if (labels.size() != n) {
    throw ParseError(labels_path.string(), labels.size(),
                     "label count " + std::to_string(labels.size()) + " != feature rows " + std::to_string(n));
  }

  std::vector<Edge> edges;
  {
    auto in = open_input(edges_path);
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
      if (!content_of(line)) continue;
      const auto fields = split_fields(line);
      if (fields.size() != 2) throw ParseError(edges_path.string(), ln, "expected 'u v'");
      const long long u = parse_integer(fields[0], edges_path.string(), ln);
      const long long v = parse_integer(fields[1], edges_path.string(), ln);
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
        throw ValueError(edges_path.string() + ":" + std::to_string(ln) + ": node index out of range");
      }
      edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  }

  const int classes =
      num_classes.value_or(labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1);
  return Graph::from_edges(n, edges, Matrix(n, dim, std::move(feat)), std::move(labels), classes);
}

void save_graph(const Graph& g, const std::filesystem::path& edges_path,
                const std::filesystem::path& features_path, const std::filesystem::path& labels_path) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out.precision(17);
    return out;
  };
  auto e = open(edges_path);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    for (NodeId u : g.neighbors[v]) {
      if (static_cast<std::size_t>(u) > v) e << v << ' ' << u << '\n';
    }
  }
  auto f = open(features_path);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const auto row = g.features.row(v);
    for (std::size_t j = 0; j < row.size(); ++j) f << (j ? " " : "") << row[j];
    f << '\n';
  }
  auto l = open(labels_path);
  for (int y : g.labels) l << y << '\n';
  if (!e || !f || !l) throw IoError("write failed for graph files");
}

std::vector<NodeId> k_hop_set(const Graph& g, NodeId v, int k) {
  if (v < 0 || static_cast<std::size_t>(v) >= g.num_nodes()) throw ValueError("k_hop_set: node out of range");
  if (k == 1) return g.neighbors[v];
  if (k != 2) throw ParameterError("k_hop_set: k must be 1 or 2");
  std::vector<NodeId> out;
  const auto& n1 = g.neighbors[v];
  for (NodeId u : n1) {
    for (NodeId w : g.neighbors[u]) {
      if (w != v && !std::binary_search(n1.begin(), n1.end(), w)) out.push_back(w);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace fedgmc
