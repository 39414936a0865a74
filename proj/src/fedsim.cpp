#include "fedgmc/fedsim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

enum SeedTag : std::uint64_t {
  kTagEtf = 1,
  kTagTemplates = 2,
  kTagParams = 3,
  kTagBatch = 4,
  kTagPartition = 5,
  kTagRefine = 6,
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ParseError("history", line, "bad number '" + s + "'");
  return v;
}

std::size_t parse_count(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ParseError("history", line, "bad integer '" + s + "'");
  return v;
}

constexpr const char* kHistoryHeader =
    "round,client_id,ce_loss,sem_loss,str_loss,val_metric,test_metric,anchor_gram_drift,gw_objective_mean";

}  // namespace

void FederationConfig::validate() const {
  if (num_clients < 1) throw ParameterError("config: num_clients must be >= 1");
  if (local_epochs < 1) throw ParameterError("config: local_epochs must be >= 1");
  if (embed_dim < 1 || num_classes < 2) throw ParameterError("config: need embed_dim >= 1 and num_classes >= 2");
  if (embed_dim < num_classes) {
    throw ParameterError("config: embed_dim (" + std::to_string(embed_dim) + ") must be >= num_classes (" +
                         std::to_string(num_classes) + ")");
  }
  if (batch_size < 1 || num_templates < 1) throw ParameterError("config: batch_size and num_templates must be >= 1");
  if (!(base_lr > 0.0) || !(lr_decay_steps > 0.0)) throw ParameterError("config: learning-rate parameters must be positive");
  if (weights.semantic < 0.0 || weights.structural < 0.0) throw ParameterError("config: loss weights must be >= 0");
  if (!(sinkhorn.epsilon > 0.0) || sinkhorn.max_iters < 1 || !(sinkhorn.tol > 0.0)) {
    throw ParameterError("config: invalid sinkhorn settings");
  }
  if (threads < 1) throw ParameterError("config: threads must be >= 1");
  refine.validate();
  if (metric == TaskMetric::kAuc && num_classes != 2) throw ParameterError("config: AUC requires 2 classes");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ tag);
  h = splitmix64(h ^ a);
  return splitmix64(h ^ b);
}

const std::vector<bool>& split_mask(const Graph& g, Split split) {
  switch (split) {
    case Split::kTrain: return g.train_mask;
    case Split::kVal: return g.val_mask;
    case Split::kTest: return g.test_mask;
  }
  return g.test_mask;
}

double accuracy(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask) {
  std::size_t total = 0, correct = 0;
  for (std::size_t v = 0; v < logits.rows(); ++v) {
    if (!mask[v] || labels[v] < 0) continue;
    ++total;
    const auto z = logits.row(v);
    const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (pred == labels[v]) ++correct;
  }
  if (total == 0) throw StateError("accuracy: empty split");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double auc(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask) {
  if (logits.cols() != 2) throw StateError("auc: requires binary logits");
  std::vector<std::pair<double, int>> scored;
  for (std::size_t v = 0; v < logits.rows(); ++v) {
    if (!mask[v] || labels[v] < 0) continue;
    // softmax probability of class 1 = sigmoid(z1 - z0)
    const double p1 = 1.0 / (1.0 + std::exp(logits(v, 0) - logits(v, 1)));
    scored.emplace_back(p1, labels[v]);
  }
  if (scored.empty()) throw StateError("auc: empty split");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (scored[k].second == 1) {
        pos_rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = scored.size() - pos;
  if (pos == 0 || neg == 0) throw StateError("auc: split contains a single class");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double evaluate_metric(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask,
                       TaskMetric metric) {
  return metric == TaskMetric::kAuc ? auc(logits, labels, mask) : accuracy(logits, labels, mask);
}

Client::Client(std::size_t id, Graph graph, ModelParams params)
    : id_(id), graph_(std::move(graph)), agg_(graph_), params_(std::move(params)),
      rotation_(CalibrationRotation::identity(params_.embed_dim())) {}

ClientUpload Client::local_round(const Broadcast& msg, std::size_t round, const FederationConfig& cfg) {
  const std::size_t C = cfg.num_classes;
  const bool use_structural = !cfg.ablation.structural;

  // Calibration targets, frozen for the round.
  ForwardCache cache = forward(params_, graph_, agg_);
  SemanticManifold manifold = class_means(cache.ego, graph_.labels, graph_.train_mask, C);
  rotation_ = manifold.num_present() > 0 ? procrustes(manifold, msg.anchors)
                                         : CalibrationRotation::identity(params_.embed_dim());

  CalibrationTargets targets;
  targets.anchors = &msg.anchors;
  targets.rotation = rotation_;
  if (use_structural) {
    targets.templates = &msg.templates;
    targets.batch = sample_structural_batch(graph_.num_nodes(), cfg.batch_size,
                                            derive_seed(cfg.seed, kTagBatch, id_, round));
    const auto radials = radial_sequences(agg_, cache.ego, targets.batch);
    targets.matching = sinkhorn_match(radials, msg.templates, cfg.sinkhorn);
  }
  LossWeights weights = cfg.weights;
  if (cfg.ablation.semantic) weights.semantic = 0.0;
  if (!use_structural) weights.structural = 0.0;

  ClientUpload up;
  up.client_id = id_;
  for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
    LocalObjective obj = total_loss(params_, graph_, agg_, targets, weights);
    up.epoch_total_loss.push_back(obj.loss.total);
    params_ = sgd_step(params_, obj.grads, learning_rate(cfg.base_lr, cfg.lr_decay_steps, step_));
    ++step_;
  }
  up.loss = evaluate_loss(params_, graph_, agg_, targets, weights);
  up.epoch_total_loss.push_back(up.loss.total);
  if (!std::isfinite(up.loss.total)) throw NumericError("non-finite loss after local training");

  // Reports from the trained model, still under this round's R_m and F_m.
  cache = forward(params_, graph_, agg_);
  manifold = class_means(cache.ego, graph_.labels, graph_.train_mask, C);
  const SemanticLoss sem = semantic_loss(cache.ego, graph_.labels, graph_.train_mask, rotation_, msg.anchors);
  up.semantic.k = Matrix(params_.embed_dim(), C);
  up.semantic.present = manifold.present;
  up.semantic.per_class_loss = sem.per_class;
  for (std::size_t c = 0; c < C; ++c) {
    if (!manifold.present[c]) continue;
    up.semantic.k.set_col(c, matvec(rotation_.r, manifold.p.col(c)));
  }
  if (use_structural) {
    StructuralReport sr;
    for (const auto& r : radial_sequences(agg_, cache.ego, targets.batch)) sr.radials.push_back(r.rows);
    sr.f = targets.matching.f;
    up.structural = std::move(sr);
  }
  up.val_metric = evaluate_metric(cache.logits, graph_.labels, graph_.val_mask, cfg.metric);
  up.test_metric = evaluate_metric(cache.logits, graph_.labels, graph_.test_mask, cfg.metric);
  return up;
}

double Client::evaluate(Split split, TaskMetric metric) const {
  const ForwardCache cache = forward(params_, graph_, agg_);
  return evaluate_metric(cache.logits, graph_.labels, split_mask(graph_, split), metric);
}

Matrix Client::calibrated_embeddings() const {
  const ForwardCache cache = forward(params_, graph_, agg_);
  return matmul_nt(cache.ego, rotation_.r);
}

void Client::export_embeddings(const std::filesystem::path& path) const {
  const Matrix emb = calibrated_embeddings();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "node_id,label";
  for (std::size_t j = 0; j < emb.cols(); ++j) out << ",e_" << j;
  out << '\n';
  for (std::size_t v = 0; v < emb.rows(); ++v) {
    out << graph_.global_ids[v] << ',' << graph_.labels[v];
    for (double x : emb.row(v)) out << ',' << format_double(x);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

double RoundRecord::calibration_loss() const {
  double s = 0.0;
  for (const auto& c : clients) s += c.sem_loss + c.str_loss;
  return s;
}

Federation::Federation(FederationConfig cfg, std::vector<Graph> client_graphs) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (client_graphs.size() != cfg_.num_clients) {
    throw ParameterError("federation: got " + std::to_string(client_graphs.size()) + " client graphs for " +
                         std::to_string(cfg_.num_clients) + " clients");
  }
  anchors_ = construct_etf(cfg_.num_classes, cfg_.embed_dim, derive_seed(cfg_.seed, kTagEtf));
  templates_ = StructuralTemplates::random(cfg_.num_templates, cfg_.embed_dim, derive_seed(cfg_.seed, kTagTemplates));
  clients_.reserve(client_graphs.size());
  for (std::size_t m = 0; m < client_graphs.size(); ++m) {
    Graph& g = client_graphs[m];
    if (g.num_classes != static_cast<int>(cfg_.num_classes)) {
      throw ParameterError("federation: client graph class count differs from config");
    }
    auto params = ModelParams::init(g.feature_dim(), cfg_.embed_dim, cfg_.num_classes,
                                    derive_seed(cfg_.seed, kTagParams, m));
    clients_.emplace_back(m, std::move(g), std::move(params));
  }
}

std::vector<ClientUpload> Federation::collect_uploads() {
  const std::size_t M = clients_.size();
  std::vector<ClientUpload> uploads(M);
  std::vector<std::exception_ptr> errors(M);
  const Broadcast msg{anchors_, templates_};

  auto work = [&](std::size_t m) {
    try {
      uploads[m] = clients_[m].local_round(msg, round_, cfg_);
    } catch (...) {
      errors[m] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(cfg_.threads, M);
  if (workers <= 1) {
    for (std::size_t m = 0; m < M; ++m) work(m);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t m = next++; m < M; m = next++) work(m);
      });
    }
  }

  for (std::size_t m = 0; m < M; ++m) {
    if (!errors[m]) continue;
    try {
      std::rethrow_exception(errors[m]);
    } catch (const std::exception& e) {
      throw FederationError(m, round_, e.what());
    }
  }
  return uploads;
}

RoundRecord Federation::run_round() {
  std::vector<ClientUpload> uploads = collect_uploads();

  RoundRecord rec;
  rec.round = round_;
  for (const auto& up : uploads) {
    rec.clients.push_back({up.client_id, up.loss.ce, up.loss.semantic, up.loss.structural, up.val_metric,
                           up.test_metric});
    rec.mean_test_metric += up.test_metric / static_cast<double>(uploads.size());
    for (std::size_t e = 1; e < up.epoch_total_loss.size(); ++e) {
      if (up.epoch_total_loss[e] > up.epoch_total_loss[e - 1] + 1e-6) rec.local_loss_monotone = false;
    }
  }

  if (!cfg_.ablation.refinement) {
    std::vector<SemanticReport> sem;
    sem.reserve(uploads.size());
    for (auto& up : uploads) sem.push_back(std::move(up.semantic));
    AnchorRefinement ar = refine_all_anchors(anchors_, sem, cfg_.refine);
    anchors_ = std::move(ar.anchors);
    rec.max_anchor_chord = ar.max_chord;
  }
  rec.anchor_gram_drift = anchors_.gram_drift();

  if (!cfg_.ablation.structural) {
    std::vector<StructuralReport> str;
    for (auto& up : uploads) {
      if (up.structural) str.push_back(std::move(*up.structural));
    }
    StructuralTemplates next = templates_;
    RefineConfig rcfg = cfg_.refine;
    rcfg.seed = derive_seed(cfg_.seed, kTagRefine, round_);
    for (std::size_t q = 0; q < templates_.size(); ++q) {
      if (cfg_.ablation.refinement) {
        rec.gw_objective.push_back(template_objective(str, q, templates_.templates[q]));
        continue;
      }
      TemplateUpdate tu = update_template(q, str, templates_, rcfg);
      next.templates[q] = std::move(tu.templ);
      rec.gw_objective.push_back(tu.objective_after);
    }
    templates_ = std::move(next);
    if (!rec.gw_objective.empty()) {
      rec.gw_objective_mean = std::accumulate(rec.gw_objective.begin(), rec.gw_objective.end(), 0.0) /
                              static_cast<double>(rec.gw_objective.size());
    }
  }
  ++round_;
  return rec;
}

std::vector<RoundRecord> Federation::run() {
  std::vector<RoundRecord> history;
  history.reserve(cfg_.rounds);
  while (round_ < cfg_.rounds) history.push_back(run_round());
  return history;
}

FederationResult Federation::result(std::vector<RoundRecord> history) const {
  FederationResult r;
  r.history = std::move(history);
  for (const auto& c : clients_) {
    r.models.push_back(c.params());
    r.rotations.push_back(c.rotation());
  }
  r.anchors = anchors_;
  r.templates = templates_;
  return r;
}

FederationResult run_federation(const FederationConfig& cfg, std::vector<Graph> client_graphs) {
  Federation fed(cfg, std::move(client_graphs));
  auto history = fed.run();
  return fed.result(std::move(history));
}

std::vector<Graph> make_client_graphs(const Graph& dataset, const FederationConfig& cfg, PartitionMode mode) {
  if (cfg.num_clients == 1) return {dataset};
  PartitionSpec spec{cfg.num_clients, mode, derive_seed(cfg.seed, kTagPartition)};
  return partition(dataset, spec);
}

std::string history_csv(std::span<const RoundRecord> records) {
  std::ostringstream out;
  out << kHistoryHeader << '\n';
  for (const auto& r : records) {
    for (const auto& c : r.clients) {
      out << r.round << ',' << c.client_id << ',' << format_double(c.ce_loss) << ',' << format_double(c.sem_loss)
          << ',' << format_double(c.str_loss) << ',' << format_double(c.val_metric) << ','
          << format_double(c.test_metric) << ',' << format_double(r.anchor_gram_drift) << ','
          << format_double(r.gw_objective_mean) << '\n';
    }
  }
  return out.str();
}

void export_history(std::span<const RoundRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << history_csv(records);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<RoundRecord> import_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHistoryHeader) {
    throw ParseError(path.string(), 1, "unexpected history header");
  }
  std::vector<RoundRecord> records;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw ParseError(path.string(), ln, "expected 9 columns");
    const std::size_t round = parse_count(f[0], ln);
    if (records.empty() || records.back().round != round) {
      RoundRecord r;
      r.round = round;
      r.anchor_gram_drift = parse_double(f[7], ln);
      r.gw_objective_mean = parse_double(f[8], ln);
      records.push_back(std::move(r));
    }
    ClientRoundStats c{parse_count(f[1], ln), parse_double(f[2], ln), parse_double(f[3], ln),
                       parse_double(f[4], ln), parse_double(f[5], ln), parse_double(f[6], ln)};
    records.back().clients.push_back(c);
  }
  for (auto& r : records) {
    for (const auto& c : r.clients) r.mean_test_metric += c.test_metric / static_cast<double>(r.clients.size());
  }
  return records;
}

}  // namespace fedgmc
