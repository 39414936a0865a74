#include "fedgmc/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

struct BadValue {
  std::string what;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw BadValue{"expected a number, got '" + v + "'"};
  return out;
}

std::uint64_t to_count(const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw BadValue{"expected a non-negative integer, got '" + v + "'"};
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw BadValue{"expected true/false, got '" + v + "'"};
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)>;

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base) {
  std::filesystem::path p(v);
  return p.is_relative() && !base.empty() ? base / p : p;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"federation.clients", [](RunConfig& c, const std::string& v, auto&) { c.federation.num_clients = to_count(v); }},
      {"federation.rounds", [](RunConfig& c, const std::string& v, auto&) { c.federation.rounds = to_count(v); }},
      {"federation.local_epochs", [](RunConfig& c, const std::string& v, auto&) { c.federation.local_epochs = to_count(v); }},
      {"federation.embed_dim", [](RunConfig& c, const std::string& v, auto&) { c.federation.embed_dim = to_count(v); }},
      {"federation.batch_size", [](RunConfig& c, const std::string& v, auto&) { c.federation.batch_size = to_count(v); }},
      {"federation.templates", [](RunConfig& c, const std::string& v, auto&) { c.federation.num_templates = to_count(v); }},
      {"federation.seed", [](RunConfig& c, const std::string& v, auto&) { c.federation.seed = to_count(v); }},
      {"federation.threads", [](RunConfig& c, const std::string& v, auto&) { c.federation.threads = to_count(v); }},
      {"federation.metric",
       [](RunConfig& c, const std::string& v, auto&) {
         if (v == "accuracy") c.federation.metric = TaskMetric::kAccuracy;
         else if (v == "auc") c.federation.metric = TaskMetric::kAuc;
         else throw BadValue{"metric must be accuracy or auc"};
       }},
      {"federation.partition",
       [](RunConfig& c, const std::string& v, auto&) {
         if (v == "nonoverlapping") c.partition_mode = PartitionMode::kNonOverlapping;
         else if (v == "overlapping") c.partition_mode = PartitionMode::kOverlapping;
         else throw BadValue{"partition must be nonoverlapping or overlapping"};
       }},
      {"ablation.semantic", [](RunConfig& c, const std::string& v, auto&) { c.federation.ablation.semantic = to_bool(v); }},
      {"ablation.structural", [](RunConfig& c, const std::string& v, auto&) { c.federation.ablation.structural = to_bool(v); }},
      {"ablation.refinement", [](RunConfig& c, const std::string& v, auto&) { c.federation.ablation.refinement = to_bool(v); }},
      {"optim.lr", [](RunConfig& c, const std::string& v, auto&) { c.federation.base_lr = to_real(v); }},
      {"optim.lr_decay_steps", [](RunConfig& c, const std::string& v, auto&) { c.federation.lr_decay_steps = to_real(v); }},
      {"loss.semantic_weight", [](RunConfig& c, const std::string& v, auto&) { c.federation.weights.semantic = to_real(v); }},
      {"loss.structural_weight", [](RunConfig& c, const std::string& v, auto&) { c.federation.weights.structural = to_real(v); }},
      {"refine.tau", [](RunConfig& c, const std::string& v, auto&) { c.federation.refine.tau = to_real(v); }},
      {"refine.eta", [](RunConfig& c, const std::string& v, auto&) { c.federation.refine.eta = to_real(v); }},
      {"refine.eps", [](RunConfig& c, const std::string& v, auto&) { c.federation.refine.eps = to_real(v); }},
      {"sinkhorn.epsilon", [](RunConfig& c, const std::string& v, auto&) { c.federation.sinkhorn.epsilon = to_real(v); }},
      {"sinkhorn.max_iters", [](RunConfig& c, const std::string& v, auto&) { c.federation.sinkhorn.max_iters = to_count(v); }},
      {"sinkhorn.tol", [](RunConfig& c, const std::string& v, auto&) { c.federation.sinkhorn.tol = to_real(v); }},
      {"data.source",
       [](RunConfig& c, const std::string& v, auto&) {
         if (v == "sbm") c.data.source = DataSource::kSbm;
         else if (v == "files") c.data.source = DataSource::kFiles;
         else throw BadValue{"source must be sbm or files"};
       }},
      {"data.nodes", [](RunConfig& c, const std::string& v, auto&) { c.data.sbm.num_nodes = to_count(v); }},
      {"data.classes",
       [](RunConfig& c, const std::string& v, auto&) {
         const auto k = static_cast<int>(to_count(v));
         c.data.sbm.num_classes = k;
         c.data.num_classes = k;
       }},
      {"data.p_in", [](RunConfig& c, const std::string& v, auto&) { c.data.sbm.p_in = to_real(v); }},
      {"data.p_out", [](RunConfig& c, const std::string& v, auto&) { c.data.sbm.p_out = to_real(v); }},
      {"data.feature_dim", [](RunConfig& c, const std::string& v, auto&) { c.data.sbm.feature_dim = to_count(v); }},
      {"data.feature_sep", [](RunConfig& c, const std::string& v, auto&) { c.data.sbm.feature_sep = to_real(v); }},
      {"data.seed", [](RunConfig& c, const std::string& v, auto&) { c.data.sbm.seed = to_count(v); }},
      {"data.edges", [](RunConfig& c, const std::string& v, const std::filesystem::path& b) { c.data.edges = resolve(v, b); }},
      {"data.features", [](RunConfig& c, const std::string& v, const std::filesystem::path& b) { c.data.features = resolve(v, b); }},
      {"data.labels", [](RunConfig& c, const std::string& v, const std::filesystem::path& b) { c.data.labels = resolve(v, b); }},
      {"data.train_ratio", [](RunConfig& c, const std::string& v, auto&) { c.data.split.train = to_real(v); }},
      {"data.val_ratio", [](RunConfig& c, const std::string& v, auto&) { c.data.split.val = to_real(v); }},
      {"data.test_ratio", [](RunConfig& c, const std::string& v, auto&) { c.data.split.test = to_real(v); }},
      {"data.split_seed", [](RunConfig& c, const std::string& v, auto&) { c.data.split_seed = to_count(v); }},
      {"output.dir", [](RunConfig& c, const std::string& v, const std::filesystem::path& b) { c.output_dir = resolve(v, b); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  FederationConfig f = federation;
  if (data.source == DataSource::kSbm) {
    if (data.sbm.num_classes < 2) throw ParameterError("data.classes must be >= 2");
    if (federation.num_clients > data.sbm.num_nodes) throw ParameterError("more clients than nodes");
  } else if (data.edges.empty() || data.features.empty() || data.labels.empty()) {
    throw ParameterError("data.source = files needs data.edges, data.features and data.labels");
  }
  if (partition_mode == PartitionMode::kOverlapping && federation.num_clients % 5 != 0) {
    throw ParameterError("overlapping partition needs federation.clients to be a multiple of 5");
  }
  f.validate();
}

std::string RunConfig::to_text() const {
  const auto& f = federation;
  std::ostringstream o;
  o << "federation.clients = " << f.num_clients << '\n'
    << "federation.rounds = " << f.rounds << '\n'
    << "federation.local_epochs = " << f.local_epochs << '\n'
    << "federation.embed_dim = " << f.embed_dim << '\n'
    << "federation.batch_size = " << f.batch_size << '\n'
    << "federation.templates = " << f.num_templates << '\n'
    << "federation.seed = " << f.seed << '\n'
    << "federation.threads = " << f.threads << '\n'
    << "federation.metric = " << (f.metric == TaskMetric::kAuc ? "auc" : "accuracy") << '\n'
    << "federation.partition = "
    << (partition_mode == PartitionMode::kOverlapping ? "overlapping" : "nonoverlapping") << '\n'
    << "ablation.semantic = " << (f.ablation.semantic ? "true" : "false") << '\n'
    << "ablation.structural = " << (f.ablation.structural ? "true" : "false") << '\n'
    << "ablation.refinement = " << (f.ablation.refinement ? "true" : "false") << '\n'
    << "optim.lr = " << fmt(f.base_lr) << '\n'
    << "optim.lr_decay_steps = " << fmt(f.lr_decay_steps) << '\n'
    << "loss.semantic_weight = " << fmt(f.weights.semantic) << '\n'
    << "loss.structural_weight = " << fmt(f.weights.structural) << '\n'
    << "refine.tau = " << fmt(f.refine.tau) << '\n'
    << "refine.eta = " << fmt(f.refine.eta) << '\n'
    << "refine.eps = " << fmt(f.refine.eps) << '\n'
    << "sinkhorn.epsilon = " << fmt(f.sinkhorn.epsilon) << '\n'
    << "sinkhorn.max_iters = " << f.sinkhorn.max_iters << '\n'
    << "sinkhorn.tol = " << fmt(f.sinkhorn.tol) << '\n';
  if (data.source == DataSource::kSbm) {
    o << "data.source = sbm\n"
      << "data.nodes = " << data.sbm.num_nodes << '\n'
      << "data.classes = " << data.sbm.num_classes << '\n'
      << "data.p_in = " << fmt(data.sbm.p_in) << '\n'
      << "data.p_out = " << fmt(data.sbm.p_out) << '\n'
      << "data.feature_dim = " << data.sbm.feature_dim << '\n'
      << "data.feature_sep = " << fmt(data.sbm.feature_sep) << '\n'
      << "data.seed = " << data.sbm.seed << '\n';
  } else {
    o << "data.source = files\n"
      << "data.edges = " << std::filesystem::absolute(data.edges).string() << '\n'
      << "data.features = " << std::filesystem::absolute(data.features).string() << '\n'
      << "data.labels = " << std::filesystem::absolute(data.labels).string() << '\n';
    if (data.num_classes) o << "data.classes = " << *data.num_classes << '\n';
  }
  o << "data.train_ratio = " << fmt(data.split.train) << '\n'
    << "data.val_ratio = " << fmt(data.split.val) << '\n'
    << "data.test_ratio = " << fmt(data.split.test) << '\n'
    << "data.split_seed = " << data.split_seed << '\n'
    << "output.dir = " << output_dir.string() << '\n';
  return o.str();
}

RunConfig parse_run_config(const std::string& text, const std::string& source_name,
                           const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t ln = 1; std::getline(in, line); ++ln) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source_name, ln, "expected 'section.key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ParseError(source_name, ln, "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ParseError(source_name, ln, "duplicate key '" + key + "'");
    if (value.empty()) throw ParseError(source_name, ln, "empty value for '" + key + "'");
    try {
      it->second(cfg, value, base_dir);
    } catch (const BadValue& e) {
      throw ParseError(source_name, ln, key + ": " + e.what);
    }
  }
  if (cfg.data.source == DataSource::kSbm) {
    cfg.federation.num_classes = static_cast<std::size_t>(cfg.data.sbm.num_classes);
  } else if (cfg.data.num_classes) {
    cfg.federation.num_classes = static_cast<std::size_t>(*cfg.data.num_classes);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string(), path.parent_path());
}

Graph build_dataset(const RunConfig& cfg) {
  Graph g;
  if (cfg.data.source == DataSource::kSbm) {
    g = generate_sbm(cfg.data.sbm);
  } else {
    for (const auto* p : {&cfg.data.edges, &cfg.data.features, &cfg.data.labels}) {
      if (!std::filesystem::exists(*p)) throw IoError("dataset file not found: " + p->string());
    }
    g = load_graph(cfg.data.edges, cfg.data.features, cfg.data.labels, cfg.data.num_classes);
  }
  return split_masks(std::move(g), cfg.data.split, cfg.data.split_seed);
}

}  // namespace fedgmc
