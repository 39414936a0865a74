// fedgmc command-line driver: synthetic data generation, federation runs,
// re-evaluation of persisted models and multi-run reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedgmc/errors.hpp"
#include "fedgmc/fedsim.hpp"
#include "fedgmc/persist.hpp"
#include "fedgmc/run_config.hpp"

namespace fs = std::filesystem;
using namespace fedgmc;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct ConfigFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string ablate;
  std::optional<std::size_t> threads;
  std::string out;
};

Ablation parse_ablation(const std::string& spec) {
  Ablation a;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item == "semantic") a.semantic = true;
    else if (item == "structural") a.structural = true;
    else if (item == "refinement") a.refinement = true;
    else if (item == "local") a.semantic = a.structural = a.refinement = true;
    else if (!item.empty()) throw ConfigFailure("--ablate: unknown mechanism '" + item + "'");
  }
  return a;
}

RunConfig load_with_overrides(const CommonFlags& flags) {
  if (flags.config.empty()) throw ConfigFailure("--config is required");
  RunConfig cfg = load_run_config(flags.config);
  if (flags.seed) {
    cfg.federation.seed = *flags.seed;
    cfg.data.sbm.seed = *flags.seed;
    cfg.data.split_seed = *flags.seed;
  }
  if (!flags.ablate.empty()) {
    const Ablation extra = parse_ablation(flags.ablate);
    cfg.federation.ablation.semantic |= extra.semantic;
    cfg.federation.ablation.structural |= extra.structural;
    cfg.federation.ablation.refinement |= extra.refinement;
  }
  if (flags.threads) cfg.federation.threads = *flags.threads;
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  return cfg;
}

// Config parsing, dataset construction and validation; every failure here is a
// configuration error (exit 2).
std::pair<RunConfig, Graph> prepare(const CommonFlags& flags) {
  try {
    RunConfig cfg = load_with_overrides(flags);
    Graph g = build_dataset(cfg);
    cfg.federation.num_classes = static_cast<std::size_t>(g.num_classes);
    cfg.validate();
    if (cfg.federation.num_clients > g.num_nodes()) throw ParameterError("more clients than nodes");
    return {std::move(cfg), std::move(g)};
  } catch (const ConfigFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigFailure(e.what());
  }
}

int cmd_gen_data(const CommonFlags& flags) {
  RunConfig cfg;
  try {
    cfg = load_with_overrides(flags);
  } catch (const ConfigFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigFailure(e.what());
  }
  if (cfg.data.source != DataSource::kSbm) throw ConfigFailure("gen-data needs data.source = sbm");
  const Graph g = generate_sbm(cfg.data.sbm);
  const fs::path dir = flags.out.empty() ? cfg.output_dir : fs::path(flags.out);
  fs::create_directories(dir);
  save_graph(g, dir / "edges.txt", dir / "features.txt", dir / "labels.txt");
  std::cout << "nodes " << g.num_nodes() << "\nedges " << g.num_edges() << "\nhomophily "
            << edge_homophily(g) << '\n';
  return 0;
}

nlohmann::json metrics_json(const RoundRecord& r) {
  nlohmann::json j;
  j["round"] = r.round;
  j["mean_test_metric"] = r.mean_test_metric;
  j["anchor_gram_drift"] = r.anchor_gram_drift;
  j["gw_objective_mean"] = r.gw_objective_mean;
  j["calibration_loss"] = r.calibration_loss();
  auto& clients = j["clients"] = nlohmann::json::array();
  for (const auto& c : r.clients) {
    clients.push_back({{"client_id", c.client_id}, {"val_metric", c.val_metric}, {"test_metric", c.test_metric}});
  }
  return j;
}

int cmd_run(const CommonFlags& flags, bool with_embeddings) {
  auto [cfg, dataset] = prepare(flags);
  const fs::path dir = cfg.output_dir;

  Federation fed(cfg.federation, make_client_graphs(dataset, cfg.federation, cfg.partition_mode));
  const auto history = fed.run();

  fs::create_directories(dir / "models");
  {
    std::ofstream out(dir / "config.ini");
    out << cfg.to_text();
    if (!out) throw IoError("cannot write " + (dir / "config.ini").string());
  }
  export_history(history, dir / "history.csv");
  for (const auto& c : fed.clients()) {
    save_params(c.params(), dir / "models" / ("client_" + std::to_string(c.id()) + ".params"));
  }
  if (with_embeddings) {
    fs::create_directories(dir / "embeddings");
    for (const auto& c : fed.clients()) {
      c.export_embeddings(dir / "embeddings" / ("client_" + std::to_string(c.id()) + ".csv"));
    }
  }

  nlohmann::json summary;
  summary["rounds"] = history.size();
  summary["clients"] = cfg.federation.num_clients;
  summary["metric"] = cfg.federation.metric == TaskMetric::kAuc ? "auc" : "accuracy";
  if (!history.empty()) summary["final"] = metrics_json(history.back());
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';

  if (!history.empty()) {
    std::cout << "final mean test " << summary["metric"].get<std::string>() << ' '
              << history.back().mean_test_metric << '\n';
  }
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& split_name, const std::string& dataset_config) {
  Split split = Split::kTest;
  if (split_name == "val") split = Split::kVal;
  else if (split_name == "train") split = Split::kTrain;
  else if (split_name != "test") throw ConfigFailure("--split must be train, val or test");

  CommonFlags flags;
  flags.config = dataset_config.empty() ? (fs::path(run_dir) / "config.ini").string() : dataset_config;
  auto [cfg, dataset] = prepare(flags);
  auto graphs = make_client_graphs(dataset, cfg.federation, cfg.partition_mode);

  // Load every model before printing anything.
  std::vector<ModelParams> models;
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    const fs::path p = fs::path(run_dir) / "models" / ("client_" + std::to_string(m) + ".params");
    ModelParams params = load_params(p);
    if (params.input_dim() != graphs[m].feature_dim() || params.num_classes() != cfg.federation.num_classes ||
        params.embed_dim() != cfg.federation.embed_dim) {
      throw FormatError("params: " + p.string() + " dims do not match the dataset/config");
    }
    models.push_back(std::move(params));
  }

  nlohmann::json out;
  out["split"] = split_name;
  out["metric"] = cfg.federation.metric == TaskMetric::kAuc ? "auc" : "accuracy";
  auto& per_client = out["clients"] = nlohmann::json::array();
  double mean = 0.0;
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    const Client client(m, std::move(graphs[m]), std::move(models[m]));
    const double v = client.evaluate(split, cfg.federation.metric);
    mean += v / static_cast<double>(cfg.federation.num_clients);
    per_client.push_back({{"client_id", m}, {"value", v}});
  }
  out["mean"] = mean;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  // label=path or bare path (label = parent directory name).
  std::map<std::string, std::vector<double>> finals;
  std::vector<std::string> order;
  for (const auto& in : inputs) {
    std::string label, path = in;
    if (auto eq = in.find('='); eq != std::string::npos) {
      label = in.substr(0, eq);
      path = in.substr(eq + 1);
    } else {
      label = fs::path(path).parent_path().filename().string();
      if (label.empty()) label = path;
    }
    const auto records = import_history(path);
    if (records.empty()) throw ConfigFailure("report: " + path + " has no rounds");
    if (!finals.count(label)) order.push_back(label);
    finals[label].push_back(records.back().mean_test_metric);
  }

  std::ostringstream table;
  table << "| Method | Runs | Final mean test metric (%) |\n|---|---|---|\n";
  for (const auto& label : order) {
    const auto& v = finals[label];
    double mean = 0.0;
    for (double x : v) mean += x / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    char cell[64];
    std::snprintf(cell, sizeof(cell), "%.2f±%.2f", 100.0 * mean, 100.0 * sd);
    table << "| " << label << " | " << v.size() << " | " << cell << " |\n";
  }
  if (out_path.empty()) {
    std::cout << table.str();
  } else {
    std::ofstream out(out_path);
    out << table.str();
    if (!out) throw IoError("cannot write " + out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated graph learning with dual manifold calibration"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Run configuration file (section.key = value)");
    sub->add_option("--seed", flags.seed, "Override the federation, data and split seeds");
    sub->add_option("--out", flags.out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic SBM dataset in the text graph format");
  add_common(gen);

  bool embeddings = false;
  auto* run = app.add_subcommand("run", "Run a federation and write history, models and summary");
  add_common(run);
  run->add_option("--ablate", flags.ablate, "Comma list of semantic, structural, refinement (or local)");
  run->add_option("--threads", flags.threads, "Client worker threads (results do not depend on it)");
  run->add_flag("--embeddings", embeddings, "Also export calibrated embeddings per client");

  std::string run_dir, split = "test", eval_config;
  auto* eval = app.add_subcommand("eval", "Recompute metrics from a run directory's saved models");
  eval->add_option("--out", run_dir, "Run directory written by `run`")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--config", eval_config, "Dataset/config override (defaults to the run's config.ini)");

  std::vector<std::string> inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate history CSVs into a mean±std table");
  report->add_option("histories", inputs, "label=history.csv or history.csv")->required();
  report->add_option("--out", report_out, "Write the table to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(flags);
    if (*run) return cmd_run(flags, embeddings);
    if (*eval) return cmd_eval(run_dir, split, eval_config);
    if (*report) return cmd_report(inputs, report_out);
  } catch (const ConfigFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
