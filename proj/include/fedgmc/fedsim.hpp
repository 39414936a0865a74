#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedgmc/graph.hpp"
#include "fedgmc/model.hpp"
#include "fedgmc/objective.hpp"
#include "fedgmc/refine.hpp"
#include "fedgmc/semantic.hpp"
#include "fedgmc/structural.hpp"

namespace fedgmc {

enum class TaskMetric { kAccuracy, kAuc };
enum class Split { kTrain, kVal, kTest };

// Mechanisms switched off for ablation runs. All three set = local training.
struct Ablation {
  bool semantic = false;    // drop the semantic calibration term
  bool structural = false;  // drop the structural term and all template machinery
  bool refinement = false;  // freeze anchors and templates after initialization

  bool any() const noexcept { return semantic || structural || refinement; }
  bool operator==(const Ablation&) const = default;
};

struct FederationConfig {
  std::size_t num_clients = 5;
  std::size_t rounds = 60;
  std::size_t local_epochs = 3;
  std::size_t embed_dim = 8;
  std::size_t num_classes = 2;
  std::size_t batch_size = 64;     // B
  std::size_t num_templates = 4;   // Q
  double base_lr = 0.05;
  double lr_decay_steps = 200.0;
  LossWeights weights;
  RefineConfig refine;
  SinkhornOptions sinkhorn;
  std::uint64_t seed = 0;
  TaskMetric metric = TaskMetric::kAccuracy;
  Ablation ablation;
  std::size_t threads = 1;

  void validate() const;
};

// Deterministic stream seed for (base seed, purpose tag, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0);

double accuracy(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask);
// Mann-Whitney AUC of the class-1 softmax probability, ties at midrank.
double auc(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask);
double evaluate_metric(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask,
                       TaskMetric metric);
const std::vector<bool>& split_mask(const Graph& g, Split split);

// Server -> client message of one round.
struct Broadcast {
  const EtfAnchors& anchors;
  const StructuralTemplates& templates;
};

// Client -> server message of one round: manifold statistics and scalars only.
struct ClientUpload {
  std::size_t client_id = 0;
  SemanticReport semantic;
  std::optional<StructuralReport> structural;
  LossBreakdown loss;                     // after local training
  std::vector<double> epoch_total_loss;   // E + 1 values, before each step and after the last
  double val_metric = 0.0;
  double test_metric = 0.0;
};

class Client {
 public:
  Client(std::size_t id, Graph graph, ModelParams params);

  std::size_t id() const noexcept { return id_; }
  const ModelParams& params() const noexcept { return params_; }
  const CalibrationRotation& rotation() const noexcept { return rotation_; }
  std::size_t step() const noexcept { return step_; }

  // Steps (2)-(4) of a round: calibrate, train E epochs, report.
  ClientUpload local_round(const Broadcast& msg, std::size_t round, const FederationConfig& cfg);

  double evaluate(Split split, TaskMetric metric) const;
  // R_m * ego rows, one row per local node.
  Matrix calibrated_embeddings() const;
  void export_embeddings(const std::filesystem::path& path) const;

 private:
  std::size_t id_;
  Graph graph_;
  NeighborhoodAggregator agg_;
  ModelParams params_;
  CalibrationRotation rotation_;
  std::size_t step_ = 0;
};

struct ClientRoundStats {
  std::size_t client_id = 0;
  double ce_loss = 0.0;
  double sem_loss = 0.0;
  double str_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  bool operator==(const ClientRoundStats&) const = default;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<ClientRoundStats> clients;
  double anchor_gram_drift = 0.0;
  std::vector<double> gw_objective;  // per template, after the update
  double gw_objective_mean = 0.0;
  double mean_test_metric = 0.0;
  double max_anchor_chord = 0.0;
  bool local_loss_monotone = true;   // every client's epoch losses non-increasing (1e-6 slack)

  // Sum over clients of semantic + structural loss.
  double calibration_loss() const;
};

struct FederationResult {
  std::vector<RoundRecord> history;
  std::vector<ModelParams> models;
  std::vector<CalibrationRotation> rotations;
  EtfAnchors anchors;
  StructuralTemplates templates;
};

class FederationError : public std::runtime_error {
 public:
  FederationError(std::size_t client, std::size_t round, const std::string& what)
      : std::runtime_error("client " + std::to_string(client) + ", round " + std::to_string(round) + ": " + what),
        client_(client),
        round_(round) {}
  std::size_t client() const noexcept { return client_; }
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t client_;
  std::size_t round_;
};

// Owns the clients and the server state. Clients never see each other; the
// server only sees uploads.
class Federation {
 public:
  Federation(FederationConfig cfg, std::vector<Graph> client_graphs);

  RoundRecord run_round();
  std::vector<RoundRecord> run();

  const FederationConfig& config() const noexcept { return cfg_; }
  const std::vector<Client>& clients() const noexcept { return clients_; }
  const EtfAnchors& anchors() const noexcept { return anchors_; }
  const StructuralTemplates& templates() const noexcept { return templates_; }
  std::size_t rounds_done() const noexcept { return round_; }

  FederationResult result(std::vector<RoundRecord> history) const;

 private:
  std::vector<ClientUpload> collect_uploads();

  FederationConfig cfg_;
  std::vector<Client> clients_;
  EtfAnchors anchors_;
  StructuralTemplates templates_;
  std::size_t round_ = 0;
};

FederationResult run_federation(const FederationConfig& cfg, std::vector<Graph> client_graphs);

// Splits the dataset into cfg.num_clients client graphs (whole graph when M = 1).
std::vector<Graph> make_client_graphs(const Graph& dataset, const FederationConfig& cfg, PartitionMode mode);

void export_history(std::span<const RoundRecord> records, const std::filesystem::path& path);
std::vector<RoundRecord> import_history(const std::filesystem::path& path);
std::string history_csv(std::span<const RoundRecord> records);

}  // namespace fedgmc
