#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "fedgmc/fedsim.hpp"
#include "fedgmc/graph.hpp"

namespace fedgmc {

enum class DataSource { kSbm, kFiles };

struct DatasetSpec {
  DataSource source = DataSource::kSbm;
  SbmParams sbm;
  std::filesystem::path edges;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::optional<int> num_classes;  // files only; defaults to max label + 1
  SplitRatios split;
  std::uint64_t split_seed = 0;
};

// Everything a CLI run needs. Parsed from a flat `section.key = value` file.
struct RunConfig {
  FederationConfig federation;
  PartitionMode partition_mode = PartitionMode::kNonOverlapping;
  DatasetSpec data;
  std::filesystem::path output_dir = "out";

  // Cross-field checks; throws ParameterError.
  void validate() const;
  // Canonical text form; parse_run_config(to_text()) reproduces the config.
  std::string to_text() const;
};

// Relative data paths are resolved against `base_dir`. Unknown keys, bad
// values and duplicate keys throw ParseError carrying the line number.
RunConfig parse_run_config(const std::string& text, const std::string& source_name,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Generates or loads the graph and applies the stratified split.
Graph build_dataset(const RunConfig& cfg);

}  // namespace fedgmc
