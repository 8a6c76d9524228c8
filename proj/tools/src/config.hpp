#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <cdp/dataset.hpp>
#include <cdp/experiment.hpp>

namespace cdp::pipeline {

// Raised for anything wrong with the config file or flag values (exit 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { synthetic, files };
enum class SelectMethod { mediator, voting };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  SyntheticConfig synthetic;
  std::filesystem::path base;
  std::vector<std::filesystem::path> committee;
  std::filesystem::path labels;
  std::filesystem::path split;
};

struct SoftLabelConfig {
  std::size_t depth = 1;
  double decay = 0.5;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  unsigned workers = 1;
  DataConfig data;
  std::size_t k = 20;
  bool graph_csv = false;
  unsigned blocks = kAllBlocks;
  std::size_t committee = static_cast<std::size_t>(-1);
  TrainConfig train;
  SelectMethod method = SelectMethod::mediator;
  double threshold = kDefaultSelectThreshold;
  std::size_t vote_quorum = 0;
  double vote_similarity_threshold = 0.8;
  PropagationConfig propagation;
  SoftLabelConfig soft;
  std::optional<double> cluster_threshold;
  // Only the sweep lists are read from here; data and params come from the
  // other sections (see ablation_config).
  AblationConfig ablation;

  void validate() const;
  // Effective settings of the in-memory experiment runner.
  CdpParams params() const;
  // The generator runs on the global seed directly.
  SyntheticConfig synthetic() const;
  AblationConfig ablation_config() const;
  // "key=value" lines of one section after defaults are applied; stages hash
  // these to address their artifacts.
  std::string canonical(const std::string& section) const;
};

// Sectioned INI; unknown sections or keys are rejected.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace cdp::pipeline
