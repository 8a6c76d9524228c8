#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "config.hpp"

namespace cdp::pipeline {

// A stage input (user file or upstream artifact) does not exist (exit 3).
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An upstream artifact was written by another stage version or was modified
// after it was written (exit 5).
class StaleArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { generate, graph, features, train, select, propagate, evaluate, ablation };

std::string_view stage_name(Stage stage);
// Accepts the stage names plus "pipeline" (every stage the configured
// selection method needs, in order); throws ConfigError otherwise.
std::vector<Stage> parse_stage(const std::string& name, const PipelineConfig& cfg);

// Artifacts of stage S live in <out>/<S>-<key>/ where key hashes the stage
// version-independent settings and the keys of every upstream stage, so a
// changed config can never pick up outputs computed under another one.
class Workspace {
 public:
  Workspace(PipelineConfig cfg, std::filesystem::path out);

  const PipelineConfig& config() const noexcept { return cfg_; }
  const std::filesystem::path& out() const noexcept { return out_; }

  std::uint64_t key(Stage stage) const;
  std::filesystem::path dir(Stage stage) const;

  void run(Stage stage) const;

 private:
  PipelineConfig cfg_;
  std::filesystem::path out_;
};

}  // namespace cdp::pipeline
