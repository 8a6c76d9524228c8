#include <cstdlib>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cdp/error.hpp>

#include "config.hpp"
#include "stages.hpp"

namespace {

enum Exit : int {
  kOk = 0,
  kConfigError = 2,
  kMissingInput = 3,
  kInternal = 4,
  kStaleArtifact = 5,
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("cdp");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("CDP_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only honor it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off")
      spdlog::set_level(level);
    else
      spdlog::warn("CDP_LOG: unknown level '{}', using info", env);
  }
}

int exit_for(cdp::Errc code) {
  switch (code) {
    case cdp::Errc::invalid_argument: return kConfigError;
    case cdp::Errc::invariant: return kInternal;
    default: return kMissingInput;
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace cdp::pipeline;
  setup_logging();

  CLI::App app{"Consensus-driven pseudo-labeling of unlabeled embeddings"};
  std::filesystem::path config_path;
  std::filesystem::path out_dir = "cdp_out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string stage = "pipeline";
  app.add_option("--config", config_path, "Config file (sectioned key = value)")->required();
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Global seed; overrides run.seed");
  app.add_option("--workers", workers, "Worker threads; overrides run.workers")
      ->check(CLI::PositiveNumber);
  app.add_option("--stage", stage,
                 "generate, graph, features, train, select, propagate, evaluate, pipeline or "
                 "ablation");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    PipelineConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    const auto stages = parse_stage(stage, cfg);
    const Workspace ws(std::move(cfg), out_dir);
    for (Stage s : stages) {
      spdlog::debug("running stage {}", stage_name(s));
      ws.run(s);
    }
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfigError;
  } catch (const MissingInput& e) {
    spdlog::error("missing input: {}", e.what());
    return kMissingInput;
  } catch (const StaleArtifact& e) {
    spdlog::error("stale artifact: {}", e.what());
    return kStaleArtifact;
  } catch (const cdp::Error& e) {
    spdlog::error("{}: {}", cdp::to_string(e.code()), e.what());
    return exit_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kInternal;
  }
  return kOk;
}
