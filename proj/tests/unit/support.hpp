#pragma once

// Shared helpers for the unit tests: a small trained toy pipeline built once
// per test binary, and scratch paths.

#include <filesystem>
#include <string>

#include "ssd/pipeline.hpp"

namespace ssd::test {

/// Desk-scale pipeline small enough to train in a few seconds.
inline ToyPipelineConfig small_config() {
  ToyPipelineConfig cfg;
  cfg.corpus_length = 120000;
  cfg.model.hidden_dim = 32;
  cfg.model.steps = 1500;
  cfg.sae_train.steps = 1500;
  cfg.sae_positions = 12000;
  cfg.calibration_sequences = 300;
  return cfg;
}

inline const ToyPipeline& small_pipeline() {
  static const ToyPipeline p = build_toy_pipeline(small_config());
  return p;
}

/// Fresh file path under the system temp directory.
inline std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ssd_unit_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace ssd::test
