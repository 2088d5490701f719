#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m3t/dataset.hpp"
#include "m3t/metrics.hpp"
#include "m3t/model.hpp"

namespace m3t {

struct TrainingConfig {
  int batch_size = 64;
  double weight_decay = 1e-4;
  metrics::LossWeights loss_weights;  // lambda_emot = 0.5
  double base_lr = 1e-7;
  double max_lr = 1e-4;
  int lr_epochs_up = 3;  // cyclical step_size_up = lr_epochs_up * iters/epoch
  double finetune_lr = 1e-5;
  double plateau_factor = 0.5;
  int plateau_patience = 2;  // evaluations without improvement before decay
  int epochs = 10;           // per stage; the fusion-init stage is fixed at 3
  bool per_window_ccc = false;
  uint64_t seed = 0;
};

// One config file drives every stage: {model, fusion, data, training}.
struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainingConfig training;

  // Propagates the authoritative dims (data.* feature widths, model input
  // size) across sections and validates. Called by the loaders.
  void finalize();
};

RunConfig default_config();

// Parse YAML text / file with `section.key=value` overrides applied before
// mapping. Unknown keys and malformed overrides raise ConfigError.
RunConfig parse_config(const std::string& yaml_text,
                       const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides = {});

// Fully resolved snapshot; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const RunConfig& cfg);

// 16 hex chars over the resolved snapshot. training.epochs is excluded so a
// finished stage can be extended by resuming with a larger budget.
std::string config_hash(const RunConfig& cfg);

}  // namespace m3t
