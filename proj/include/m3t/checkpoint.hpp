#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "m3t/nn.hpp"
#include "m3t/optim.hpp"

namespace m3t {

namespace fs = std::filesystem;

// A checkpoint directory holds manifest.json, weights.bin (all named tensors,
// float32, manifest order) and optionally optim.bin.
struct CheckpointManifest {
  std::string stage;
  int64_t iteration = 0;
  int epoch = 0;  // fully completed epochs within the stage
  uint64_t seed = 0;
  std::string config_hash;
  int skipped_batches = 0;
  bool has_optim = false;
  // fine-tuning decay state, carried so resume continues the schedule
  double plateau_lr = 0.0;
  double plateau_best = -std::numeric_limits<double>::infinity();
  int plateau_bad = 0;
  std::vector<std::pair<std::string, std::vector<int>>> tensors;
};

void save_checkpoint(const fs::path& dir, CheckpointManifest manifest,
                     const nn::ParamList& params, const Adam* optim = nullptr);

bool checkpoint_exists(const fs::path& dir);
CheckpointManifest read_manifest(const fs::path& dir);  // MissingCheckpoint

struct LoadReport {
  int loaded = 0;
  std::vector<std::string> missing;     // wanted but absent from the file
  std::vector<std::string> mismatched;  // present with a different shape
  std::vector<std::string> extra;       // in the file but not requested
};

// Copies checkpoint tensors into the params whose names start with `prefix`
// (empty = all). strict: any missing/mismatched tensor raises
// IncompatibleCheckpoint listing every offender; lenient: they are skipped
// and reported.
LoadReport load_weights(const fs::path& dir, const nn::ParamList& params,
                        const std::string& prefix = "", bool strict = true);

void load_optimizer(const fs::path& dir, Adam& optim);

}  // namespace m3t
