#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "m3t/config.hpp"

namespace m3t {

// Three-stage protocol: single-modality training, frozen-encoder fusion
// initialization (exactly 3 epochs), then joint fine-tuning.
enum class Stage { kVisual, kAudio, kFusionInit, kFinetune };

Stage parse_stage(const std::string& name);  // visual|audio|fusion-init|finetune
std::string stage_name(Stage stage);

struct StageStatus {
  Stage stage = Stage::kVisual;
  std::filesystem::path checkpoint_dir;
  int64_t iterations = 0;  // optimizer steps, cumulative across resume
  int epochs = 0;          // completed epochs within the stage
  int skipped_batches = 0;
  double last_loss = 0.0;
  double eval_ccc_mean = std::numeric_limits<double>::quiet_NaN();
};

// Runs one stage end to end: builds the model, loads prerequisite
// checkpoints (StageOrderViolation when they are missing), trains, and
// checkpoints into out_dir/<stage>/ after every epoch. Per-step metrics are
// appended to <stage>/train_log.csv. With resume=true, continues a stage
// from its own checkpoint (MissingCheckpoint when there is none).
StageStatus run_training_stage(const RunConfig& cfg, Stage stage,
                               const std::filesystem::path& out_dir,
                               bool resume = false);

}  // namespace m3t
