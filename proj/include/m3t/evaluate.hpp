#pragma once

#include <map>
#include <string>
#include <vector>

#include "m3t/dataset.hpp"
#include "m3t/io.hpp"
#include "m3t/metrics.hpp"
#include "m3t/model.hpp"
#include "m3t/train.hpp"

namespace m3t {

struct VideoPrediction {
  std::vector<float> valence, arousal;  // per frame, clamped to [-1,1]
  bool audio_zero_filled = false;       // no stored audio features
};

struct EvalResult {
  bool report_valid = false;  // false when no video carries annotations
  metrics::MetricReport report;
  std::map<std::string, VideoPrediction> predictions;
  std::vector<std::string> unannotated;  // predicted but excluded from report
};

// Non-overlapping segmentation with the deterministic central crop; the
// stage selects which head produces the predictions (visual, acoustic, or
// fused). Every video is predicted; only annotated ones enter the report.
EvalResult run_evaluation(const FusedModel& model, Stage stage,
                          const io::CorpusIndex& corpus, const DataConfig& cfg,
                          int batch_size);

}  // namespace m3t
