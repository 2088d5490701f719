#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "m3t/io.hpp"
#include "m3t/tensor.hpp"
#include "m3t/windows.hpp"

namespace m3t {

struct DataConfig {
  std::string root;
  std::string eval_root;  // empty: evaluate on `root`
  int window_length = 32;
  int windows_per_video = 200;
  int crop_size = 112;
  int source_size = 128;
  int audio_dim = 200;
  int emotion_dim = 512;
  int au_dim = 256;
  double audio_min_fps = 15.0;    // audio-only mode drops fps <= this
  double smooth_threshold = 25.0;  // landmark smoothing gate, px^2
  double smooth_sigma = 1.0;
};

// Which input streams a stage actually consumes; skipping a stream skips its
// disk reads (the tensors stay zero).
struct StreamSet {
  bool frames = true;
  bool audio = true;
  bool statics = true;
};

struct WindowSpec {
  std::string video_id;
  int start = 0;
  AugmentPlan augment;
};

struct Batch {
  Tensor frames;          // [B,T,3,crop,crop]
  Tensor audio;           // [B,T,audio_dim]
  Tensor static_emotion;  // [B,T,emotion_dim]
  Tensor static_au;       // [B,T,au_dim]
  // pooled per-position labels, length B*T in window-major order
  std::vector<double> valence, arousal;
  std::vector<uint8_t> va_valid;
  std::vector<int> emotion;         // -1 where unlabeled
  std::vector<uint8_t> frame_mask;  // false past the video end
  int batch = 0, window = 0;

  int64_t positions() const { return static_cast<int64_t>(batch) * window; }
};

// Training-epoch window plan: starts and augmentation drawn up front from
// per-(seed, video, epoch) rngs, then shuffled, so the plan is reproducible
// regardless of load order. audio_only drops low-fps videos entirely.
std::vector<WindowSpec> plan_train_epoch(const io::CorpusIndex& corpus,
                                         const DataConfig& cfg, uint64_t seed,
                                         int epoch, bool audio_only);

// Evaluation plan: non-overlapping segments, central crop, no flip.
std::vector<WindowSpec> plan_eval(const io::CorpusIndex& corpus,
                                  const DataConfig& cfg, bool audio_only);

uint64_t mix_rng_seed(uint64_t seed, const std::string& name, uint64_t epoch);

// Assembles batches from window specs. Missing feature-store entries are
// zero-filled; every masked position in every stream is exactly zero.
class WindowLoader {
 public:
  WindowLoader(const io::CorpusIndex& corpus, DataConfig cfg, StreamSet streams);

  Batch load(const std::vector<WindowSpec>& specs) const;

  // Consecutive slices of `plan` of size batch_size (final one may be short).
  std::vector<std::vector<WindowSpec>> batches(const std::vector<WindowSpec>& plan,
                                               int batch_size) const;

 private:
  const io::AnnotationTrack& annotations(const std::string& id) const;

  const io::CorpusIndex& corpus_;
  DataConfig cfg_;
  StreamSet streams_;
  io::FeatureStore audio_store_, emotion_store_, au_store_;
  mutable std::map<std::string, io::AnnotationTrack> annotation_cache_;
};

}  // namespace m3t
