#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m3t/io.hpp"

namespace m3t {

// Deterministic synthetic corpus for end-to-end tests. Per video:
//   valence(t), arousal(t): slow sine tracks in [-0.9, 0.9]
//   frames:  mean intensity follows valence, frame-to-frame checkerboard
//            flicker amplitude follows arousal, plus a fixed horizontal ramp
//   audio:   sine carrier, pitch follows valence, envelope follows arousal
//   statics: channel 0 = labeled signal + noise, remaining channels noise
//   emotion: valence quantized into 7 bins, with unlabeled/invalid holes
struct SynthConfig {
  int num_videos = 8;
  std::vector<double> fps_choices = {25.0, 30.0, 24.0, 15.0, 7.5};  // cycled
  double duration_s = 8.0;
  int frame_size = 128;
  int sample_rate = 16000;
  int emotion_dim = 512;
  int au_dim = 256;
  double unlabeled_frac = 0.10;  // emotion holes
  double invalid_frac = 0.03;    // valence/arousal holes
};

struct SynthTrack {
  std::string video_id;
  std::vector<float> valence, arousal;  // clean closed-form signals
};

// Writes frames/audio/annotations/static features under `root`, plus
// videos.json and synth_truth.json. Same seed => byte-identical corpus.
std::vector<SynthTrack> generate_synth_corpus(const io::fs::path& root,
                                              uint64_t seed,
                                              const SynthConfig& cfg = {});

// Clean signals as stored in synth_truth.json.
std::vector<SynthTrack> load_synth_truth(const io::fs::path& root);

}  // namespace m3t
