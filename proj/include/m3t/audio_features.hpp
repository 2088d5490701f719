#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "m3t/io.hpp"
#include "m3t/tensor.hpp"

namespace m3t {

// Log-Mel extraction synchronized to the video frame grid: one feature vector
// per video frame, analysis windows centered at round(i * sample_rate / fps).
struct AudioFeatureConfig {
  int window_samples = 400;  // 25 ms at 16 kHz
  int fft_size = 512;
  int mel_bins = 40;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
  int context = 2;  // frames stacked from each side

  int feature_dim() const { return (2 * context + 1) * mel_bins; }
};

struct AudioFeatureTrack {
  Tensor features;            // [frame_count, feature_dim]
  std::vector<uint8_t> mask;  // false => row is exactly zero
};

// Triangular HTK-mel filterbank, [mel_bins, fft_size/2 + 1].
Tensor mel_filterbank(const AudioFeatureConfig& cfg, int sample_rate);

// Sample index the analysis window for video frame `index` is centered on.
inline int64_t frame_center(int64_t index, int sample_rate, double fps) {
  return std::llround(index * double(sample_rate) / fps);
}

// One log-Mel vector per video frame with +-context stacking. Frames whose
// window center falls past the waveform end are zero rows with mask=false.
// Throws AudioTooShort when the waveform covers less than half the video.
AudioFeatureTrack extract_logmel_synced(const io::Waveform& waveform,
                                        const io::VideoMetadata& meta,
                                        const AudioFeatureConfig& cfg = {});

}  // namespace m3t
