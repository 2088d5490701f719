#include "m3t/audio_features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fftw3.h>

#include "m3t/errors.hpp"

namespace m3t {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Tensor mel_filterbank(const AudioFeatureConfig& cfg, int sample_rate) {
  const int bins = cfg.fft_size / 2 + 1;
  Tensor fb({cfg.mel_bins, bins});
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.mel_bins + 2);
  for (int m = 0; m < cfg.mel_bins + 2; ++m)
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.mel_bins + 1));
  for (int m = 0; m < cfg.mel_bins; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f > left && f < center)
        w = (f - left) / (center - left);
      else if (f >= center && f < right)
        w = (right - f) / (right - center);
      fb.data()[static_cast<int64_t>(m) * bins + k] = static_cast<float>(w);
    }
  }
  return fb;
}

AudioFeatureTrack extract_logmel_synced(const io::Waveform& waveform,
                                        const io::VideoMetadata& meta,
                                        const AudioFeatureConfig& cfg) {
  const int64_t n = static_cast<int64_t>(waveform.samples.size());
  const int sr = waveform.sample_rate;
  const int fc = meta.frame_count;
  const double duration = fc / meta.fps;
  if (static_cast<double>(n) < 0.5 * duration * sr)
    throw AudioTooShort("waveform covers " + std::to_string(n / double(sr)) +
                        " s of a " + std::to_string(duration) + " s video");

  const int bins = cfg.fft_size / 2 + 1;
  const Tensor fb = mel_filterbank(cfg, sr);

  std::vector<double> hann(cfg.window_samples);
  for (int i = 0; i < cfg.window_samples; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.window_samples);

  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<fftw_complex> spectrum(bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(cfg.fft_size, frame.data(),
                                        spectrum.data(), FFTW_ESTIMATE);

  // Base per-frame log-Mel [fc, mel_bins]; mask false past the waveform end.
  Tensor base({fc, cfg.mel_bins});
  std::vector<uint8_t> mask(fc, 0);
  const int half = cfg.window_samples / 2;
  std::vector<double> power(bins), mel(cfg.mel_bins);
  for (int i = 0; i < fc; ++i) {
    const int64_t center = frame_center(i, sr, meta.fps);
    if (center >= n) continue;  // masked zero row
    mask[i] = 1;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int j = 0; j < cfg.window_samples; ++j) {
      const int64_t s = center - half + j;
      if (s >= 0 && s < n) frame[j] = waveform.samples[s] * hann[j];
    }
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k)
      power[k] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    for (int m = 0; m < cfg.mel_bins; ++m) {
      double e = 0.0;
      const float* row = fb.data() + static_cast<int64_t>(m) * bins;
      for (int k = 0; k < bins; ++k) e += row[k] * power[k];
      mel[m] = std::log(std::max(e, cfg.log_floor));
    }
    for (int m = 0; m < cfg.mel_bins; ++m)
      base.data()[static_cast<int64_t>(i) * cfg.mel_bins + m] =
          static_cast<float>(mel[m]);
  }
  fftw_destroy_plan(plan);

  // Context stacking, zero-padded at edges; masked rows stay exactly zero.
  AudioFeatureTrack track;
  track.features = Tensor({fc, cfg.feature_dim()});
  track.mask = mask;
  for (int i = 0; i < fc; ++i) {
    if (!mask[i]) continue;
    float* dst = track.features.data() + static_cast<int64_t>(i) * cfg.feature_dim();
    for (int c = -cfg.context; c <= cfg.context; ++c) {
      const int j = i + c;
      if (j < 0 || j >= fc) continue;  // zero block
      std::copy_n(base.data() + static_cast<int64_t>(j) * cfg.mel_bins,
                  cfg.mel_bins, dst + (c + cfg.context) * cfg.mel_bins);
    }
  }
  return track;
}

}  // namespace m3t
