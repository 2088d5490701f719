#include "m3t/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "m3t/errors.hpp"

namespace m3t {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t h = 1469598103934665603ull ^ seed;
  h = (h ^ salt) * 1099511628211ull;
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

struct SineTrack {
  double amp, freq, phase;
  double at(double t) const { return amp * std::sin(2.0 * M_PI * freq * t + phase); }
};

SineTrack draw_track(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(0.5, 0.9), freq(0.05, 0.2),
      phase(0.0, 2.0 * M_PI);
  return {amp(rng), freq(rng), phase(rng)};
}

int quantize_emotion(double v) {
  const int bin = static_cast<int>(std::floor((v + 1.0) / 2.0 * 7.0));
  return std::clamp(bin, 0, 6);
}

uint8_t clamp255(double v) {
  return static_cast<uint8_t>(std::clamp(std::lrint(v), 0l, 255l));
}

}  // namespace

std::vector<SynthTrack> generate_synth_corpus(const io::fs::path& root,
                                              uint64_t seed,
                                              const SynthConfig& cfg) {
  if (cfg.frame_size % 4 != 0)
    throw ConfigError("synth frame size must be divisible by 4");
  io::fs::create_directories(root);

  io::CorpusIndex corpus;
  corpus.root = root;
  std::vector<SynthTrack> truth;
  io::FeatureStore emotion_store(root / "features" / "index.json", "emotion");
  io::FeatureStore au_store(root / "features" / "index.json", "au");

  const int s = cfg.frame_size;
  for (int vi = 0; vi < cfg.num_videos; ++vi) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(vi)));
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "vid%03d", vi);

    io::VideoMetadata meta;
    meta.id = idbuf;
    meta.fps = cfg.fps_choices[vi % cfg.fps_choices.size()];
    meta.frame_count = static_cast<int>(std::lround(cfg.duration_s * meta.fps));
    meta.sample_rate = cfg.sample_rate;

    const SineTrack v_track = draw_track(rng);
    const SineTrack a_track = draw_track(rng);

    SynthTrack clean;
    clean.video_id = meta.id;
    clean.valence.resize(meta.frame_count);
    clean.arousal.resize(meta.frame_count);
    for (int i = 0; i < meta.frame_count; ++i) {
      clean.valence[i] = static_cast<float>(v_track.at(i / meta.fps));
      clean.arousal[i] = static_cast<float>(a_track.at(i / meta.fps));
    }

    // frames: base level tracks valence, alternating-sign checkerboard whose
    // amplitude tracks arousal, fixed left-to-right ramp for spatial texture
    io::Image img;
    img.width = img.height = s;
    img.rgb.resize(static_cast<size_t>(s) * s * 3);
    for (int i = 0; i < meta.frame_count; ++i) {
      const double base = 128.0 + 80.0 * clean.valence[i];
      const double amp = 8.0 + 24.0 * (clean.arousal[i] + 1.0) / 2.0;
      const double sign = (i % 2 == 0) ? 1.0 : -1.0;
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const double checker = ((x / 4 + y / 4) % 2 == 0) ? 1.0 : -1.0;
          const double ramp = 12.0 * x / (s - 1);
          const uint8_t px = clamp255(base + amp * checker * sign + ramp);
          uint8_t* p = img.rgb.data() + (static_cast<size_t>(y) * s + x) * 3;
          p[0] = p[1] = p[2] = px;
        }
      io::write_ppm(io::frame_path(corpus, meta.id, i), img);
    }

    // audio: sine carrier; pitch follows valence, envelope follows arousal
    io::Waveform wav;
    wav.sample_rate = cfg.sample_rate;
    const int64_t n_samples =
        std::llround(meta.frame_count * double(cfg.sample_rate) / meta.fps);
    wav.samples.resize(n_samples);
    double phase = 0.0;
    for (int64_t j = 0; j < n_samples; ++j) {
      const double t = j / double(cfg.sample_rate);
      const double v = v_track.at(t), a = a_track.at(t);
      const double envelope = 0.2 + 0.6 * (a + 1.0) / 2.0;
      phase += 2.0 * M_PI * (440.0 + 220.0 * v) / cfg.sample_rate;
      wav.samples[j] = static_cast<float>(envelope * std::sin(phase));
    }
    io::write_wav(corpus.audio_path(meta.id), wav);

    // annotations with unlabeled/invalid holes
    io::AnnotationTrack ann;
    ann.valence.assign(meta.frame_count, 0.0f);
    ann.arousal.assign(meta.frame_count, 0.0f);
    ann.emotion.assign(meta.frame_count, -1);
    ann.va_valid.assign(meta.frame_count, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < meta.frame_count; ++i) {
      const bool va_hole = unit(rng) < cfg.invalid_frac;
      const bool emo_hole = unit(rng) < cfg.unlabeled_frac;
      if (!va_hole) {
        ann.valence[i] = clean.valence[i];
        ann.arousal[i] = clean.arousal[i];
        ann.va_valid[i] = 1;
      }
      if (!emo_hole) ann.emotion[i] = quantize_emotion(clean.valence[i]);
    }
    io::write_annotations(corpus.annotations_path(meta.id), ann);

    // static features: channel 0 carries the labeled signal, rest is noise
    std::normal_distribution<double> noise(0.0, 0.3), jitter(0.0, 0.05);
    Tensor emo({meta.frame_count, cfg.emotion_dim});
    Tensor au({meta.frame_count, cfg.au_dim});
    for (int i = 0; i < meta.frame_count; ++i) {
      float* erow = emo.data() + static_cast<int64_t>(i) * cfg.emotion_dim;
      float* arow = au.data() + static_cast<int64_t>(i) * cfg.au_dim;
      erow[0] = clean.valence[i] + static_cast<float>(jitter(rng));
      for (int d = 1; d < cfg.emotion_dim; ++d)
        erow[d] = static_cast<float>(noise(rng));
      arow[0] = clean.arousal[i] + static_cast<float>(jitter(rng));
      for (int d = 1; d < cfg.au_dim; ++d) arow[d] = static_cast<float>(noise(rng));
    }
    emotion_store.put(meta.id, emo);
    au_store.put(meta.id, au);

    corpus.videos.push_back(meta);
    truth.push_back(std::move(clean));
  }

  corpus.save();
  emotion_store.save();
  au_store.save();

  ordered_json jt;
  for (const auto& track : truth) {
    ordered_json jv;
    jv["valence"] = track.valence;
    jv["arousal"] = track.arousal;
    jt[track.video_id] = std::move(jv);
  }
  auto out = std::ofstream(root / "synth_truth.json");
  out << jt.dump() << "\n";
  return truth;
}

std::vector<SynthTrack> load_synth_truth(const io::fs::path& root) {
  std::ifstream in(root / "synth_truth.json");
  if (!in) throw IoError("missing synth_truth.json under " + root.string());
  json jt = json::parse(in);
  std::vector<SynthTrack> truth;
  for (auto& [id, jv] : jt.items()) {
    SynthTrack track;
    track.video_id = id;
    track.valence = jv.at("valence").get<std::vector<float>>();
    track.arousal = jv.at("arousal").get<std::vector<float>>();
    truth.push_back(std::move(track));
  }
  return truth;
}

}  // namespace m3t
