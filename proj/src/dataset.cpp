#include "m3t/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <random>

#include "m3t/errors.hpp"

namespace m3t {

uint64_t mix_rng_seed(uint64_t seed, const std::string& name, uint64_t epoch) {
  uint64_t h = 1469598103934665603ull;
  const auto absorb = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  absorb(seed);
  for (char c : name) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  absorb(epoch);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

std::vector<WindowSpec> plan_train_epoch(const io::CorpusIndex& corpus,
                                         const DataConfig& cfg, uint64_t seed,
                                         int epoch, bool audio_only) {
  std::vector<WindowSpec> plan;
  for (const auto& video : corpus.videos) {
    if (audio_only && video.fps <= cfg.audio_min_fps) continue;
    std::mt19937_64 rng(mix_rng_seed(seed, video.id, static_cast<uint64_t>(epoch)));
    const auto starts = sample_windows(video.frame_count, cfg.window_length,
                                       cfg.windows_per_video, rng);
    for (int start : starts) {
      WindowSpec spec;
      spec.video_id = video.id;
      spec.start = start;
      spec.augment = draw_augment(cfg.source_size, cfg.crop_size, true, rng);
      plan.push_back(std::move(spec));
    }
  }
  std::mt19937_64 shuffle_rng(
      mix_rng_seed(seed, "epoch_shuffle", static_cast<uint64_t>(epoch)));
  std::shuffle(plan.begin(), plan.end(), shuffle_rng);
  return plan;
}

std::vector<WindowSpec> plan_eval(const io::CorpusIndex& corpus,
                                  const DataConfig& cfg, bool audio_only) {
  std::vector<WindowSpec> plan;
  std::mt19937_64 unused(0);
  const AugmentPlan central =
      draw_augment(cfg.source_size, cfg.crop_size, false, unused);
  for (const auto& video : corpus.videos) {
    if (audio_only && video.fps <= cfg.audio_min_fps) continue;
    for (int start : segment_eval(video.frame_count, cfg.window_length)) {
      WindowSpec spec;
      spec.video_id = video.id;
      spec.start = start;
      spec.augment = central;
      plan.push_back(std::move(spec));
    }
  }
  return plan;
}

WindowLoader::WindowLoader(const io::CorpusIndex& corpus, DataConfig cfg,
                           StreamSet streams)
    : corpus_(corpus), cfg_(std::move(cfg)), streams_(streams) {
  const auto index = corpus_.features_index();
  if (io::fs::exists(index)) {
    if (streams_.audio) audio_store_ = io::FeatureStore::open(index, "audio");
    if (streams_.statics) {
      emotion_store_ = io::FeatureStore::open(index, "emotion");
      au_store_ = io::FeatureStore::open(index, "au");
    }
  }
}

const io::AnnotationTrack& WindowLoader::annotations(const std::string& id) const {
  auto it = annotation_cache_.find(id);
  if (it != annotation_cache_.end()) return it->second;
  const auto* video = corpus_.find(id);
  if (!video) throw IoError("unknown video " + id);
  auto track = io::read_annotations(corpus_.annotations_path(id), video->frame_count);
  return annotation_cache_.emplace(id, std::move(track)).first->second;
}

std::vector<std::vector<WindowSpec>> WindowLoader::batches(
    const std::vector<WindowSpec>& plan, int batch_size) const {
  std::vector<std::vector<WindowSpec>> out;
  for (size_t i = 0; i < plan.size(); i += batch_size) {
    const size_t end = std::min(plan.size(), i + batch_size);
    out.emplace_back(plan.begin() + i, plan.begin() + end);
  }
  return out;
}

Batch WindowLoader::load(const std::vector<WindowSpec>& specs) const {
  const int b = static_cast<int>(specs.size());
  const int t = cfg_.window_length;
  if (b == 0) throw ShapeMismatch("empty batch");

  Batch batch;
  batch.batch = b;
  batch.window = t;
  batch.frames = Tensor({b, t, 3, cfg_.crop_size, cfg_.crop_size});
  batch.audio = Tensor({b, t, cfg_.audio_dim});
  batch.static_emotion = Tensor({b, t, cfg_.emotion_dim});
  batch.static_au = Tensor({b, t, cfg_.au_dim});
  batch.valence.assign(static_cast<size_t>(b) * t, 0.0);
  batch.arousal.assign(static_cast<size_t>(b) * t, 0.0);
  batch.va_valid.assign(static_cast<size_t>(b) * t, 0);
  batch.emotion.assign(static_cast<size_t>(b) * t, -1);
  batch.frame_mask.assign(static_cast<size_t>(b) * t, 0);

  for (int i = 0; i < b; ++i) {
    const WindowSpec& spec = specs[i];
    const auto* video = corpus_.find(spec.video_id);
    if (!video) throw IoError("unknown video " + spec.video_id);

    if (streams_.frames) {
      const Tensor raw = io::load_frame_window(corpus_, *video, spec.start, t,
                                               cfg_.source_size);
      const Tensor cropped = apply_augment(raw, cfg_.crop_size, spec.augment);
      std::memcpy(batch.frames.data() + static_cast<int64_t>(i) * cropped.numel(),
                  cropped.data(), sizeof(float) * cropped.numel());
    }
    if (streams_.audio && audio_store_.has(spec.video_id)) {
      const Tensor rows = audio_store_.load_rows(spec.video_id, spec.start, t);
      if (rows.size(1) != cfg_.audio_dim)
        throw ShapeMismatch("audio feature dim " + std::to_string(rows.size(1)) +
                            " != configured " + std::to_string(cfg_.audio_dim));
      std::memcpy(batch.audio.data() + static_cast<int64_t>(i) * rows.numel(),
                  rows.data(), sizeof(float) * rows.numel());
    }
    if (streams_.statics) {
      if (emotion_store_.has(spec.video_id)) {
        const Tensor rows = emotion_store_.load_rows(spec.video_id, spec.start, t);
        std::memcpy(
            batch.static_emotion.data() + static_cast<int64_t>(i) * rows.numel(),
            rows.data(), sizeof(float) * rows.numel());
      }
      if (au_store_.has(spec.video_id)) {
        const Tensor rows = au_store_.load_rows(spec.video_id, spec.start, t);
        std::memcpy(batch.static_au.data() + static_cast<int64_t>(i) * rows.numel(),
                    rows.data(), sizeof(float) * rows.numel());
      }
    }

    const io::AnnotationTrack& ann = annotations(spec.video_id);
    for (int j = 0; j < t; ++j) {
      const int frame = spec.start + j;
      const size_t pos = static_cast<size_t>(i) * t + j;
      if (frame < 0 || frame >= video->frame_count) continue;
      batch.frame_mask[pos] = 1;
      if (ann.va_valid[frame]) {
        batch.valence[pos] = ann.valence[frame];
        batch.arousal[pos] = ann.arousal[frame];
        batch.va_valid[pos] = 1;
      }
      batch.emotion[pos] = ann.emotion[frame];
    }
  }
  return batch;
}

}  // namespace m3t
