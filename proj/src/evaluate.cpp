#include "m3t/evaluate.hpp"

#include <algorithm>

#include "m3t/autodiff.hpp"
#include "m3t/errors.hpp"

namespace m3t {

namespace {

StreamSet stage_streams(Stage stage, const VisualConfig& visual) {
  StreamSet streams;
  const bool statics = visual.routing != StaticRouting::kNone;
  switch (stage) {
    case Stage::kVisual:
      streams.frames = true;
      streams.audio = false;
      streams.statics = statics;
      break;
    case Stage::kAudio:
      streams.frames = false;
      streams.audio = true;
      streams.statics = false;
      break;
    case Stage::kFusionInit:
    case Stage::kFinetune:
      streams.frames = true;
      streams.audio = true;
      streams.statics = statics;
      break;
  }
  return streams;
}

}  // namespace

EvalResult run_evaluation(const FusedModel& model, Stage stage,
                          const io::CorpusIndex& corpus, const DataConfig& cfg,
                          int batch_size) {
  const StreamSet streams = stage_streams(stage, model.config().visual);
  WindowLoader loader(corpus, cfg, streams);
  const bool routed = model.config().visual.routing != StaticRouting::kNone;
  const int t = cfg.window_length;

  io::FeatureStore audio_store;
  if (streams.audio && io::fs::exists(corpus.features_index()))
    audio_store = io::FeatureStore::open(corpus.features_index(), "audio");

  std::mt19937_64 unused(0);
  const AugmentPlan central =
      draw_augment(cfg.source_size, cfg.crop_size, false, unused);

  EvalResult result;
  std::map<std::string, std::pair<metrics::SequencePair, metrics::SequencePair>>
      tracks;

  for (const auto& video : corpus.videos) {
    VideoPrediction pred;
    pred.valence.assign(video.frame_count, 0.0f);
    pred.arousal.assign(video.frame_count, 0.0f);
    if (streams.audio)
      pred.audio_zero_filled = !audio_store.has(video.id) ||
                               audio_store.entry(video.id).zero_filled;

    std::vector<WindowSpec> specs;
    for (int start : segment_eval(video.frame_count, t))
      specs.push_back({video.id, start, central});

    for (size_t pos = 0; pos < specs.size(); pos += batch_size) {
      const std::vector<WindowSpec> chunk(
          specs.begin() + pos,
          specs.begin() + std::min(specs.size(), pos + batch_size));
      const Batch batch = loader.load(chunk);

      ag::NoGradGuard guard;
      const ag::Var frames = ag::constant(batch.frames);
      const ag::Var audio = ag::constant(batch.audio);
      const ag::Var emo =
          routed ? ag::constant(batch.static_emotion) : ag::constant(Tensor());
      const ag::Var au =
          routed ? ag::constant(batch.static_au) : ag::constant(Tensor());

      ag::Var valence, arousal;
      switch (stage) {
        case Stage::kVisual: {
          const auto out = model.visual().forward(frames, emo, au);
          valence = out.valence;
          arousal = out.arousal;
          break;
        }
        case Stage::kAudio: {
          const auto out = model.acoustic().forward(audio);
          valence = out.valence;
          arousal = out.arousal;
          break;
        }
        case Stage::kFusionInit:
        case Stage::kFinetune: {
          const auto out = model.forward(frames, emo, au, audio);
          valence = out.joint.valence;
          arousal = out.joint.arousal;
          break;
        }
      }

      for (size_t w = 0; w < chunk.size(); ++w)
        for (int j = 0; j < t; ++j) {
          const int frame = chunk[w].start + j;
          if (frame >= video.frame_count) break;
          const int64_t at = static_cast<int64_t>(w) * t + j;
          pred.valence[frame] = std::clamp(valence->value.data()[at], -1.0f, 1.0f);
          pred.arousal[frame] = std::clamp(arousal->value.data()[at], -1.0f, 1.0f);
        }
    }

    const io::AnnotationTrack ann =
        io::read_annotations(corpus.annotations_path(video.id), video.frame_count);
    const int annotated =
        static_cast<int>(std::count(ann.va_valid.begin(), ann.va_valid.end(), 1));
    if (annotated > 0) {
      metrics::SequencePair vp, ap;
      for (int i = 0; i < video.frame_count; ++i) {
        vp.predictions.push_back(pred.valence[i]);
        vp.targets.push_back(ann.valence[i]);
        vp.valid.push_back(ann.va_valid[i]);
        ap.predictions.push_back(pred.arousal[i]);
        ap.targets.push_back(ann.arousal[i]);
        ap.valid.push_back(ann.va_valid[i]);
      }
      tracks[video.id] = {std::move(vp), std::move(ap)};
    } else {
      result.unannotated.push_back(video.id);
    }

    result.predictions[video.id] = std::move(pred);
  }

  if (!tracks.empty()) {
    result.report = metrics::evaluate_tracks(tracks);
    result.report_valid = true;
  }
  return result;
}

}  // namespace m3t
