#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "m3t/audio_features.hpp"
#include "m3t/checkpoint.hpp"
#include "m3t/config.hpp"
#include "m3t/errors.hpp"
#include "m3t/evaluate.hpp"
#include "m3t/synth.hpp"
#include "m3t/train.hpp"

namespace fs = std::filesystem;
using namespace m3t;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides,
                         const std::optional<uint64_t>& seed) {
  RunConfig cfg = config_path.empty() ? parse_config("", overrides)
                                      : load_config(config_path, overrides);
  if (seed) {
    cfg.training.seed = *seed;
    cfg.finalize();
  }
  return cfg;
}

// Every command records what it is about to do before doing it.
void snapshot_config(const fs::path& out_dir, const RunConfig& cfg) {
  write_text(out_dir / "resolved_config.yaml", dump_config(cfg));
}

void write_prediction_csv(const fs::path& path, const VideoPrediction& pred) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frame,valence,arousal\n";
  char line[96];
  for (size_t i = 0; i < pred.valence.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f\n", i, pred.valence[i],
                  pred.arousal[i]);
    out << line;
  }
}

FusedModel load_model_from_checkpoint(const RunConfig& cfg,
                                      const fs::path& checkpoint) {
  FusedModel model(cfg.model, cfg.training.seed);
  load_weights(checkpoint, model.params());
  return model;
}

int run_preprocess_audio(const std::string& corpus_dir, std::string out_dir) {
  const io::CorpusIndex corpus = io::CorpusIndex::load(corpus_dir);
  if (out_dir.empty()) out_dir = (corpus.root / "features").string();
  io::FeatureStore store(fs::path(out_dir) / "index.json", "audio");

  const AudioFeatureConfig cfg;
  int processed = 0, zero_filled = 0, skipped = 0;
  std::map<std::string, int> per_fps;
  for (const auto& video : corpus.videos) {
    char fps_key[32];
    std::snprintf(fps_key, sizeof(fps_key), "%g", video.fps);
    const fs::path wav_path = corpus.audio_path(video.id);
    if (!fs::exists(wav_path)) {
      store.put(video.id, Tensor({video.frame_count, cfg.feature_dim()}),
                /*zero_filled=*/true);
      ++zero_filled;
      ++per_fps[fps_key];
      std::fprintf(stderr, "preprocess-audio: %s has no audio, zero-filled\n",
                   video.id.c_str());
      continue;
    }
    try {
      const io::Waveform wav = io::read_wav(wav_path);
      const AudioFeatureTrack track = extract_logmel_synced(wav, video, cfg);
      store.put(video.id, track.features);
      ++processed;
      ++per_fps[fps_key];
    } catch (const std::exception& e) {
      ++skipped;
      std::fprintf(stderr, "preprocess-audio: skipping %s: %s\n",
                   video.id.c_str(), e.what());
    }
  }
  store.save();

  std::string fps_summary;
  for (const auto& [fps, count] : per_fps)
    fps_summary += " fps[" + fps + "]=" + std::to_string(count);
  std::printf("preprocess-audio: processed=%d zero_filled=%d skipped=%d%s out=%s\n",
              processed, zero_filled, skipped, fps_summary.c_str(),
              out_dir.c_str());
  return processed + zero_filled > 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audiovisual valence-arousal estimation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, corpus_dir, checkpoint_dir, stage_str;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  bool resume = false;

  // make-synth
  SynthConfig synth;
  std::string fps_list = "25,30,24,15,7.5";
  auto* make_synth = app.add_subcommand("make-synth",
                                        "generate a synthetic training corpus");
  make_synth->add_option("--out", out_dir, "corpus directory")->required();
  make_synth->add_option("--seed", seed, "generator seed (default 0)");
  make_synth->add_option("--videos", synth.num_videos, "number of videos");
  make_synth->add_option("--duration", synth.duration_s, "seconds per video");
  make_synth->add_option("--frame-size", synth.frame_size, "stored frame size");
  make_synth->add_option("--fps", fps_list, "comma-separated fps cycle");
  make_synth->add_option("--emotion-dim", synth.emotion_dim,
                         "static emotion feature width");
  make_synth->add_option("--au-dim", synth.au_dim, "static AU feature width");

  // preprocess-audio
  auto* preprocess = app.add_subcommand(
      "preprocess-audio", "extract synchronized log-Mel features");
  preprocess->add_option("--corpus", corpus_dir, "corpus directory")->required();
  preprocess->add_option("--out", out_dir,
                         "feature directory (default <corpus>/features)");

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  train->add_option("--config", config_path, "YAML config");
  train->add_option("--stage", stage_str, "visual|audio|fusion-init|finetune")
      ->required();
  train->add_option("--seed", seed, "overrides training.seed");
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--override", overrides, "section.key=value (repeatable)");
  train->add_flag("--resume", resume, "continue this stage's checkpoint");

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "score a checkpoint and write predictions + report");
  evaluate->add_option("--config", config_path, "YAML config");
  evaluate->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")
      ->required();
  evaluate->add_option("--corpus", corpus_dir,
                       "corpus to evaluate (default data.eval_root or data.root)");
  evaluate->add_option("--seed", seed, "overrides training.seed");
  evaluate->add_option("--out", out_dir, "output directory")->required();
  evaluate->add_option("--override", overrides, "section.key=value (repeatable)");

  // predict
  auto* predict = app.add_subcommand(
      "predict", "write per-frame predictions without scoring");
  predict->add_option("--config", config_path, "YAML config");
  predict->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")
      ->required();
  predict->add_option("--corpus", corpus_dir, "corpus to predict on");
  predict->add_option("--seed", seed, "overrides training.seed");
  predict->add_option("--out", out_dir, "output directory")->required();
  predict->add_option("--override", overrides, "section.key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (make_synth->parsed()) {
      synth.fps_choices.clear();
      std::stringstream ss(fps_list);
      for (std::string part; std::getline(ss, part, ',');)
        synth.fps_choices.push_back(std::stod(part));
      if (synth.fps_choices.empty())
        throw ConfigError("--fps needs at least one value");

      const uint64_t synth_seed = seed.value_or(0);
      std::ostringstream snapshot;
      snapshot << "synth:\n"
               << "  seed: " << synth_seed << "\n"
               << "  videos: " << synth.num_videos << "\n"
               << "  duration_s: " << synth.duration_s << "\n"
               << "  frame_size: " << synth.frame_size << "\n"
               << "  fps: [" << fps_list << "]\n"
               << "  emotion_dim: " << synth.emotion_dim << "\n"
               << "  au_dim: " << synth.au_dim << "\n";
      write_text(fs::path(out_dir) / "resolved_config.yaml", snapshot.str());

      const auto truth = generate_synth_corpus(out_dir, synth_seed, synth);
      int64_t frames = 0;
      for (const auto& track : truth) frames += track.valence.size();
      std::printf("make-synth: videos=%zu frames=%lld out=%s\n", truth.size(),
                  static_cast<long long>(frames), out_dir.c_str());
      return 0;
    }

    if (preprocess->parsed()) return run_preprocess_audio(corpus_dir, out_dir);

    if (train->parsed()) {
      const Stage stage = parse_stage(stage_str);
      RunConfig cfg = resolve_config(config_path, overrides, seed);
      snapshot_config(out_dir, cfg);
      const StageStatus status = run_training_stage(cfg, stage, out_dir, resume);
      std::printf(
          "train[%s]: iterations=%lld epochs=%d skipped_batches=%d "
          "last_loss=%.6g%s checkpoint=%s\n",
          stage_name(status.stage).c_str(),
          static_cast<long long>(status.iterations), status.epochs,
          status.skipped_batches, status.last_loss,
          std::isnan(status.eval_ccc_mean)
              ? ""
              : (" eval_ccc_mean=" + std::to_string(status.eval_ccc_mean)).c_str(),
          status.checkpoint_dir.string().c_str());
      return 0;
    }

    if (evaluate->parsed() || predict->parsed()) {
      RunConfig cfg = resolve_config(config_path, overrides, seed);
      snapshot_config(out_dir, cfg);

      const CheckpointManifest manifest = read_manifest(checkpoint_dir);
      const Stage stage = parse_stage(manifest.stage);
      const FusedModel model = load_model_from_checkpoint(cfg, checkpoint_dir);

      std::string corpus_path = corpus_dir;
      if (corpus_path.empty())
        corpus_path =
            cfg.data.eval_root.empty() ? cfg.data.root : cfg.data.eval_root;
      const io::CorpusIndex corpus = io::CorpusIndex::load(corpus_path);

      const EvalResult result = run_evaluation(model, stage, corpus, cfg.data,
                                               cfg.training.batch_size);

      const fs::path pred_dir = fs::path(out_dir) / "predictions";
      fs::create_directories(pred_dir);
      int zero_filled = 0;
      for (const auto& [id, pred] : result.predictions) {
        write_prediction_csv(pred_dir / (id + ".csv"), pred);
        if (pred.audio_zero_filled) ++zero_filled;
      }

      if (predict->parsed()) {
        std::printf("predict: videos=%zu zero_filled_audio=%d out=%s\n",
                    result.predictions.size(), zero_filled, out_dir.c_str());
        return 0;
      }

      for (const auto& id : result.unannotated)
        std::fprintf(stderr, "evaluate: %s has no annotations, skipped\n",
                     id.c_str());
      if (!result.report_valid) {
        std::fprintf(stderr, "evaluate: no annotated videos, no report\n");
        return 1;
      }
      write_text(fs::path(out_dir) / "report.json",
                 result.report.to_json() + "\n");
      std::printf(
          "evaluate: ccc_valence=%.6f ccc_arousal=%.6f ccc_mean=%.6f "
          "videos=%zu skipped=%zu zero_filled_audio=%d out=%s\n",
          result.report.ccc_valence, result.report.ccc_arousal,
          result.report.ccc_mean, result.predictions.size(),
          result.unannotated.size(), zero_filled, out_dir.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
