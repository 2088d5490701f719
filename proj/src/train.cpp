#include "m3t/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "m3t/autodiff.hpp"
#include "m3t/checkpoint.hpp"
#include "m3t/dataset.hpp"
#include "m3t/errors.hpp"
#include "m3t/evaluate.hpp"

namespace m3t {

Stage parse_stage(const std::string& name) {
  if (name == "visual") return Stage::kVisual;
  if (name == "audio") return Stage::kAudio;
  if (name == "fusion-init") return Stage::kFusionInit;
  if (name == "finetune") return Stage::kFinetune;
  throw ConfigError("unknown stage '" + name +
                    "' (expected visual, audio, fusion-init or finetune)");
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kVisual: return "visual";
    case Stage::kAudio: return "audio";
    case Stage::kFusionInit: return "fusion-init";
    case Stage::kFinetune: return "finetune";
  }
  return "unknown";
}

namespace {

StreamSet stage_streams(Stage stage, const VisualConfig& visual) {
  StreamSet streams;
  const bool statics = visual.routing != StaticRouting::kNone;
  switch (stage) {
    case Stage::kVisual:
      streams = {true, false, statics};
      break;
    case Stage::kAudio:
      streams = {false, true, false};
      break;
    case Stage::kFusionInit:
    case Stage::kFinetune:
      streams = {true, true, statics};
      break;
  }
  return streams;
}

struct LossParts {
  ag::Var total;
  double value = 0.0, valence = 0.0, arousal = 0.0, emotion = 0.0;
};

// Stage losses: visual = multi-task (CCC pair + weighted emotion CE), audio
// = CCC only, fusion-init = CCC on the fused heads (encoders are frozen),
// finetune = fused CCC plus the emotion term. Degenerate CCC means the
// whole batch is skipped.
LossParts stage_loss(const FusedModel& model, Stage stage, const Batch& batch,
                     const TrainingConfig& tc, int window_len) {
  const bool routed = model.config().visual.routing != StaticRouting::kNone;
  const ag::Var frames = ag::constant(batch.frames);
  const ag::Var audio = ag::constant(batch.audio);
  const ag::Var emo =
      routed ? ag::constant(batch.static_emotion) : ag::constant(Tensor());
  const ag::Var au =
      routed ? ag::constant(batch.static_au) : ag::constant(Tensor());

  ag::Var valence, arousal, emotion_logits;
  switch (stage) {
    case Stage::kVisual: {
      const auto out = model.visual().forward(frames, emo, au);
      valence = out.valence;
      arousal = out.arousal;
      emotion_logits = out.emotion_logits;
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
      if (stage == Stage::kFinetune) emotion_logits = out.visual.emotion_logits;
      break;
    }
  }

  ag::Var l_v, l_a;
  try {
    if (tc.per_window_ccc) {
      l_v = ag::ccc_loss_windows(valence, batch.valence, batch.va_valid,
                                 window_len);
      l_a = ag::ccc_loss_windows(arousal, batch.arousal, batch.va_valid,
                                 window_len);
    } else {
      l_v = ag::ccc_loss_node(valence, batch.valence, batch.va_valid);
      l_a = ag::ccc_loss_node(arousal, batch.arousal, batch.va_valid);
    }
  } catch (const DegenerateInput& e) {
    throw DegenerateBatch(e.what());
  }

  LossParts parts;
  parts.valence = l_v->value.data()[0];
  parts.arousal = l_a->value.data()[0];
  parts.total = ag::scale(ag::add(l_v, l_a), 0.5f);
  if (emotion_logits && tc.loss_weights.lambda_emot != 0.0) {
    const int classes = emotion_logits->value.size(-1);
    const ag::Var flat = ag::reshape(
        emotion_logits, {static_cast<int>(batch.positions()), classes});
    const ag::Var l_e = ag::softmax_cross_entropy_masked(flat, batch.emotion);
    parts.emotion = l_e->value.data()[0];
    parts.total = ag::add(
        parts.total,
        ag::scale(l_e, static_cast<float>(tc.loss_weights.lambda_emot)));
  }
  parts.value = parts.total->value.data()[0];
  return parts;
}

}  // namespace

StageStatus run_training_stage(const RunConfig& cfg_in, Stage stage,
                               const std::filesystem::path& out_dir,
                               bool resume) {
  RunConfig cfg = cfg_in;
  cfg.finalize();
  const std::string hash = config_hash(cfg);
  const fs::path stage_dir = out_dir / stage_name(stage);
  const uint64_t seed = cfg.training.seed;

  const io::CorpusIndex corpus = io::CorpusIndex::load(cfg.data.root);
  const bool audio_only = stage == Stage::kAudio;

  FusedModel model(cfg.model, seed);
  Adam::Config adam_cfg;
  adam_cfg.weight_decay = cfg.training.weight_decay;
  Adam optim(model.params(), adam_cfg);

  PlateauDecay plateau;
  plateau.lr = cfg.training.finetune_lr;
  plateau.factor = cfg.training.plateau_factor;
  plateau.patience = cfg.training.plateau_patience;

  const int total_epochs =
      stage == Stage::kFusionInit ? 3 : cfg.training.epochs;
  int epoch_start = 0;
  int64_t iteration = 0;
  int skipped = 0;

  if (resume) {
    if (!checkpoint_exists(stage_dir))
      throw MissingCheckpoint("nothing to resume at " + stage_dir.string());
    const CheckpointManifest m = read_manifest(stage_dir);
    if (m.stage != stage_name(stage))
      throw IncompatibleCheckpoint("checkpoint at " + stage_dir.string() +
                                   " belongs to stage " + m.stage);
    if (m.config_hash != hash)
      throw IncompatibleCheckpoint(
          "config changed since the checkpoint was written");
    load_weights(stage_dir, model.params());
    if (m.has_optim) load_optimizer(stage_dir, optim);
    epoch_start = m.epoch;
    iteration = m.iteration;
    skipped = m.skipped_batches;
    if (stage == Stage::kFinetune && m.plateau_lr > 0.0) {
      plateau.lr = m.plateau_lr;
      plateau.best = m.plateau_best;
      plateau.bad_streak = m.plateau_bad;
    }
  } else {
    switch (stage) {
      case Stage::kVisual:
      case Stage::kAudio:
        break;  // no prerequisites
      case Stage::kFusionInit: {
        const fs::path visual_dir = out_dir / stage_name(Stage::kVisual);
        const fs::path audio_dir = out_dir / stage_name(Stage::kAudio);
        if (!checkpoint_exists(visual_dir) || !checkpoint_exists(audio_dir))
          throw StageOrderViolation(
              "fusion-init needs completed visual and audio checkpoints under " +
              out_dir.string());
        load_weights(visual_dir, model.params(), "visual.");
        load_weights(audio_dir, model.params(), "acoustic.");
        break;
      }
      case Stage::kFinetune: {
        const fs::path init_dir = out_dir / stage_name(Stage::kFusionInit);
        if (!checkpoint_exists(init_dir))
          throw StageOrderViolation("finetune needs a fusion-init checkpoint under " +
                                    out_dir.string());
        load_weights(init_dir, model.params());
        break;
      }
    }
  }

  set_trainable(model.params(), "", true);
  if (stage == Stage::kFusionInit) {
    set_trainable(model.params(), "visual.", false);
    set_trainable(model.params(), "acoustic.", false);
  }

  const StreamSet streams = stage_streams(stage, cfg.model.visual);
  WindowLoader loader(corpus, cfg.data, streams);

  const auto first_plan = plan_train_epoch(corpus, cfg.data, seed, 0, audio_only);
  if (first_plan.empty())
    throw EmptyEvaluation("no training windows: corpus is empty after gating");
  const int64_t iters_per_epoch =
      (static_cast<int64_t>(first_plan.size()) + cfg.training.batch_size - 1) /
      cfg.training.batch_size;
  CyclicalLR cyclical;
  cyclical.base_lr = cfg.training.base_lr;
  cyclical.max_lr = cfg.training.max_lr;
  cyclical.step_size_up =
      std::max<int64_t>(1, cfg.training.lr_epochs_up * iters_per_epoch);

  fs::create_directories(stage_dir);
  std::ofstream log(stage_dir / "train_log.csv",
                    resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (stage_dir / "train_log.csv").string());
  if (!resume)
    log << "iteration,epoch,lr,loss,loss_valence,loss_arousal,loss_emotion,"
           "skipped\n";

  // evaluation corpus for the fine-tuning decay schedule
  const io::CorpusIndex* eval_corpus = &corpus;
  io::CorpusIndex eval_corpus_storage;
  if (!cfg.data.eval_root.empty() && cfg.data.eval_root != cfg.data.root) {
    eval_corpus_storage = io::CorpusIndex::load(cfg.data.eval_root);
    eval_corpus = &eval_corpus_storage;
  }

  StageStatus status;
  status.stage = stage;
  status.checkpoint_dir = stage_dir;

  char line[256];
  for (int epoch = epoch_start; epoch < total_epochs; ++epoch) {
    const auto plan = epoch == 0
                          ? first_plan
                          : plan_train_epoch(corpus, cfg.data, seed, epoch,
                                             audio_only);
    for (const auto& chunk : loader.batches(plan, cfg.training.batch_size)) {
      const Batch batch = loader.load(chunk);
      const double lr =
          stage == Stage::kFinetune ? plateau.lr : cyclical.at(iteration);
      optim.zero_grad();
      try {
        const LossParts parts =
            stage_loss(model, stage, batch, cfg.training, cfg.data.window_length);
        ag::backward(parts.total);
        optim.step(lr);
        ++iteration;
        status.last_loss = parts.value;
        std::snprintf(line, sizeof(line),
                      "%lld,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                      static_cast<long long>(iteration), epoch, lr, parts.value,
                      parts.valence, parts.arousal, parts.emotion, skipped);
        log << line;
      } catch (const DegenerateBatch&) {
        ++skipped;
      }
    }
    log.flush();

    if (stage == Stage::kFinetune) {
      const EvalResult eval = run_evaluation(model, stage, *eval_corpus,
                                             cfg.data, cfg.training.batch_size);
      if (eval.report_valid) {
        status.eval_ccc_mean = eval.report.ccc_mean;
        plateau.observe(eval.report.ccc_mean);
      }
    }

    CheckpointManifest manifest;
    manifest.stage = stage_name(stage);
    manifest.iteration = iteration;
    manifest.epoch = epoch + 1;
    manifest.seed = seed;
    manifest.config_hash = hash;
    manifest.skipped_batches = skipped;
    manifest.plateau_lr = plateau.lr;
    manifest.plateau_best = plateau.best;
    manifest.plateau_bad = plateau.bad_streak;
    save_checkpoint(stage_dir, manifest, model.params(), &optim);
  }

  status.iterations = iteration;
  status.epochs = std::max(epoch_start, total_epochs);
  status.skipped_batches = skipped;
  return status;
}

}  // namespace m3t
