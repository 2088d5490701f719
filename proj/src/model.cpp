#include "m3t/model.hpp"

namespace m3t {

namespace {
ModelConfig validated(ModelConfig cfg) {
  if (cfg.fusion.visual_dim != cfg.visual.frame_feature_dim())
    throw ConfigError("fusion.visual_dim " + std::to_string(cfg.fusion.visual_dim) +
                      " != visual frame feature width " +
                      std::to_string(cfg.visual.frame_feature_dim()));
  if (cfg.fusion.acoustic_dim != cfg.acoustic.feature_dim())
    throw ConfigError("fusion.acoustic_dim != acoustic frame feature width");
  return cfg;
}
}  // namespace

FusedModel::FusedModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(validated(cfg)),
      rng_(seed),
      visual_(cfg_.visual, rng_),
      acoustic_(cfg_.acoustic, rng_),
      fusion_(cfg_.fusion, rng_) {
  visual_.collect(params_, "visual.");
  acoustic_.collect(params_, "acoustic.");
  fusion_.collect(params_, "fusion.");
}

FusedModel::Output FusedModel::forward(const ag::Var& frames,
                                       const ag::Var& emotion_feats,
                                       const ag::Var& au_feats,
                                       const ag::Var& audio_features) const {
  Output out;
  out.visual = visual_.forward(frames, emotion_feats, au_feats);
  out.acoustic = acoustic_.forward(audio_features);
  out.joint = fusion_.forward(out.visual.frame_features,
                              out.acoustic.frame_features);
  return out;
}

int set_trainable(const nn::ParamList& params, const std::string& prefix,
                  bool trainable) {
  int touched = 0;
  for (const auto& [name, var] : params) {
    if (name.rfind(prefix, 0) != 0) continue;
    var->requires_grad = trainable;
    ++touched;
  }
  return touched;
}

}  // namespace m3t
