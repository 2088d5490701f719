#pragma once

#include <cstdint>
#include <string>

#include "m3t/acoustic.hpp"
#include "m3t/fusion.hpp"
#include "m3t/visual.hpp"

namespace m3t {

struct ModelConfig {
  VisualConfig visual;
  AcousticConfig acoustic;
  FusionConfig fusion;

  // Keeps the fusion widths in lockstep with the encoder outputs.
  void sync_dims() {
    fusion.visual_dim = visual.frame_feature_dim();
    fusion.acoustic_dim = acoustic.feature_dim();
    if (fusion.mode == FusionMode::kAttention)
      fusion.proj_dim = fusion.acoustic_dim;
  }
};

// The full audiovisual model: both encoders plus the fusion head. Parameter
// names are namespaced visual. / acoustic. / fusion. so stages can freeze or
// load subsets by prefix.
class FusedModel {
 public:
  FusedModel(const ModelConfig& cfg, uint64_t seed);

  struct Output {
    VisualNetwork::Output visual;
    AcousticNetwork::Output acoustic;
    FusionNetwork::Output joint;
  };

  // frames [B,T,3,S,S]; emotion/au static features per VisualNetwork;
  // audio_features [B,T,acoustic.input_dim].
  Output forward(const ag::Var& frames, const ag::Var& emotion_feats,
                 const ag::Var& au_feats, const ag::Var& audio_features) const;

  const nn::ParamList& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

  VisualNetwork& visual() { return visual_; }
  const VisualNetwork& visual() const { return visual_; }
  AcousticNetwork& acoustic() { return acoustic_; }
  const AcousticNetwork& acoustic() const { return acoustic_; }
  FusionNetwork& fusion() { return fusion_; }
  const FusionNetwork& fusion() const { return fusion_; }

 private:
  ModelConfig cfg_;
  std::mt19937_64 rng_;  // initialisation stream; member order matters
  VisualNetwork visual_;
  AcousticNetwork acoustic_;
  FusionNetwork fusion_;
  nn::ParamList params_;
};

// Flips requires_grad on every parameter whose name starts with prefix
// (empty prefix = all). Returns the number of tensors touched.
int set_trainable(const nn::ParamList& params, const std::string& prefix,
                  bool trainable);

}  // namespace m3t
