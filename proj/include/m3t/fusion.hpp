#pragma once

#include <random>
#include <string>

#include "m3t/nn.hpp"

namespace m3t {

enum class FusionMode { kConcat, kAttention };

FusionMode parse_fusion_mode(const std::string& name);
std::string fusion_mode_name(FusionMode m);

struct FusionConfig {
  FusionMode mode = FusionMode::kConcat;
  int visual_dim = 2048;
  int acoustic_dim = 512;
  int proj_dim = 512;      // visual projection output width
  int scorer_hidden = 128; // per direction, one layer
  int joint_hidden = 512;  // per direction, two layers
  int joint_fc_hidden = 256;

  int fused_dim() const {
    return mode == FusionMode::kConcat ? proj_dim + acoustic_dim : proj_dim;
  }
};

// Two-way softmax over per-modality quality scores h in (0,1):
// alpha_v = exp(h_v)/(exp(h_v)+exp(h_a)). Inputs [B,T,1], output [B,T,2]
// (visual first). Rows sum to one by construction.
ag::Var attention_alpha(const ag::Var& h_v, const ag::Var& h_a);

// f_t = alpha_v * v_t + alpha_a * a_t; v/a [B,T,D], alpha [B,T,2].
ag::Var attention_fuse(const ag::Var& v, const ag::Var& a, const ag::Var& alpha);

// Channel concatenation, visual first: [B,T,Dv] + [B,T,Da] -> [B,T,Dv+Da].
ag::Var concat_fuse(const ag::Var& v, const ag::Var& a);

// Joins per-frame visual and acoustic features and predicts V/A through a
// recurrent joint head. In attention mode each modality gets a quality
// scorer (1-layer bidirectional GRU + scalar affine + sigmoid) and the
// modalities are mixed by the resulting convex weights.
class FusionNetwork {
 public:
  FusionNetwork(const FusionConfig& cfg, std::mt19937_64& rng);

  struct Output {
    ag::Var valence;  // [B,T] raw scores
    ag::Var arousal;  // [B,T]
    ag::Var fused;    // [B,T,fused_dim]
    ag::Var alpha;    // [B,T,2] attention mode; null in concat mode
  };

  // visual_feats [B,T,visual_dim], acoustic_feats [B,T,acoustic_dim].
  Output forward(const ag::Var& visual_feats, const ag::Var& acoustic_feats) const;

  ag::Var project_visual(const ag::Var& v) const;

  void collect(nn::ParamList& out, const std::string& prefix) const;
  const FusionConfig& config() const { return cfg_; }

 private:
  ag::Var score(const nn::GRU& gru, const nn::Linear& fc, const ag::Var& x) const;

  FusionConfig cfg_;
  nn::Linear proj_;
  nn::GRU scorer_v_gru_, scorer_a_gru_;
  nn::Linear scorer_v_fc_, scorer_a_fc_;
  nn::GRU joint_gru_;
  nn::Linear joint_fc1_, joint_fc2_;
};

}  // namespace m3t
