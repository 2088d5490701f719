#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "m3t/nn.hpp"

namespace m3t {

// Where the precomputed per-frame static features are concatenated.
//   kEmoAu : emotion features -> valence branch, AU features -> arousal branch
//   kEmoEmo: emotion features -> both branches
//   kNone  : no static features
enum class StaticRouting { kEmoAu, kEmoEmo, kNone };

StaticRouting parse_routing(const std::string& name);
std::string routing_name(StaticRouting r);

struct VisualConfig {
  int input_size = 112;  // square frames, must be divisible by 16
  // Five 3x3x3 conv layers: [0..2] shared trunk, [3..4] per branch.
  std::vector<int> channel_widths = {32, 64, 128, 256, 512};
  int gru_hidden = 512;  // per direction, per branch
  int gru_layers = 2;
  int head_hidden = 256;
  int emotion_classes = 7;
  StaticRouting routing = StaticRouting::kEmoAu;
  int emo_dim = 512;
  int au_dim = 256;
  // "valence" or "arousal": which branch's recurrent output feeds the
  // emotion logits.
  std::string emotion_head_branch = "valence";

  int frame_feature_dim() const { return 4 * gru_hidden; }  // both branches
  int valence_gru_input() const;
  int arousal_gru_input() const;
};

// Concatenates static features onto each branch's per-frame 3D features
// along the channel axis (3D features first). No mixing across time.
std::pair<ag::Var, ag::Var> route_static(const ag::Var& branch_v,
                                         const ag::Var& branch_a,
                                         const ag::Var& emotion_feats,
                                         const ag::Var& au_feats,
                                         StaticRouting routing);

// Two-branch 3D convolutional network with per-branch bidirectional GRU
// encoders and per-frame V/A/emotion heads. The first three conv layers are
// shared; each branch adds two more. Layers 1-4 are followed by 2x2 spatial
// max pooling (never temporal), and a global spatial average turns the last
// branch maps into per-frame vectors.
class VisualNetwork {
 public:
  VisualNetwork(const VisualConfig& cfg, std::mt19937_64& rng);

  struct Output {
    ag::Var valence;         // [B,T] raw (unclamped) scores
    ag::Var arousal;         // [B,T]
    ag::Var emotion_logits;  // [B,T,classes]
    ag::Var frame_features;  // [B,T,4*gru_hidden], consumed by fusion
  };

  // frames [B,T,3,S,S] normalized to [-1,1]; emotion_feats [B,T,emo_dim] and
  // au_feats [B,T,au_dim] (pass empty-shaped Vars when routing is kNone).
  Output forward(const ag::Var& frames, const ag::Var& emotion_feats,
                 const ag::Var& au_feats) const;

  void collect(nn::ParamList& out, const std::string& prefix) const;
  const VisualConfig& config() const { return cfg_; }

  // Stable name prefixes of the parameter partition, relative to the prefix
  // passed to collect(). Used by freezing, pretrained-trunk loading, and the
  // gradient-isolation tests.
  static constexpr const char* kTrunkPrefix = "trunk.";
  static constexpr const char* kValencePrefix = "valence.";
  static constexpr const char* kArousalPrefix = "arousal.";
  static constexpr const char* kEmotionPrefix = "emotion.";

 private:
  VisualConfig cfg_;
  std::vector<nn::Conv3d> trunk_;    // 3 shared layers
  std::vector<nn::Conv3d> val_conv_; // 2 valence-branch layers
  std::vector<nn::Conv3d> aro_conv_; // 2 arousal-branch layers
  nn::GRU val_gru_, aro_gru_;
  nn::Linear val_fc1_, val_fc2_;
  nn::Linear aro_fc1_, aro_fc2_;
  nn::Linear emotion_fc_;
};

}  // namespace m3t
