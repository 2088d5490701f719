#pragma once

#include <random>
#include <string>

#include "m3t/nn.hpp"

namespace m3t {

struct AcousticConfig {
  int input_dim = 200;   // stacked log-Mel context windows
  int gru_hidden = 256;  // per direction; concatenated frame feature = 512
  int gru_layers = 2;

  int feature_dim() const { return 2 * gru_hidden; }
};

// Bidirectional GRU encoder over synchronized acoustic features plus a
// two-layer MLP feeding standalone per-frame V/A heads. Fusion taps
// frame_features (the recurrent output, upstream of the MLP).
class AcousticNetwork {
 public:
  AcousticNetwork(const AcousticConfig& cfg, std::mt19937_64& rng);

  struct Output {
    ag::Var frame_features;  // [B,T,2*gru_hidden]
    ag::Var valence;         // [B,T] raw scores (standalone mode)
    ag::Var arousal;         // [B,T]
  };

  Output forward(const ag::Var& features) const;  // [B,T,input_dim]

  void collect(nn::ParamList& out, const std::string& prefix) const;
  const AcousticConfig& config() const { return cfg_; }

 private:
  AcousticConfig cfg_;
  nn::GRU gru_;
  nn::Linear mlp1_, mlp2_;  // D -> D -> D with a rectifier between
  nn::Linear val_fc_, aro_fc_;
};

}  // namespace m3t
