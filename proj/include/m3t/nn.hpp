#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "m3t/autodiff.hpp"

// Small layer library on top of the autodiff graph. Every layer owns its
// parameters as ag::Var and can enumerate them with stable, unique names so
// optimizers and checkpoints see an identical ordering on every run.
namespace m3t::nn {

using ag::Var;

// Ordered (name, parameter) pairs. Order = construction order, never sorted.
using ParamList = std::vector<std::pair<std::string, Var>>;

// U(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialisation shared by all layers.
Var uniform_param(std::vector<int> shape, int fan_in, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng, bool with_bias = true);
  Var operator()(const Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
  int in_features() const { return weight ? weight->value.size(1) : 0; }
  int out_features() const { return weight ? weight->value.size(0) : 0; }

  Var weight;  // [out, in]
  Var bias;    // [out] or null
};

// 3x3x3 convolution over [B,T,C,H,W], stride 1, zero padding 1.
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(int in_channels, int out_channels, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return ag::conv3d(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix) const;

  Var weight;  // [K, C, 3, 3, 3]
  Var bias;    // [K]
};

// Multi-layer (optionally bidirectional) GRU, gate order r,z,n and update
// h' = n + z * (h - n), matching the usual deep-learning convention.
// Maps [B,T,in] -> [B,T,hidden*(bidirectional?2:1)]; the initial state is
// zero and no state is carried between calls.
class GRU {
 public:
  GRU() = default;
  GRU(int input, int hidden, int layers, bool bidirectional,
      std::mt19937_64& rng);
  Var operator()(const Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
  int output_size() const { return hidden_ * (bidirectional_ ? 2 : 1); }
  int hidden_size() const { return hidden_; }

 private:
  struct Cell {
    Var w_ih, w_hh;  // [3H, in], [3H, H]
    Var b_ih, b_hh;  // [3H]
  };
  // One pass of a single direction over the (already projected) inputs.
  std::vector<Var> run_direction(const Var& gx_all, const Cell& cell,
                                 bool reverse) const;

  std::vector<Cell> cells_;  // layer-major; reverse direction follows forward
  int input_ = 0, hidden_ = 0, layers_ = 0;
  bool bidirectional_ = false;
};

}  // namespace m3t::nn
