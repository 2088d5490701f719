#include "m3t/nn.hpp"

#include <cmath>

namespace m3t::nn {

Var uniform_param(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  return ag::make_param(Tensor::uniform(std::move(shape), bound, rng));
}

Linear::Linear(int in, int out, std::mt19937_64& rng, bool with_bias) {
  weight = uniform_param({out, in}, in, rng);
  if (with_bias) bias = uniform_param({out}, in, rng);
}

Var Linear::operator()(const Var& x) const { return ag::linear(x, weight, bias); }

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias) out.emplace_back(prefix + ".bias", bias);
}

Conv3d::Conv3d(int in_channels, int out_channels, std::mt19937_64& rng) {
  const int fan_in = in_channels * 27;
  weight = uniform_param({out_channels, in_channels, 3, 3, 3}, fan_in, rng);
  bias = uniform_param({out_channels}, fan_in, rng);
}

void Conv3d::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

GRU::GRU(int input, int hidden, int layers, bool bidirectional,
         std::mt19937_64& rng)
    : input_(input), hidden_(hidden), layers_(layers),
      bidirectional_(bidirectional) {
  const int dirs = bidirectional ? 2 : 1;
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? input : hidden * dirs;
    for (int d = 0; d < dirs; ++d) {
      Cell c;
      c.w_ih = uniform_param({3 * hidden, in}, hidden, rng);
      c.w_hh = uniform_param({3 * hidden, hidden}, hidden, rng);
      c.b_ih = uniform_param({3 * hidden}, hidden, rng);
      c.b_hh = uniform_param({3 * hidden}, hidden, rng);
      cells_.push_back(std::move(c));
    }
  }
}

std::vector<Var> GRU::run_direction(const Var& gx_all, const Cell& cell,
                                    bool reverse) const {
  const int B = gx_all->value.size(0);
  const int T = gx_all->value.size(1);
  const int H = hidden_;
  std::vector<Var> states(T);
  Var h = ag::constant(Tensor::zeros({B, H}));
  for (int step = 0; step < T; ++step) {
    const int t = reverse ? T - 1 - step : step;
    Var gx = ag::select_time(gx_all, t);                     // [B,3H]
    Var gh = ag::linear(h, cell.w_hh, cell.b_hh);            // [B,3H]
    Var r = ag::sigmoid(ag::add(ag::slice_last(gx, 0, H),
                                ag::slice_last(gh, 0, H)));
    Var z = ag::sigmoid(ag::add(ag::slice_last(gx, H, 2 * H),
                                ag::slice_last(gh, H, 2 * H)));
    Var n = ag::tanh_(ag::add(ag::slice_last(gx, 2 * H, 3 * H),
                              ag::mul(r, ag::slice_last(gh, 2 * H, 3 * H))));
    h = ag::add(n, ag::mul(z, ag::sub(h, n)));
    states[t] = h;
  }
  return states;
}

Var GRU::operator()(const Var& x) const {
  const int dirs = bidirectional_ ? 2 : 1;
  Var inp = x;
  for (int l = 0; l < layers_; ++l) {
    const int T = inp->value.size(1);
    // Input projection for all timesteps at once; the recurrence below only
    // pays for the [B,H] x [H,3H] hidden-state gemm per step.
    const Cell& fwd = cells_[static_cast<size_t>(l) * dirs];
    std::vector<Var> f = run_direction(ag::linear(inp, fwd.w_ih, fwd.b_ih),
                                       fwd, /*reverse=*/false);
    std::vector<Var> steps(T);
    if (bidirectional_) {
      const Cell& bwd = cells_[static_cast<size_t>(l) * dirs + 1];
      std::vector<Var> b = run_direction(ag::linear(inp, bwd.w_ih, bwd.b_ih),
                                         bwd, /*reverse=*/true);
      for (int t = 0; t < T; ++t) steps[t] = ag::concat_last({f[t], b[t]});
    } else {
      steps = std::move(f);
    }
    inp = ag::stack_time(steps);
  }
  return inp;
}

void GRU::collect(ParamList& out, const std::string& prefix) const {
  const int dirs = bidirectional_ ? 2 : 1;
  for (int l = 0; l < layers_; ++l) {
    for (int d = 0; d < dirs; ++d) {
      const Cell& c = cells_[static_cast<size_t>(l) * dirs + d];
      const std::string suffix =
          "_l" + std::to_string(l) + (d == 1 ? "_reverse" : "");
      out.emplace_back(prefix + ".weight_ih" + suffix, c.w_ih);
      out.emplace_back(prefix + ".weight_hh" + suffix, c.w_hh);
      out.emplace_back(prefix + ".bias_ih" + suffix, c.b_ih);
      out.emplace_back(prefix + ".bias_hh" + suffix, c.b_hh);
    }
  }
}

}  // namespace m3t::nn
