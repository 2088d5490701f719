#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "m3t/nn.hpp"

namespace m3t {

// Triangular cyclical schedule: linear base->max over step_size_up
// iterations, back down over the next step_size_up, repeating.
struct CyclicalLR {
  double base_lr = 1e-7;
  double max_lr = 1e-4;
  int64_t step_size_up = 1;

  double at(int64_t iteration) const;
};

// Halves (by `factor`) the rate after `patience` consecutive evaluations
// without improvement. Used for the joint fine-tuning stage.
struct PlateauDecay {
  double lr = 1e-5;
  double factor = 0.5;
  int patience = 2;
  double best = -std::numeric_limits<double>::infinity();
  int bad_streak = 0;

  double observe(double metric);  // returns the rate to use next
};

// Adam with decoupled-from-schedule rate passed per step and weight decay
// added to the gradient. Parameters that did not receive a gradient this
// step (frozen, or untouched by the loss) are skipped entirely, so their
// weights and moments stay bit-identical.
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  Adam(nn::ParamList params, Config cfg);

  int step(double lr);  // returns the number of tensors updated
  void zero_grad();     // drops gradients so participation is detectable
  int64_t steps() const { return t_; }

  void save_state(std::ostream& out) const;
  void load_state(std::istream& in);

 private:
  nn::ParamList params_;
  Config cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace m3t
