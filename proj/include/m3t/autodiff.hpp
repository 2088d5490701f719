#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "m3t/tensor.hpp"

namespace m3t::ag {

// Define-by-run reverse-mode tape over float tensors. Ops eagerly compute
// their value and, when grad mode is on and any parent requires grad,
// record a backprop closure. Single-threaded and deterministic.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.empty() && value.numel() > 0) grad = Tensor::zeros(value.shape());
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0f);
  }
};

// Grad recording switch (RAII). Inference wraps forward passes in
// NoGradGuard so intermediate activations are freed as they fall out of
// scope.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

Var constant(Tensor value);
Var make_param(Tensor value);  // requires_grad = true

// Core node factory; requires_grad derived from parents and grad mode.
Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backprop);

// Reverse pass from a scalar root; accumulates into .grad of every
// reachable node that requires grad.
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& x, float scale, float shift);  // scale*x + shift
inline Var scale(const Var& x, float s) { return affine(x, s, 0.0f); }
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh_(const Var& x);

// ---- shape ----
Var reshape(const Var& x, std::vector<int> shape);
Var concat_last(const std::vector<Var>& parts);
Var slice_last(const Var& x, int lo, int hi);
Var select_time(const Var& x, int t);            // [B,T,D] -> [B,D]
Var stack_time(const std::vector<Var>& steps);   // T x [B,D] -> [B,T,D]

// ---- reductions ----
Var sum(const Var& x);       // scalar sum over all entries
Var mean_all(const Var& x);  // scalar mean over all entries

// ---- linear algebra ----
// x [..., in] * w[out, in]^T + b[out]; leading axes preserved.
Var linear(const Var& x, const Var& w, const Var& b);

// ---- video ----
// x [B,T,C,H,W], w [K,C,3,3,3], b [K]; stride 1, zero padding 1 on t/h/w.
Var conv3d(const Var& x, const Var& w, const Var& b);
Var maxpool2d(const Var& x);    // 2x2 stride 2 over H,W (even dims required)
Var spatial_avg(const Var& x);  // [B,T,C,H,W] -> [B,T,C]

// ---- fusion ----
// x [B,T,D] scaled per time step by s [B,T,1].
Var scale_rows(const Var& x, const Var& s);

// ---- losses ----
// Masked mean categorical cross-entropy over logits [N,C]; labels use
// metrics::kUnlabeled for masked rows. Scalar output, zero when nothing
// is labeled.
Var softmax_cross_entropy_masked(const Var& logits, std::vector<int> labels);

// 1 - CCC over the valid entries of pred (any shape, flattened), computed
// in double precision. Throws DegenerateInput eagerly at construction.
Var ccc_loss_node(const Var& pred, std::vector<double> targets,
                  std::vector<uint8_t> valid);

// Mean of per-window CCC losses, treating the flattened pred as consecutive
// windows of window_len frames. Windows whose own CCC is degenerate are
// skipped; throws DegenerateInput when no window is computable.
Var ccc_loss_windows(const Var& pred, std::vector<double> targets,
                     std::vector<uint8_t> valid, int window_len);

}  // namespace m3t::ag
