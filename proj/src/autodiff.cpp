#include "m3t/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "m3t/metrics.hpp"

namespace m3t::ag {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXf>;
using CMapVec = Eigen::Map<const Eigen::VectorXf>;

thread_local bool g_grad_enabled = true;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeMismatch(std::string(op) + ": " + a->value.shape_str() + " vs " +
                        b->value.shape_str());
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var make_param(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->requires_grad) {
        n->requires_grad = true;
        break;
      }
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw ShapeMismatch("backward root must be scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS over the grad-requiring subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  MapVec(out.data(), out.numel()) += CMapVec(b->value.data(), b->value.numel());
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      MapVec(p->grad.data(), p->grad.numel()) +=
          CMapVec(self.grad.data(), self.grad.numel());
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  MapVec(out.data(), out.numel()) -= CMapVec(b->value.data(), b->value.numel());
  return make_node(std::move(out), {a, b}, [](Node& self) {
    auto g = CMapVec(self.grad.data(), self.grad.numel());
    if (self.parents[0]->requires_grad) {
      self.parents[0]->ensure_grad();
      MapVec(self.parents[0]->grad.data(), g.size()) += g;
    }
    if (self.parents[1]->requires_grad) {
      self.parents[1]->ensure_grad();
      MapVec(self.parents[1]->grad.data(), g.size()) -= g;
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  MapVec(out.data(), out.numel()) =
      CMapVec(a->value.data(), out.numel()).cwiseProduct(
          CMapVec(b->value.data(), out.numel()));
  return make_node(std::move(out), {a, b}, [](Node& self) {
    auto g = CMapVec(self.grad.data(), self.grad.numel());
    Node* a = self.parents[0].get();
    Node* b = self.parents[1].get();
    if (a->requires_grad) {
      a->ensure_grad();
      MapVec(a->grad.data(), g.size()) +=
          g.cwiseProduct(CMapVec(b->value.data(), g.size()));
    }
    if (b->requires_grad) {
      b->ensure_grad();
      MapVec(b->grad.data(), g.size()) +=
          g.cwiseProduct(CMapVec(a->value.data(), g.size()));
    }
  });
}

Var affine(const Var& x, float s, float c) {
  Tensor out(x->value.shape());
  MapVec(out.data(), out.numel()).array() =
      CMapVec(x->value.data(), out.numel()).array() * s + c;
  return make_node(std::move(out), {x}, [s](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    MapVec(p->grad.data(), p->grad.numel()) +=
        CMapVec(self.grad.data(), self.grad.numel()) * s;
  });
}

Var relu(const Var& x) {
  Tensor out(x->value.shape());
  MapVec(out.data(), out.numel()) =
      CMapVec(x->value.data(), out.numel()).cwiseMax(0.0f);
  return make_node(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    const float* xv = p->value.data();
    const float* g = self.grad.data();
    float* gx = p->grad.data();
    const int64_t n = self.grad.numel();
    for (int64_t i = 0; i < n; ++i)
      if (xv[i] > 0.0f) gx[i] += g[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x->value.shape());
  const float* xv = x->value.data();
  float* ov = out.data();
  for (int64_t i = 0; i < out.numel(); ++i)
    ov[i] = 1.0f / (1.0f + std::exp(-xv[i]));
  return make_node(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    const float* yv = self.value.data();
    const float* g = self.grad.data();
    float* gx = p->grad.data();
    const int64_t n = self.grad.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * yv[i] * (1.0f - yv[i]);
  });
}

Var tanh_(const Var& x) {
  Tensor out(x->value.shape());
  const float* xv = x->value.data();
  float* ov = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) ov[i] = std::tanh(xv[i]);
  return make_node(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    const float* yv = self.value.data();
    const float* g = self.grad.data();
    float* gx = p->grad.data();
    const int64_t n = self.grad.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0f - yv[i] * yv[i]);
  });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_node(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    MapVec(p->grad.data(), p->grad.numel()) +=
        CMapVec(self.grad.data(), self.grad.numel());
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  std::vector<int> shape = parts[0]->value.shape();
  const int64_t rows = parts[0]->value.rows_folded();
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    if (p->value.rows_folded() != rows ||
        std::vector<int>(p->value.shape().begin(), p->value.shape().end() - 1) !=
            std::vector<int>(shape.begin(), shape.end() - 1))
      throw ShapeMismatch("concat_last leading dims differ");
    widths.push_back(p->value.size(-1));
    total += widths.back();
  }
  shape.back() = total;
  Tensor out(shape);
  int off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const int w = widths[k];
    const float* src = parts[k]->value.data();
    float* dst = out.data();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(src + r * w, src + (r + 1) * w, dst + r * total + off);
    off += w;
  }
  return make_node(std::move(out), parts,
                   [widths, rows, total](Node& self) {
                     int off = 0;
                     for (size_t k = 0; k < self.parents.size(); ++k) {
                       const int w = widths[k];
                       Node* p = self.parents[k].get();
                       if (p->requires_grad) {
                         p->ensure_grad();
                         const float* g = self.grad.data();
                         float* gp = p->grad.data();
                         for (int64_t r = 0; r < rows; ++r) {
                           const float* row = g + r * total + off;
                           float* dst = gp + r * w;
                           for (int i = 0; i < w; ++i) dst[i] += row[i];
                         }
                       }
                       off += w;
                     }
                   });
}

Var slice_last(const Var& x, int lo, int hi) {
  const int width = x->value.size(-1);
  if (lo < 0 || hi > width || lo >= hi)
    throw ShapeMismatch("slice_last bounds");
  std::vector<int> shape = x->value.shape();
  shape.back() = hi - lo;
  const int64_t rows = x->value.rows_folded();
  Tensor out(shape);
  const int w = hi - lo;
  for (int64_t r = 0; r < rows; ++r)
    std::copy(x->value.data() + r * width + lo, x->value.data() + r * width + hi,
              out.data() + r * w);
  return make_node(std::move(out), {x}, [lo, w, width, rows](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const float* g = self.grad.data() + r * w;
      float* gp = p->grad.data() + r * width + lo;
      for (int i = 0; i < w; ++i) gp[i] += g[i];
    }
  });
}

Var select_time(const Var& x, int t) {
  if (x->value.ndim() != 3) throw ShapeMismatch("select_time expects [B,T,D]");
  const int B = x->value.size(0), T = x->value.size(1), D = x->value.size(2);
  if (t < 0 || t >= T) throw ShapeMismatch("select_time index out of range");
  Tensor out({B, D});
  for (int b = 0; b < B; ++b)
    std::copy(x->value.data() + (static_cast<int64_t>(b) * T + t) * D,
              x->value.data() + (static_cast<int64_t>(b) * T + t + 1) * D,
              out.data() + static_cast<int64_t>(b) * D);
  return make_node(std::move(out), {x}, [t, B, T, D](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    for (int b = 0; b < B; ++b) {
      const float* g = self.grad.data() + static_cast<int64_t>(b) * D;
      float* gp = p->grad.data() + (static_cast<int64_t>(b) * T + t) * D;
      for (int i = 0; i < D; ++i) gp[i] += g[i];
    }
  });
}

Var stack_time(const std::vector<Var>& steps) {
  if (steps.empty()) throw ShapeMismatch("stack_time of nothing");
  const int B = steps[0]->value.size(0), D = steps[0]->value.size(1);
  const int T = static_cast<int>(steps.size());
  Tensor out({B, T, D});
  for (int t = 0; t < T; ++t) {
    if (steps[t]->value.shape() != std::vector<int>{B, D})
      throw ShapeMismatch("stack_time step shape");
    for (int b = 0; b < B; ++b)
      std::copy(steps[t]->value.data() + static_cast<int64_t>(b) * D,
                steps[t]->value.data() + static_cast<int64_t>(b + 1) * D,
                out.data() + (static_cast<int64_t>(b) * T + t) * D);
  }
  return make_node(std::move(out), steps, [B, T, D](Node& self) {
    for (int t = 0; t < T; ++t) {
      Node* p = self.parents[t].get();
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const float* g = self.grad.data() + (static_cast<int64_t>(b) * T + t) * D;
        float* gp = p->grad.data() + static_cast<int64_t>(b) * D;
        for (int i = 0; i < D; ++i) gp[i] += g[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum(const Var& x) {
  Tensor out = Tensor::scalar(CMapVec(x->value.data(), x->value.numel()).sum());
  return make_node(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    MapVec(p->grad.data(), p->grad.numel()).array() += self.grad[0];
  });
}

Var mean_all(const Var& x) {
  if (x->value.numel() == 0) throw ShapeMismatch("mean of empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(x->value.numel()));
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& b) {
  const int in = x->value.size(-1);
  if (w->value.ndim() != 2 || w->value.size(1) != in)
    throw ShapeMismatch("linear: weight " + w->value.shape_str() +
                        " does not accept input " + x->value.shape_str());
  const int out_dim = w->value.size(0);
  if (b && b->value.numel() != out_dim)
    throw ShapeMismatch("linear: bias size");
  const int64_t rows = x->value.rows_folded();

  std::vector<int> out_shape = x->value.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  {
    CMapMat xm(x->value.data(), rows, in);
    CMapMat wm(w->value.data(), out_dim, in);
    MapMat om(out.data(), rows, out_dim);
    om.noalias() = xm * wm.transpose();
    if (b) om.rowwise() += CMapVec(b->value.data(), out_dim).transpose();
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_node(std::move(out), std::move(parents),
                   [rows, in, out_dim](Node& self) {
                     Node* x = self.parents[0].get();
                     Node* w = self.parents[1].get();
                     CMapMat g(self.grad.data(), rows, out_dim);
                     if (x->requires_grad) {
                       x->ensure_grad();
                       MapMat gx(x->grad.data(), rows, in);
                       gx.noalias() += g * CMapMat(w->value.data(), out_dim, in);
                     }
                     if (w->requires_grad) {
                       w->ensure_grad();
                       MapMat gw(w->grad.data(), out_dim, in);
                       gw.noalias() += g.transpose() * CMapMat(x->value.data(), rows, in);
                     }
                     if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                       Node* b = self.parents[2].get();
                       b->ensure_grad();
                       MapVec(b->grad.data(), out_dim) += g.colwise().sum().transpose();
                     }
                   });
}

// ---------------------------------------------------------------------------
// pooling / reductions
// ---------------------------------------------------------------------------

Var maxpool2d(const Var& x) {
  if (x->value.ndim() != 5) throw ShapeMismatch("maxpool2d expects [B,T,C,H,W]");
  const int B = x->value.size(0), T = x->value.size(1), C = x->value.size(2);
  const int H = x->value.size(3), W = x->value.size(4);
  if (H % 2 || W % 2) throw ShapeMismatch("maxpool2d needs even spatial dims");
  const int Ho = H / 2, Wo = W / 2;
  Tensor out({B, T, C, Ho, Wo});
  std::vector<int32_t> argmax(static_cast<size_t>(out.numel()));
  const int64_t planes = static_cast<int64_t>(B) * T * C;
  for (int64_t p = 0; p < planes; ++p) {
    const float* src = x->value.data() + p * H * W;
    float* dst = out.data() + p * Ho * Wo;
    int32_t* am = argmax.data() + p * Ho * Wo;
    for (int y = 0; y < Ho; ++y) {
      for (int z = 0; z < Wo; ++z) {
        const int base = (2 * y) * W + 2 * z;
        int best = base;
        float bv = src[base];
        const int cands[3] = {base + 1, base + W, base + W + 1};
        for (int c : cands)
          if (src[c] > bv) {
            bv = src[c];
            best = c;
          }
        dst[y * Wo + z] = bv;
        am[y * Wo + z] = best;
      }
    }
  }
  return make_node(std::move(out), {x},
                   [am = std::move(argmax), planes, H, W, Ho, Wo](Node& self) {
                     Node* p = self.parents[0].get();
                     p->ensure_grad();
                     for (int64_t pl = 0; pl < planes; ++pl) {
                       const float* g = self.grad.data() + pl * Ho * Wo;
                       const int32_t* a = am.data() + pl * Ho * Wo;
                       float* gp = p->grad.data() + pl * H * W;
                       for (int i = 0; i < Ho * Wo; ++i) gp[a[i]] += g[i];
                     }
                   });
}

Var spatial_avg(const Var& x) {
  if (x->value.ndim() != 5) throw ShapeMismatch("spatial_avg expects [B,T,C,H,W]");
  const int B = x->value.size(0), T = x->value.size(1), C = x->value.size(2);
  const int H = x->value.size(3), W = x->value.size(4);
  Tensor out({B, T, C});
  const int64_t planes = static_cast<int64_t>(B) * T * C;
  const float inv = 1.0f / static_cast<float>(H * W);
  for (int64_t p = 0; p < planes; ++p) {
    out[p] = CMapVec(x->value.data() + p * H * W, H * W).sum() * inv;
  }
  return make_node(std::move(out), {x}, [planes, H, W, inv](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    for (int64_t pl = 0; pl < planes; ++pl) {
      const float g = self.grad[pl] * inv;
      MapVec(p->grad.data() + pl * H * W, H * W).array() += g;
    }
  });
}

Var scale_rows(const Var& x, const Var& s) {
  if (x->value.ndim() != 3) throw ShapeMismatch("scale_rows expects x [B,T,D]");
  const int B = x->value.size(0), T = x->value.size(1), D = x->value.size(2);
  const bool squeeze = s->value.ndim() == 2;
  if (!(s->value.shape() == std::vector<int>{B, T} ||
        s->value.shape() == std::vector<int>{B, T, 1}))
    throw ShapeMismatch("scale_rows expects s [B,T] or [B,T,1]");
  (void)squeeze;
  Tensor out({B, T, D});
  const int64_t rows = static_cast<int64_t>(B) * T;
  for (int64_t r = 0; r < rows; ++r)
    MapVec(out.data() + r * D, D) =
        CMapVec(x->value.data() + r * D, D) * s->value[r];
  return make_node(std::move(out), {x, s}, [rows, D](Node& self) {
    Node* x = self.parents[0].get();
    Node* s = self.parents[1].get();
    if (x->requires_grad) {
      x->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        MapVec(x->grad.data() + r * D, D) +=
            CMapVec(self.grad.data() + r * D, D) * s->value[r];
    }
    if (s->requires_grad) {
      s->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        s->grad[r] += CMapVec(self.grad.data() + r * D, D)
                          .dot(CMapVec(x->value.data() + r * D, D));
    }
  });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Var softmax_cross_entropy_masked(const Var& logits, std::vector<int> labels) {
  if (logits.get() == nullptr || logits->value.size(-1) <= 0)
    throw ShapeMismatch("bad logits");
  const int classes = logits->value.size(-1);
  const int64_t rows = logits->value.rows_folded();
  if (rows != static_cast<int64_t>(labels.size()))
    throw ShapeMismatch("labels do not match logit rows");
  const double loss = metrics::emotion_cross_entropy(
      std::span<const float>(logits->value.data(), logits->value.numel()),
      labels, classes);
  Tensor out = Tensor::scalar(static_cast<float>(loss));
  return make_node(std::move(out), {logits},
                   [labels = std::move(labels), classes](Node& self) {
                     Node* p = self.parents[0].get();
                     p->ensure_grad();
                     auto g = metrics::emotion_cross_entropy_grad(
                         std::span<const float>(p->value.data(), p->value.numel()),
                         labels, classes);
                     const float up = self.grad[0];
                     float* gp = p->grad.data();
                     for (size_t i = 0; i < g.size(); ++i) gp[i] += up * g[i];
                   });
}

Var ccc_loss_node(const Var& pred, std::vector<double> targets,
                  std::vector<uint8_t> valid) {
  const int64_t n = pred->value.numel();
  if (n != static_cast<int64_t>(targets.size()))
    throw ShapeMismatch("ccc targets length");
  metrics::SequencePair pair;
  pair.predictions.resize(targets.size());
  for (int64_t i = 0; i < n; ++i)
    pair.predictions[i] = static_cast<double>(pred->value[i]);
  pair.targets = std::move(targets);
  pair.valid = std::move(valid);
  const double loss = metrics::ccc_loss(pair);  // throws DegenerateInput
  Tensor out = Tensor::scalar(static_cast<float>(loss));
  return make_node(std::move(out), {pred}, [pair = std::move(pair)](Node& self) {
    Node* p = self.parents[0].get();
    p->ensure_grad();
    auto g = metrics::ccc_loss_grad(pair);
    const float up = self.grad[0];
    float* gp = p->grad.data();
    for (size_t i = 0; i < g.size(); ++i)
      gp[i] += up * static_cast<float>(g[i]);
  });
}

Var ccc_loss_windows(const Var& pred, std::vector<double> targets,
                     std::vector<uint8_t> valid, int window_len) {
  const int64_t n = pred->value.numel();
  if (window_len <= 0 || n % window_len != 0)
    throw ShapeMismatch("window_len must divide the prediction count");
  if (n != static_cast<int64_t>(targets.size()))
    throw ShapeMismatch("ccc targets length");
  if (!valid.empty() && valid.size() != targets.size())
    throw ShapeMismatch("ccc valid mask length");

  const int windows = static_cast<int>(n / window_len);
  std::vector<metrics::SequencePair> pairs;
  double total = 0.0;
  std::vector<int> offsets;
  for (int w = 0; w < windows; ++w) {
    metrics::SequencePair pair;
    const int64_t off = static_cast<int64_t>(w) * window_len;
    pair.predictions.resize(window_len);
    pair.targets.assign(targets.begin() + off, targets.begin() + off + window_len);
    if (!valid.empty())
      pair.valid.assign(valid.begin() + off, valid.begin() + off + window_len);
    for (int i = 0; i < window_len; ++i)
      pair.predictions[i] = static_cast<double>(pred->value[off + i]);
    try {
      total += metrics::ccc_loss(pair);
    } catch (const DegenerateInput&) {
      continue;  // this window cannot constrain the model; drop it
    }
    pairs.push_back(std::move(pair));
    offsets.push_back(static_cast<int>(off));
  }
  if (pairs.empty())
    throw DegenerateInput("every window in the batch is degenerate");
  const double used = static_cast<double>(pairs.size());
  Tensor out = Tensor::scalar(static_cast<float>(total / used));
  return make_node(
      std::move(out), {pred},
      [pairs = std::move(pairs), offsets = std::move(offsets), used](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        const float up = self.grad[0] / static_cast<float>(used);
        for (size_t k = 0; k < pairs.size(); ++k) {
          auto g = metrics::ccc_loss_grad(pairs[k]);
          float* gp = p->grad.data() + offsets[k];
          for (size_t i = 0; i < g.size(); ++i)
            gp[i] += up * static_cast<float>(g[i]);
        }
      });
}

}  // namespace m3t::ag
