#include <Eigen/Core>

#include <cstring>

#include "m3t/autodiff.hpp"

namespace m3t::ag {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// im2col for one output frame of a 3x3x3/stride-1/pad-1 convolution.
// Column layout: rows indexed by (c, kt, kh, kw), columns by (y, x).
// Rows whose (t+kt) frame falls outside the clip are zeroed.
void fill_columns(const float* clip, int T, int C, int H, int W, int t,
                  float* col) {
  const int P = H * W;
  const int64_t frame_stride = static_cast<int64_t>(C) * P;
  int row = 0;
  for (int c = 0; c < C; ++c) {
    for (int kt = -1; kt <= 1; ++kt) {
      const int tt = t + kt;
      const float* plane =
          (tt >= 0 && tt < T) ? clip + tt * frame_stride + static_cast<int64_t>(c) * P
                              : nullptr;
      for (int kh = -1; kh <= 1; ++kh) {
        for (int kw = -1; kw <= 1; ++kw, ++row) {
          float* dst = col + static_cast<int64_t>(row) * P;
          if (!plane) {
            std::memset(dst, 0, sizeof(float) * P);
            continue;
          }
          for (int y = 0; y < H; ++y) {
            const int sy = y + kh;
            float* drow = dst + y * W;
            if (sy < 0 || sy >= H) {
              std::memset(drow, 0, sizeof(float) * W);
              continue;
            }
            const float* srow = plane + sy * W;
            // shift along x by kw with zero edges
            if (kw == 0) {
              std::memcpy(drow, srow, sizeof(float) * W);
            } else if (kw < 0) {
              drow[0] = 0.0f;
              std::memcpy(drow + 1, srow, sizeof(float) * (W - 1));
            } else {
              std::memcpy(drow, srow + 1, sizeof(float) * (W - 1));
              drow[W - 1] = 0.0f;
            }
          }
        }
      }
    }
  }
}

// Transpose of fill_columns: scatter-add column gradients back into the
// input clip gradient.
void scatter_columns(const float* col, int T, int C, int H, int W, int t,
                     float* grad_clip) {
  const int P = H * W;
  const int64_t frame_stride = static_cast<int64_t>(C) * P;
  int row = 0;
  for (int c = 0; c < C; ++c) {
    for (int kt = -1; kt <= 1; ++kt) {
      const int tt = t + kt;
      float* plane = (tt >= 0 && tt < T)
                         ? grad_clip + tt * frame_stride + static_cast<int64_t>(c) * P
                         : nullptr;
      for (int kh = -1; kh <= 1; ++kh) {
        for (int kw = -1; kw <= 1; ++kw, ++row) {
          if (!plane) continue;
          const float* src = col + static_cast<int64_t>(row) * P;
          for (int y = 0; y < H; ++y) {
            const int sy = y + kh;
            if (sy < 0 || sy >= H) continue;
            const float* srow = src + y * W;
            float* drow = plane + sy * W;
            if (kw == 0) {
              for (int xx = 0; xx < W; ++xx) drow[xx] += srow[xx];
            } else if (kw < 0) {
              for (int xx = 1; xx < W; ++xx) drow[xx - 1] += srow[xx];
            } else {
              for (int xx = 0; xx < W - 1; ++xx) drow[xx + 1] += srow[xx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& b) {
  if (x->value.ndim() != 5) throw ShapeMismatch("conv3d expects [B,T,C,H,W]");
  const int B = x->value.size(0), T = x->value.size(1), C = x->value.size(2);
  const int H = x->value.size(3), W = x->value.size(4);
  if (w->value.ndim() != 5 || w->value.size(1) != C || w->value.size(2) != 3 ||
      w->value.size(3) != 3 || w->value.size(4) != 3)
    throw ShapeMismatch("conv3d weight must be [K," + std::to_string(C) + ",3,3,3], got " +
                        w->value.shape_str());
  const int K = w->value.size(0);
  if (b && b->value.numel() != K) throw ShapeMismatch("conv3d bias size");

  const int M = C * 27;
  const int P = H * W;
  Tensor out({B, T, K, H, W});
  {
    Tensor col({M, P});
    CMapMat wm(w->value.data(), K, M);
    for (int bi = 0; bi < B; ++bi) {
      const float* clip = x->value.data() + static_cast<int64_t>(bi) * T * C * P;
      float* oclip = out.data() + static_cast<int64_t>(bi) * T * K * P;
      for (int t = 0; t < T; ++t) {
        fill_columns(clip, T, C, H, W, t, col.data());
        MapMat om(oclip + static_cast<int64_t>(t) * K * P, K, P);
        om.noalias() = wm * CMapMat(col.data(), M, P);
        if (b)
          for (int k = 0; k < K; ++k)
            om.row(k).array() += b->value[k];
      }
    }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_node(
      std::move(out), std::move(parents), [B, T, C, H, W, K, M, P](Node& self) {
        Node* x = self.parents[0].get();
        Node* w = self.parents[1].get();
        Node* b = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const bool need_dx = x->requires_grad;
        const bool need_dw = w->requires_grad;
        if (need_dx) x->ensure_grad();
        if (need_dw) w->ensure_grad();
        if (b && b->requires_grad) b->ensure_grad();

        Tensor col({M, P});
        Tensor dcol({M, P});
        CMapMat wm(w->value.data(), K, M);
        for (int bi = 0; bi < B; ++bi) {
          const float* clip = x->value.data() + static_cast<int64_t>(bi) * T * C * P;
          const float* gclip = self.grad.data() + static_cast<int64_t>(bi) * T * K * P;
          for (int t = 0; t < T; ++t) {
            CMapMat g(gclip + static_cast<int64_t>(t) * K * P, K, P);
            if (need_dw) {
              fill_columns(clip, T, C, H, W, t, col.data());
              MapMat gw(w->grad.data(), K, M);
              gw.noalias() += g * CMapMat(col.data(), M, P).transpose();
            }
            if (need_dx) {
              MapMat dc(dcol.data(), M, P);
              dc.noalias() = wm.transpose() * g;
              scatter_columns(dcol.data(),
                              T, C, H, W, t,
                              x->grad.data() + static_cast<int64_t>(bi) * T * C * P);
            }
            if (b && b->requires_grad) {
              for (int k = 0; k < K; ++k)
                b->grad[k] += g.row(k).sum();
            }
          }
        }
      });
}

}  // namespace m3t::ag
