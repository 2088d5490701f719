#include "m3t/windows.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "m3t/errors.hpp"

namespace m3t {

std::vector<int> sample_windows(int frame_count, int t, int count,
                                std::mt19937_64& rng) {
  if (frame_count < 1 || t < 1 || count < 1)
    throw ShapeMismatch("sample_windows needs positive frame_count/t/count");
  if (frame_count < t) return {0};
  std::uniform_int_distribution<int> dist(0, frame_count - t);
  std::vector<int> starts(count);
  for (int& s : starts) s = dist(rng);
  return starts;
}

std::vector<int> segment_eval(int frame_count, int t) {
  std::vector<int> starts;
  for (int s = 0; s < frame_count; s += t) starts.push_back(s);
  return starts;
}

AugmentPlan draw_augment(int source_size, int crop_size, bool train,
                         std::mt19937_64& rng) {
  if (crop_size > source_size)
    throw ShapeMismatch("crop size exceeds source size");
  AugmentPlan plan;
  if (train) {
    std::uniform_int_distribution<int> off(0, source_size - crop_size);
    plan.oy = off(rng);
    plan.ox = off(rng);
    plan.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  } else {
    plan.oy = plan.ox = (source_size - crop_size) / 2;
  }
  return plan;
}

Tensor apply_augment(const Tensor& frames, int crop_size, const AugmentPlan& plan) {
  if (frames.ndim() != 4)
    throw ShapeMismatch("augment expects [T,C,H,W], got " + frames.shape_str());
  const int t = frames.size(0), ch = frames.size(1);
  const int h = frames.size(2), w = frames.size(3);
  if (h != w) throw ShapeMismatch("augment expects square frames");
  if (plan.oy < 0 || plan.ox < 0 || plan.oy + crop_size > h || plan.ox + crop_size > w)
    throw ShapeMismatch("crop window outside source frame");
  Tensor out({t, ch, crop_size, crop_size});
  for (int i = 0; i < t; ++i)
    for (int c = 0; c < ch; ++c) {
      const float* src = frames.data() +
                         (static_cast<int64_t>(i) * ch + c) * h * w;
      float* dst = out.data() +
                   (static_cast<int64_t>(i) * ch + c) * crop_size * crop_size;
      for (int y = 0; y < crop_size; ++y) {
        const float* row = src + static_cast<int64_t>(plan.oy + y) * w + plan.ox;
        float* orow = dst + static_cast<int64_t>(y) * crop_size;
        if (plan.flip) {
          for (int x = 0; x < crop_size; ++x) orow[x] = row[crop_size - 1 - x];
        } else {
          std::memcpy(orow, row, sizeof(float) * crop_size);
        }
      }
    }
  return out;
}

Tensor augment(const Tensor& frames, int crop_size, bool train,
               std::mt19937_64& rng) {
  return apply_augment(frames, crop_size,
                       draw_augment(frames.size(-1), crop_size, train, rng));
}

namespace {
int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}
}  // namespace

Tensor smooth_landmarks(const Tensor& landmarks, double bbox_variance,
                        double threshold, double sigma) {
  if (landmarks.ndim() != 3)
    throw ShapeMismatch("landmarks must be [T,points,2], got " +
                        landmarks.shape_str());
  if (bbox_variance >= threshold) return landmarks;  // gated off, bit-identical

  const int t = landmarks.size(0);
  const int coords = landmarks.size(1) * landmarks.size(2);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    norm += kernel[k + radius];
  }
  for (double& w : kernel) w /= norm;

  Tensor out(landmarks.shape());
  for (int c = 0; c < coords; ++c)
    for (int i = 0; i < t; ++i) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] *
               landmarks.data()[static_cast<int64_t>(reflect_index(i + k, t)) *
                                    coords + c];
      out.data()[static_cast<int64_t>(i) * coords + c] = static_cast<float>(acc);
    }
  return out;
}

}  // namespace m3t
