#pragma once

#include <random>
#include <vector>

#include "m3t/tensor.hpp"

namespace m3t {

// `count` window starts drawn uniformly from [0, frame_count - t]. A video
// shorter than t yields the single start 0 (the tail is masked downstream).
std::vector<int> sample_windows(int frame_count, int t, int count,
                                std::mt19937_64& rng);

// Non-overlapping starts 0, t, 2t, ... covering every frame.
std::vector<int> segment_eval(int frame_count, int t);

// One crop offset and one flip decision shared by every frame of a window.
struct AugmentPlan {
  int oy = 0, ox = 0;
  bool flip = false;
};

AugmentPlan draw_augment(int source_size, int crop_size, bool train,
                         std::mt19937_64& rng);

// frames [T,3,S,S] -> [T,3,crop,crop] under a fixed plan.
Tensor apply_augment(const Tensor& frames, int crop_size, const AugmentPlan& plan);

// Convenience: draw + apply. Eval mode is the deterministic central crop.
Tensor augment(const Tensor& frames, int crop_size, bool train,
               std::mt19937_64& rng);

// landmarks [T,5,2] smoothed along time with a normalized Gaussian kernel
// (reflect padding), but only when bbox_variance < threshold.
Tensor smooth_landmarks(const Tensor& landmarks, double bbox_variance,
                        double threshold = 25.0, double sigma = 1.0);

}  // namespace m3t
