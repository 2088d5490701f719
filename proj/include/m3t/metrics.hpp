#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "m3t/errors.hpp"

namespace m3t::metrics {

constexpr int kEmotionClasses = 7;
constexpr int kUnlabeled = -1;

// Aligned prediction/target tracks with a per-frame validity mask.
// Invalid entries are excluded from every moment computation.
struct SequencePair {
  std::vector<double> predictions;
  std::vector<double> targets;
  std::vector<uint8_t> valid;  // empty means all valid

  SequencePair() = default;
  SequencePair(std::vector<double> pred, std::vector<double> targ,
               std::vector<uint8_t> mask = {})
      : predictions(std::move(pred)), targets(std::move(targ)), valid(std::move(mask)) {}
};

// Concordance correlation coefficient over the valid entries, with
// population (divide-by-N) moments:
//   rho = 2*s_xy / (s_x^2 + s_y^2 + (mean_x - mean_y)^2)
// Throws DegenerateInput when fewer than two entries are valid or the
// denominator is exactly zero (both sequences constant with equal means).
double ccc(const SequencePair& pair);
double ccc(std::span<const double> x, std::span<const double> y,
           std::span<const uint8_t> valid = {});

// 1 - ccc, in [0, 2].
double ccc_loss(const SequencePair& pair);

// Analytic gradient of ccc_loss with respect to the predictions; zero at
// invalid indices. Same degeneracy conditions as ccc.
std::vector<double> ccc_loss_grad(const SequencePair& pair);

// Per-row categorical losses over 7-class logits; rows labeled kUnlabeled
// contribute nothing. Returns 0 when no row is labeled.
double emotion_cross_entropy(std::span<const float> logits,
                             std::span<const int> labels,
                             int classes = kEmotionClasses);

// Gradient of the masked mean cross-entropy w.r.t. the logits
// ((softmax - onehot) / n_labeled on labeled rows, zero elsewhere).
std::vector<float> emotion_cross_entropy_grad(std::span<const float> logits,
                                              std::span<const int> labels,
                                              int classes = kEmotionClasses);

struct LossWeights {
  double lambda_emot = 0.5;
};

// 0.5*(l_v + l_a) + lambda*l_emot
double combined_loss(double l_v, double l_a, double l_emot, const LossWeights& w);

struct MetricReport {
  double ccc_valence = 0.0;
  double ccc_arousal = 0.0;
  double ccc_mean = 0.0;
  // video id -> (valence CCC, arousal CCC); videos whose per-video CCC is
  // degenerate are absent here but still contribute to the global numbers.
  std::map<std::string, std::pair<double, double>> per_video;

  std::string to_json() const;
};

// Global CCCs over the concatenation of all videos' valid frames, plus
// per-video CCCs. Throws EmptyEvaluation on an empty input map.
MetricReport evaluate_tracks(
    const std::map<std::string, std::pair<SequencePair, SequencePair>>& per_video);

}  // namespace m3t::metrics
