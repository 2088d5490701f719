#include "m3t/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace m3t::metrics {

namespace {

struct Moments {
  double mean_x = 0, mean_y = 0;
  double var_x = 0, var_y = 0, cov = 0;  // population moments
  int64_t n = 0;
};

// Vectorizable single sweep over the valid entries accumulating the raw
// sums; moments derived from them afterwards.
Moments gather_moments(std::span<const double> x, std::span<const double> y,
                       std::span<const uint8_t> valid) {
  if (x.size() != y.size())
    throw ShapeMismatch("ccc sequences differ in length");
  if (!valid.empty() && valid.size() != x.size())
    throw ShapeMismatch("ccc mask length mismatch");

  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  int64_t n = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const double xi = x[i], yi = y[i];
    sx += xi;
    sy += yi;
    sxx += xi * xi;
    syy += yi * yi;
    sxy += xi * yi;
    ++n;
  }
  if (n < 2) throw DegenerateInput("ccc needs at least 2 valid entries");

  Moments m;
  m.n = n;
  const double inv = 1.0 / static_cast<double>(n);
  m.mean_x = sx * inv;
  m.mean_y = sy * inv;
  m.var_x = sxx * inv - m.mean_x * m.mean_x;
  m.var_y = syy * inv - m.mean_y * m.mean_y;
  m.cov = sxy * inv - m.mean_x * m.mean_y;
  return m;
}

double ccc_from_moments(const Moments& m) {
  const double gap = m.mean_x - m.mean_y;
  const double denom = m.var_x + m.var_y + gap * gap;
  if (denom == 0.0)
    throw DegenerateInput("ccc denominator is zero (constant sequences, equal means)");
  return 2.0 * m.cov / denom;
}

}  // namespace

double ccc(std::span<const double> x, std::span<const double> y,
           std::span<const uint8_t> valid) {
  return ccc_from_moments(gather_moments(x, y, valid));
}

double ccc(const SequencePair& pair) {
  return ccc(pair.predictions, pair.targets, pair.valid);
}

double ccc_loss(const SequencePair& pair) { return 1.0 - ccc(pair); }

std::vector<double> ccc_loss_grad(const SequencePair& pair) {
  const auto& p = pair.predictions;
  const auto& g = pair.targets;
  const auto& valid = pair.valid;
  const Moments m = gather_moments(p, g, valid);
  const double gap = m.mean_x - m.mean_y;
  const double denom = m.var_x + m.var_y + gap * gap;
  if (denom == 0.0)
    throw DegenerateInput("ccc denominator is zero (constant sequences, equal means)");

  // d rho / d p_i = 2/(N*D^2) * [ (g_i - mean_g)*D - 2*cov*(p_i - mean_g) ],
  // and d loss = -d rho.
  const double scale = 2.0 / (static_cast<double>(m.n) * denom * denom);
  std::vector<double> grad(p.size(), 0.0);
  for (size_t i = 0; i < p.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const double d_rho =
        scale * ((g[i] - m.mean_y) * denom - 2.0 * m.cov * (p[i] - m.mean_y));
    grad[i] = -d_rho;
  }
  return grad;
}

double emotion_cross_entropy(std::span<const float> logits,
                             std::span<const int> labels, int classes) {
  if (logits.size() != labels.size() * static_cast<size_t>(classes))
    throw ShapeMismatch("emotion logits/labels size mismatch");
  double total = 0.0;
  int64_t labeled = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const int label = labels[i];
    if (label == kUnlabeled) continue;
    if (label < 0 || label >= classes)
      throw ShapeMismatch("emotion label out of range");
    const float* row = logits.data() + i * classes;
    float mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c] - mx));
    total += std::log(sum) + static_cast<double>(mx) - static_cast<double>(row[label]);
    ++labeled;
  }
  return labeled ? total / static_cast<double>(labeled) : 0.0;
}

std::vector<float> emotion_cross_entropy_grad(std::span<const float> logits,
                                              std::span<const int> labels,
                                              int classes) {
  if (logits.size() != labels.size() * static_cast<size_t>(classes))
    throw ShapeMismatch("emotion logits/labels size mismatch");
  std::vector<float> grad(logits.size(), 0.0f);
  int64_t labeled = 0;
  for (int lab : labels)
    if (lab != kUnlabeled) ++labeled;
  if (!labeled) return grad;
  const double inv = 1.0 / static_cast<double>(labeled);
  for (size_t i = 0; i < labels.size(); ++i) {
    const int label = labels[i];
    if (label == kUnlabeled) continue;
    const float* row = logits.data() + i * classes;
    float* out = grad.data() + i * classes;
    float mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c] - mx));
    for (int c = 0; c < classes; ++c) {
      const double soft = std::exp(static_cast<double>(row[c] - mx)) / sum;
      out[c] = static_cast<float>((soft - (c == label ? 1.0 : 0.0)) * inv);
    }
  }
  return grad;
}

double combined_loss(double l_v, double l_a, double l_emot, const LossWeights& w) {
  return 0.5 * (l_v + l_a) + w.lambda_emot * l_emot;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["ccc_valence"] = ccc_valence;
  j["ccc_arousal"] = ccc_arousal;
  j["ccc_mean"] = ccc_mean;
  nlohmann::ordered_json pv = nlohmann::ordered_json::object();
  for (const auto& [id, cc] : per_video)
    pv[id] = {{"valence", cc.first}, {"arousal", cc.second}};
  j["per_video"] = pv;
  return j.dump(2);
}

MetricReport evaluate_tracks(
    const std::map<std::string, std::pair<SequencePair, SequencePair>>& per_video) {
  if (per_video.empty()) throw EmptyEvaluation("no videos to evaluate");

  SequencePair global_v, global_a;
  MetricReport report;
  auto append_valid = [](SequencePair& dst, const SequencePair& src) {
    for (size_t i = 0; i < src.predictions.size(); ++i) {
      if (!src.valid.empty() && !src.valid[i]) continue;
      dst.predictions.push_back(src.predictions[i]);
      dst.targets.push_back(src.targets[i]);
    }
  };

  for (const auto& [id, tracks] : per_video) {
    append_valid(global_v, tracks.first);
    append_valid(global_a, tracks.second);
    try {
      const double cv = ccc(tracks.first);
      const double ca = ccc(tracks.second);
      report.per_video.emplace(id, std::make_pair(cv, ca));
    } catch (const DegenerateInput&) {
      // recorded as absent; the frames still count globally
    }
  }

  auto clamp_unit = [](double v) { return std::clamp(v, -1.0, 1.0); };
  report.ccc_valence = clamp_unit(ccc(global_v));
  report.ccc_arousal = clamp_unit(ccc(global_a));
  report.ccc_mean = 0.5 * (report.ccc_valence + report.ccc_arousal);
  return report;
}

}  // namespace m3t::metrics
