#include "m3t/optim.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "m3t/autodiff.hpp"
#include "m3t/errors.hpp"

namespace m3t {

double CyclicalLR::at(int64_t iteration) const {
  const int64_t cycle = 2 * step_size_up;
  const int64_t pos = iteration % cycle;
  const double frac = pos <= step_size_up
                          ? static_cast<double>(pos) / step_size_up
                          : static_cast<double>(cycle - pos) / step_size_up;
  return base_lr + (max_lr - base_lr) * frac;
}

double PlateauDecay::observe(double metric) {
  if (metric > best) {
    best = metric;
    bad_streak = 0;
  } else if (++bad_streak >= patience) {
    lr *= factor;
    bad_streak = 0;
  }
  return lr;
}

Adam::Adam(nn::ParamList params, Config cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, var] : params_) {
    m_.emplace_back(var->value.shape());
    v_.emplace_back(var->value.shape());
  }
}

int Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  int updated = 0;
  for (size_t p = 0; p < params_.size(); ++p) {
    auto& var = params_[p].second;
    if (!var->requires_grad || var->grad.empty()) continue;
    float* w = var->value.data();
    const float* g = var->grad.data();
    float* m = m_[p].data();
    float* v = v_[p].data();
    const int64_t n = var->value.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double grad = static_cast<double>(g[i]) + cfg_.weight_decay * w[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad * grad;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      w[i] -= static_cast<float>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps));
    }
    ++updated;
  }
  return updated;
}

void Adam::zero_grad() {
  for (auto& [name, var] : params_) var->grad = Tensor();
}

void Adam::save_state(std::ostream& out) const {
  const char magic[4] = {'A', 'D', 'M', '1'};
  out.write(magic, 4);
  const int64_t count = static_cast<int64_t>(params_.size());
  out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (size_t p = 0; p < params_.size(); ++p) {
    const int64_t n = m_[p].numel();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(m_[p].data()),
              static_cast<std::streamsize>(n * 4));
    out.write(reinterpret_cast<const char*>(v_[p].data()),
              static_cast<std::streamsize>(n * 4));
  }
}

void Adam::load_state(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  int64_t count = 0;
  in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || std::string(magic, 4) != "ADM1" ||
      count != static_cast<int64_t>(params_.size()))
    throw IncompatibleCheckpoint("optimizer state does not match the model");
  for (size_t p = 0; p < params_.size(); ++p) {
    int64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != m_[p].numel())
      throw IncompatibleCheckpoint("optimizer moment size mismatch at tensor " +
                                   params_[p].first);
    in.read(reinterpret_cast<char*>(m_[p].data()),
            static_cast<std::streamsize>(n * 4));
    in.read(reinterpret_cast<char*>(v_[p].data()),
            static_cast<std::streamsize>(n * 4));
  }
  if (!in) throw IncompatibleCheckpoint("optimizer state truncated");
}

}  // namespace m3t
