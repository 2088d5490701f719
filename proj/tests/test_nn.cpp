#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "m3t/nn.hpp"

using namespace m3t;
using ag::Var;

namespace {

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& rng,
                   float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> dist(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

// Plain-loop single-direction GRU reference (gate order r,z,n; update
// h' = n + z*(h-n)), independent of the graph implementation.
std::vector<std::vector<double>> gru_reference(
    const Tensor& x,  // [T, in] single sequence
    const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
    const Tensor& b_hh, int hidden, bool reverse) {
  const int T = x.size(0), in = x.size(1);
  std::vector<double> h(hidden, 0.0);
  std::vector<std::vector<double>> out(T);
  for (int step = 0; step < T; ++step) {
    const int t = reverse ? T - 1 - step : step;
    auto gate = [&](const Tensor& w, const Tensor& b, const double* src,
                    int src_n, int row) {
      double acc = b[row];
      for (int i = 0; i < src_n; ++i) acc += (double)w[row * src_n + i] * src[i];
      return acc;
    };
    std::vector<double> xd(in);
    for (int i = 0; i < in; ++i) xd[i] = x[t * in + i];
    std::vector<double> hn(hidden);
    for (int u = 0; u < hidden; ++u) {
      const double gx_r = gate(w_ih, b_ih, xd.data(), in, u);
      const double gh_r = gate(w_hh, b_hh, h.data(), hidden, u);
      const double r = 1.0 / (1.0 + std::exp(-(gx_r + gh_r)));
      const double gx_z = gate(w_ih, b_ih, xd.data(), in, hidden + u);
      const double gh_z = gate(w_hh, b_hh, h.data(), hidden, hidden + u);
      const double z = 1.0 / (1.0 + std::exp(-(gx_z + gh_z)));
      const double gx_n = gate(w_ih, b_ih, xd.data(), in, 2 * hidden + u);
      const double gh_n = gate(w_hh, b_hh, h.data(), hidden, 2 * hidden + u);
      const double n = std::tanh(gx_n + r * gh_n);
      hn[u] = n + z * (h[u] - n);
    }
    h = hn;
    out[t] = h;
  }
  return out;
}

}  // namespace

TEST_CASE("linear module shapes, naming and init bounds") {
  std::mt19937_64 rng(3);
  nn::Linear lin(8, 4, rng);
  CHECK(lin.in_features() == 8);
  CHECK(lin.out_features() == 4);
  const float bound = 1.0f / std::sqrt(8.0f);
  for (int64_t i = 0; i < lin.weight->value.numel(); ++i) {
    CHECK(lin.weight->value[i] >= -bound);
    CHECK(lin.weight->value[i] <= bound);
  }
  nn::ParamList params;
  lin.collect(params, "head");
  REQUIRE(params.size() == 2);
  CHECK(params[0].first == "head.weight");
  CHECK(params[1].first == "head.bias");
  CHECK(params[0].second->requires_grad);

  Var x = ag::constant(rand_tensor({5, 8}, rng));
  CHECK(lin(x)->value.shape() == std::vector<int>{5, 4});
}

TEST_CASE("conv3d module preserves spatial dims") {
  std::mt19937_64 rng(5);
  nn::Conv3d conv(3, 6, rng);
  Var x = ag::constant(rand_tensor({2, 4, 3, 8, 8}, rng));
  CHECK(conv(x)->value.shape() == std::vector<int>{2, 4, 6, 8, 8});

  nn::ParamList params;
  conv.collect(params, "c1");
  REQUIRE(params.size() == 2);
  CHECK(params[0].first == "c1.weight");
  CHECK(params[0].second->value.shape() == std::vector<int>{6, 3, 3, 3, 3});
}

TEST_CASE("gru forward matches the loop reference (uni and bi)") {
  std::mt19937_64 rng(7);
  const int in = 5, H = 4, T = 6, B = 2;
  nn::GRU gru(in, H, /*layers=*/1, /*bidirectional=*/true, rng);

  nn::ParamList params;
  gru.collect(params, "g");
  std::map<std::string, Tensor> by_name;
  for (auto& [name, var] : params) by_name.emplace(name, var->value);
  REQUIRE(by_name.count("g.weight_ih_l0"));
  REQUIRE(by_name.count("g.weight_ih_l0_reverse"));

  Tensor x = rand_tensor({B, T, in}, rng);
  Var out = gru(ag::constant(x));
  REQUIRE(out->value.shape() == std::vector<int>{B, T, 2 * H});

  for (int b = 0; b < B; ++b) {
    Tensor seq({T, in});
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < in; ++i) seq[t * in + i] = x[(b * T + t) * in + i];
    auto fwd = gru_reference(seq, by_name.at("g.weight_ih_l0"),
                             by_name.at("g.weight_hh_l0"),
                             by_name.at("g.bias_ih_l0"),
                             by_name.at("g.bias_hh_l0"), H, false);
    auto bwd = gru_reference(seq, by_name.at("g.weight_ih_l0_reverse"),
                             by_name.at("g.weight_hh_l0_reverse"),
                             by_name.at("g.bias_ih_l0_reverse"),
                             by_name.at("g.bias_hh_l0_reverse"), H, true);
    for (int t = 0; t < T; ++t)
      for (int u = 0; u < H; ++u) {
        CHECK(out->value[(b * T + t) * 2 * H + u] ==
              doctest::Approx(fwd[t][u]).epsilon(1e-4));
        CHECK(out->value[(b * T + t) * 2 * H + H + u] ==
              doctest::Approx(bwd[t][u]).epsilon(1e-4));
      }
  }
}

TEST_CASE("gru stacks layers and reports parameter names uniquely") {
  std::mt19937_64 rng(11);
  nn::GRU gru(6, 3, /*layers=*/2, /*bidirectional=*/true, rng);
  CHECK(gru.output_size() == 6);
  Var out = gru(ag::constant(rand_tensor({2, 5, 6}, rng)));
  CHECK(out->value.shape() == std::vector<int>{2, 5, 6});

  nn::ParamList params;
  gru.collect(params, "g");
  CHECK(params.size() == 16);  // 2 layers x 2 dirs x 4 tensors
  std::set<std::string> names;
  for (auto& [name, var] : params) names.insert(name);
  CHECK(names.size() == params.size());
  CHECK(names.count("g.weight_hh_l1_reverse") == 1);
  // layer 1 consumes the concatenated output of layer 0
  for (auto& [name, var] : params)
    if (name == "g.weight_ih_l1") CHECK(var->value.shape() == std::vector<int>{9, 6});
}

TEST_CASE("gru gradients flow to every parameter and the input") {
  std::mt19937_64 rng(13);
  const int in = 3, H = 2, T = 4, B = 2;
  nn::GRU gru(in, H, 1, true, rng);
  Var x = ag::make_param(rand_tensor({B, T, in}, rng));
  Var loss = ag::sum(gru(x));
  ag::backward(loss);

  nn::ParamList params;
  gru.collect(params, "g");
  for (auto& [name, var] : params) {
    REQUIRE_MESSAGE(!var->grad.empty(), name);
    double mag = 0;
    for (int64_t i = 0; i < var->grad.numel(); ++i) mag += std::abs(var->grad[i]);
    CHECK_MESSAGE(mag > 0.0, name, " has an all-zero gradient");
  }
  REQUIRE_FALSE(x->grad.empty());

  // finite-difference spot check on one weight entry per tensor
  const float h = 1e-3f;
  for (auto& [name, var] : params) {
    const int64_t idx = var->value.numel() / 2;
    const float saved = var->value[idx];
    const double analytic = var->grad[idx];
    double fp, fm;
    {
      ag::NoGradGuard ng;
      var->value[idx] = saved + h;
      fp = ag::sum(gru(ag::constant(x->value)))->value[0];
      var->value[idx] = saved - h;
      fm = ag::sum(gru(ag::constant(x->value)))->value[0];
      var->value[idx] = saved;
    }
    const double fd = (fp - fm) / (2.0 * h);
    CHECK_MESSAGE(std::abs(analytic - fd) <=
                      2e-3 + 2e-2 * std::max(std::abs(analytic), std::abs(fd)),
                  name, ": analytic ", analytic, " vs fd ", fd);
  }
}

TEST_CASE("gru state does not leak between calls") {
  std::mt19937_64 rng(17);
  nn::GRU gru(3, 2, 1, false, rng);
  Tensor x = rand_tensor({1, 5, 3}, rng);
  Var a = gru(ag::constant(x));
  Var b = gru(ag::constant(x));
  for (int64_t i = 0; i < a->value.numel(); ++i)
    CHECK(a->value[i] == b->value[i]);
}
