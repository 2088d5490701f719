#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "m3t/autodiff.hpp"
#include "m3t/metrics.hpp"

using namespace m3t;
using ag::Var;

namespace {

std::mt19937_64 g_rng(12345);

Tensor rand_tensor(std::vector<int> shape, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> dist(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(g_rng);
  return t;
}

using Builder = std::function<Var(const std::vector<Var>&)>;

double eval_loss(const std::vector<Tensor>& leaves, const Builder& build) {
  ag::NoGradGuard ng;
  std::vector<Var> vars;
  for (const auto& t : leaves) vars.push_back(ag::constant(t));
  return build(vars)->value[0];
}

// Central-difference check of every leaf entry against the tape gradient.
void check_grads(const std::vector<Tensor>& leaves, const Builder& build,
                 float h = 1e-2f, double rel = 2e-2, double abs_floor = 2e-3) {
  std::vector<Var> vars;
  for (const auto& t : leaves) vars.push_back(ag::make_param(t));
  Var loss = build(vars);
  REQUIRE(loss->value.numel() == 1);
  ag::backward(loss);
  for (size_t li = 0; li < leaves.size(); ++li) {
    REQUIRE_FALSE(vars[li]->grad.empty());
    for (int64_t i = 0; i < leaves[li].numel(); ++i) {
      auto lp = leaves;
      lp[li][i] += h;
      auto lm = leaves;
      lm[li][i] -= h;
      const double fd = (eval_loss(lp, build) - eval_loss(lm, build)) / (2.0 * h);
      const double an = vars[li]->grad[i];
      CHECK_MESSAGE(
          std::abs(an - fd) <= abs_floor + rel * std::max(std::abs(an), std::abs(fd)),
          "leaf ", li, " entry ", i, ": analytic ", an, " vs fd ", fd);
    }
  }
}

// Reduce an arbitrary tensor to a scalar with fixed random weights so that
// permutation/transposition bugs change the result.
Builder weighted(const std::function<Var(const std::vector<Var>&)>& f,
                 const Tensor& probe) {
  return [f, probe](const std::vector<Var>& vars) {
    return ag::sum(ag::mul(f(vars), ag::constant(probe)));
  };
}

}  // namespace

TEST_CASE("elementwise ops: values and gradients") {
  Tensor a = rand_tensor({3, 4});
  Tensor b = rand_tensor({3, 4});
  Tensor probe = rand_tensor({3, 4});

  check_grads({a, b}, weighted([](const std::vector<Var>& v) {
                return ag::add(v[0], v[1]);
              }, probe));
  check_grads({a, b}, weighted([](const std::vector<Var>& v) {
                return ag::sub(v[0], v[1]);
              }, probe));
  check_grads({a, b}, weighted([](const std::vector<Var>& v) {
                return ag::mul(v[0], v[1]);
              }, probe));
  check_grads({a}, weighted([](const std::vector<Var>& v) {
                return ag::affine(v[0], 2.5f, -0.75f);
              }, probe));

  // value checks
  Var x = ag::constant(Tensor({2}, {1.0f, -2.0f}));
  CHECK(ag::affine(x, 3.0f, 1.0f)->value[0] == doctest::Approx(4.0f));
  CHECK(ag::affine(x, 3.0f, 1.0f)->value[1] == doctest::Approx(-5.0f));
  CHECK(ag::add(x, x)->value[1] == doctest::Approx(-4.0f));
  CHECK(ag::mul(x, x)->value[1] == doctest::Approx(4.0f));
}

TEST_CASE("activations: values and gradients") {
  // keep relu inputs away from the kink
  Tensor a = rand_tensor({4, 5});
  for (int64_t i = 0; i < a.numel(); ++i)
    if (std::abs(a[i]) < 0.15f) a[i] = a[i] < 0 ? -0.2f : 0.2f;
  Tensor probe = rand_tensor({4, 5});

  check_grads({a}, weighted([](const std::vector<Var>& v) { return ag::relu(v[0]); }, probe));
  check_grads({a}, weighted([](const std::vector<Var>& v) { return ag::sigmoid(v[0]); }, probe));
  check_grads({a}, weighted([](const std::vector<Var>& v) { return ag::tanh_(v[0]); }, probe));

  Var x = ag::constant(Tensor({3}, {-1.0f, 0.0f, 2.0f}));
  auto r = ag::relu(x);
  CHECK(r->value[0] == 0.0f);
  CHECK(r->value[1] == 0.0f);
  CHECK(r->value[2] == 2.0f);
  CHECK(ag::sigmoid(x)->value[1] == doctest::Approx(0.5f));
  CHECK(ag::sigmoid(x)->value[2] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  CHECK(ag::tanh_(x)->value[2] == doctest::Approx(std::tanh(2.0)));
}

TEST_CASE("shape ops: reshape, slice, concat, time select/stack") {
  Tensor a = rand_tensor({2, 3, 4});
  Tensor b = rand_tensor({2, 3, 2});

  check_grads({a}, weighted([](const std::vector<Var>& v) {
                return ag::reshape(v[0], {6, 4});
              }, rand_tensor({6, 4})));
  check_grads({a}, weighted([](const std::vector<Var>& v) {
                return ag::slice_last(v[0], 1, 3);
              }, rand_tensor({2, 3, 2})));
  check_grads({a, b}, weighted([](const std::vector<Var>& v) {
                return ag::concat_last({v[0], v[1]});
              }, rand_tensor({2, 3, 6})));
  check_grads({a}, weighted([](const std::vector<Var>& v) {
                return ag::select_time(v[0], 1);
              }, rand_tensor({2, 4})));
  check_grads({a}, weighted([](const std::vector<Var>& v) {
                // reuse one timestep twice to exercise shared parents
                return ag::stack_time({ag::select_time(v[0], 0),
                                       ag::select_time(v[0], 2),
                                       ag::select_time(v[0], 2)});
              }, rand_tensor({2, 3, 4})));

  // slice/concat round trip reproduces the input
  Var x = ag::constant(a);
  auto rt = ag::concat_last({ag::slice_last(x, 0, 1), ag::slice_last(x, 1, 4)});
  REQUIRE(rt->value.same_shape(a));
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(rt->value[i] == a[i]);

  // select_time picks the right rows
  auto s = ag::select_time(x, 2);
  REQUIRE(s->value.shape() == std::vector<int>{2, 4});
  for (int bb = 0; bb < 2; ++bb)
    for (int d = 0; d < 4; ++d)
      CHECK(s->value[bb * 4 + d] == a[(bb * 3 + 2) * 4 + d]);
}

TEST_CASE("linear: oracle forward and gradients") {
  Tensor x = rand_tensor({2, 3, 4});  // folded rows = 6
  Tensor w = rand_tensor({5, 4});
  Tensor b = rand_tensor({5});

  // forward oracle
  {
    Var out = ag::linear(ag::constant(x), ag::constant(w), ag::constant(b));
    REQUIRE(out->value.shape() == std::vector<int>{2, 3, 5});
    for (int r = 0; r < 6; ++r)
      for (int o = 0; o < 5; ++o) {
        double acc = b[o];
        for (int i = 0; i < 4; ++i) acc += (double)x[r * 4 + i] * w[o * 4 + i];
        CHECK(out->value[r * 5 + o] == doctest::Approx(acc).epsilon(1e-5));
      }
  }
  Tensor probe = rand_tensor({2, 3, 5});
  check_grads({x, w, b}, weighted([](const std::vector<Var>& v) {
                return ag::linear(v[0], v[1], v[2]);
              }, probe));
  // no-bias variant
  check_grads({x, w}, weighted([](const std::vector<Var>& v) {
                return ag::linear(v[0], v[1], nullptr);
              }, probe));
}

TEST_CASE("conv3d: oracle forward") {
  const int B = 1, T = 3, C = 2, H = 4, W = 4, K = 3;
  Tensor x = rand_tensor({B, T, C, H, W});
  Tensor w = rand_tensor({K, C, 3, 3, 3}, -0.5f, 0.5f);
  Tensor b = rand_tensor({K});

  Var out = ag::conv3d(ag::constant(x), ag::constant(w), ag::constant(b));
  REQUIRE(out->value.shape() == std::vector<int>{B, T, K, H, W});

  auto X = [&](int t, int c, int y, int z) -> double {
    if (t < 0 || t >= T || y < 0 || y >= H || z < 0 || z >= W) return 0.0;
    return x[((t * C + c) * H + y) * W + z];
  };
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k)
      for (int y = 0; y < H; ++y)
        for (int z = 0; z < W; ++z) {
          double acc = b[k];
          for (int c = 0; c < C; ++c)
            for (int dt = -1; dt <= 1; ++dt)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz)
                  acc += X(t + dt, c, y + dy, z + dz) *
                         w[(((k * C + c) * 3 + dt + 1) * 3 + dy + 1) * 3 + dz + 1];
          CHECK(out->value[((t * K + k) * H + y) * W + z] ==
                doctest::Approx(acc).epsilon(1e-4));
        }
}

TEST_CASE("conv3d: gradients") {
  Tensor x = rand_tensor({2, 2, 2, 4, 4});
  Tensor w = rand_tensor({2, 2, 3, 3, 3}, -0.4f, 0.4f);
  Tensor b = rand_tensor({2});
  Tensor probe = rand_tensor({2, 2, 2, 4, 4});
  check_grads({x, w, b}, weighted([](const std::vector<Var>& v) {
                return ag::conv3d(v[0], v[1], v[2]);
              }, probe), 1e-2f, 3e-2, 4e-3);
}

TEST_CASE("maxpool2d: oracle forward and gradient routing") {
  Tensor x({1, 1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x[i] = static_cast<float>(i % 7) - 3.0f + 0.01f * i;
  Var out = ag::maxpool2d(ag::make_param(x));
  REQUIRE(out->value.shape() == std::vector<int>{1, 1, 1, 2, 2});
  for (int y = 0; y < 2; ++y)
    for (int z = 0; z < 2; ++z) {
      float best = -1e9f;
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz)
          best = std::max(best, x[(2 * y + dy) * 4 + 2 * z + dz]);
      CHECK(out->value[y * 2 + z] == best);
    }

  // Give every 2x2 window a clear winner so finite differences cannot flip
  // the argmax.
  Tensor xr = rand_tensor({2, 2, 3, 4, 6});
  {
    std::mt19937_64 pick(21);
    const int Hh = 4, Ww = 6;
    for (int plane = 0; plane < 2 * 2 * 3; ++plane)
      for (int y = 0; y < Hh / 2; ++y)
        for (int z = 0; z < Ww / 2; ++z) {
          const int dy = static_cast<int>(pick() % 2), dz = static_cast<int>(pick() % 2);
          xr[plane * Hh * Ww + (2 * y + dy) * Ww + 2 * z + dz] += 3.0f;
        }
  }
  check_grads({xr}, weighted([](const std::vector<Var>& v) {
                return ag::maxpool2d(v[0]);
              }, rand_tensor({2, 2, 3, 2, 3})));
}

TEST_CASE("spatial_avg: oracle forward and gradient") {
  Tensor x = rand_tensor({2, 3, 2, 4, 4});
  Var out = ag::spatial_avg(ag::constant(x));
  REQUIRE(out->value.shape() == std::vector<int>{2, 3, 2});
  double acc = 0;
  for (int i = 0; i < 16; ++i) acc += x[i];  // first plane
  CHECK(out->value[0] == doctest::Approx(acc / 16.0).epsilon(1e-5));

  check_grads({x}, weighted([](const std::vector<Var>& v) {
                return ag::spatial_avg(v[0]);
              }, rand_tensor({2, 3, 2})));
}

TEST_CASE("scale_rows: per-timestep scaling") {
  Tensor x = rand_tensor({2, 3, 4});
  Tensor s = rand_tensor({2, 3, 1}, 0.1f, 0.9f);
  Var out = ag::scale_rows(ag::constant(x), ag::constant(s));
  REQUIRE(out->value.shape() == std::vector<int>{2, 3, 4});
  for (int r = 0; r < 6; ++r)
    for (int d = 0; d < 4; ++d)
      CHECK(out->value[r * 4 + d] == doctest::Approx(x[r * 4 + d] * s[r]));

  check_grads({x, s}, weighted([](const std::vector<Var>& v) {
                return ag::scale_rows(v[0], v[1]);
              }, rand_tensor({2, 3, 4})));
}

TEST_CASE("reductions") {
  Tensor x = rand_tensor({3, 5});
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x[i];
  CHECK(ag::sum(ag::constant(x))->value[0] == doctest::Approx(acc).epsilon(1e-5));
  CHECK(ag::mean_all(ag::constant(x))->value[0] ==
        doctest::Approx(acc / 15.0).epsilon(1e-5));
  check_grads({x}, [](const std::vector<Var>& v) { return ag::mean_all(v[0]); });
}

TEST_CASE("cross-entropy node matches the reference and masks rows") {
  Tensor logits = rand_tensor({4, 7}, -2.0f, 2.0f);
  std::vector<int> labels = {2, metrics::kUnlabeled, 5, 0};
  Var node = ag::softmax_cross_entropy_masked(ag::make_param(logits), labels);
  const double ref = metrics::emotion_cross_entropy(
      std::span<const float>(logits.data(), logits.numel()), labels);
  CHECK(node->value[0] == doctest::Approx(ref).epsilon(1e-6));

  ag::backward(node);
  // unlabeled row has exactly zero gradient
  for (int c = 0; c < 7; ++c) CHECK(node->parents[0]->grad[7 + c] == 0.0f);

  check_grads({logits}, [labels](const std::vector<Var>& v) {
    return ag::softmax_cross_entropy_masked(v[0], labels);
  });
}

TEST_CASE("ccc loss node: value, gradient, mask") {
  Tensor pred = rand_tensor({2, 8});
  std::vector<double> targets(16);
  std::vector<uint8_t> valid(16, 1);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& t : targets) t = dist(rng);
  valid[3] = 0;
  valid[11] = 0;

  metrics::SequencePair pair;
  pair.predictions.assign(pred.data(), pred.data() + 16);
  pair.targets = targets;
  pair.valid = valid;
  Var node = ag::ccc_loss_node(ag::make_param(pred), targets, valid);
  CHECK(node->value[0] == doctest::Approx(metrics::ccc_loss(pair)).epsilon(1e-6));

  ag::backward(node);
  CHECK(node->parents[0]->grad[3] == 0.0f);
  CHECK(node->parents[0]->grad[11] == 0.0f);

  check_grads({pred}, [targets, valid](const std::vector<Var>& v) {
    return ag::ccc_loss_node(v[0], targets, valid);
  }, 1e-3f);

  // degenerate: constant predictions & targets with equal means
  Tensor flat = Tensor::full({4}, 0.25f);
  CHECK_THROWS_AS(
      ag::ccc_loss_node(ag::make_param(flat), {0.25, 0.25, 0.25, 0.25}, {}),
      DegenerateInput);
}

TEST_CASE("per-window ccc loss averages computable windows") {
  Tensor pred = rand_tensor({3, 6});
  std::vector<double> targets(18);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& t : targets) t = dist(rng);
  // make window 1 degenerate: all its targets equal its predictions' constant
  for (int i = 6; i < 12; ++i) {
    pred[i] = 0.5f;
    targets[i] = 0.5;
  }

  Var node = ag::ccc_loss_windows(ag::make_param(pred), targets, {}, 6);
  metrics::SequencePair w0{{pred.data(), pred.data() + 6},
                           {targets.begin(), targets.begin() + 6}};
  metrics::SequencePair w2{{pred.data() + 12, pred.data() + 18},
                           {targets.begin() + 12, targets.begin() + 18}};
  const double expect = 0.5 * (metrics::ccc_loss(w0) + metrics::ccc_loss(w2));
  CHECK(node->value[0] == doctest::Approx(expect).epsilon(1e-6));

  ag::backward(node);
  for (int i = 6; i < 12; ++i) CHECK(node->parents[0]->grad[i] == 0.0f);

  check_grads({pred}, [targets](const std::vector<Var>& v) {
    return ag::ccc_loss_windows(v[0], targets, {}, 6);
  }, 1e-3f);

  // all windows degenerate -> throw (0.5 is exact in both float and double)
  Tensor flat = Tensor::full({4}, 0.5f);
  CHECK_THROWS_AS(
      ag::ccc_loss_windows(ag::make_param(flat), {0.5, 0.5, 0.5, 0.5}, {}, 2),
      DegenerateInput);
}

TEST_CASE("requires_grad propagation and NoGradGuard") {
  Tensor a = rand_tensor({2, 2});
  Var c1 = ag::constant(a);
  Var c2 = ag::constant(a);
  Var sum_const = ag::add(c1, c2);
  CHECK_FALSE(sum_const->requires_grad);
  CHECK(sum_const->parents.empty());  // inference path keeps no graph

  Var p = ag::make_param(a);
  Var mixed = ag::add(p, c1);
  CHECK(mixed->requires_grad);
  Var loss = ag::sum(mixed);
  ag::backward(loss);
  REQUIRE_FALSE(p->grad.empty());
  for (int64_t i = 0; i < 4; ++i) CHECK(p->grad[i] == 1.0f);
  CHECK(c1->grad.empty());  // constants never accumulate

  {
    ag::NoGradGuard ng;
    CHECK_FALSE(ag::grad_enabled());
    Var q = ag::add(p, p);
    CHECK_FALSE(q->requires_grad);
    CHECK(q->parents.empty());
  }
  CHECK(ag::grad_enabled());
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Tensor a = rand_tensor({3});
  check_grads({a}, [](const std::vector<Var>& v) {
    Var y = ag::mul(v[0], v[0]);       // x^2
    Var z = ag::add(y, v[0]);          // x^2 + x
    return ag::sum(ag::add(z, y));     // 2x^2 + x, x used three times
  });
}
