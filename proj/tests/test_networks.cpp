#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "m3t/metrics.hpp"
#include "m3t/model.hpp"

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

VisualConfig tiny_visual() {
  VisualConfig cfg;
  cfg.input_size = 32;
  cfg.channel_widths = {4, 6, 8, 8, 12};
  cfg.gru_hidden = 5;
  cfg.gru_layers = 1;
  cfg.head_hidden = 7;
  cfg.emo_dim = 6;
  cfg.au_dim = 3;
  return cfg;
}

AcousticConfig tiny_acoustic() {
  AcousticConfig cfg;
  cfg.input_dim = 10;
  cfg.gru_hidden = 4;
  cfg.gru_layers = 1;
  return cfg;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.visual = tiny_visual();
  cfg.acoustic = tiny_acoustic();
  cfg.fusion.scorer_hidden = 3;
  cfg.fusion.joint_hidden = 6;
  cfg.fusion.joint_fc_hidden = 5;
  cfg.sync_dims();
  return cfg;
}

bool all_finite(const Tensor& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

double grad_abs_sum(const Var& v) {
  if (v->grad.empty()) return 0.0;
  double s = 0;
  for (int64_t i = 0; i < v->grad.numel(); ++i) s += std::abs(v->grad[i]);
  return s;
}

}  // namespace

TEST_CASE("visual network obeys the shape contract") {
  std::mt19937_64 rng(1);
  VisualConfig cfg = tiny_visual();
  VisualNetwork net(cfg, rng);
  const int B = 2, T = 5;
  ag::NoGradGuard ng;
  Var frames = ag::constant(rand_tensor({B, T, 3, 32, 32}, rng));
  Var emo = ag::constant(rand_tensor({B, T, cfg.emo_dim}, rng));
  Var au = ag::constant(rand_tensor({B, T, cfg.au_dim}, rng));
  auto out = net.forward(frames, emo, au);
  CHECK(out.valence->value.shape() == std::vector<int>{B, T});
  CHECK(out.arousal->value.shape() == std::vector<int>{B, T});
  CHECK(out.emotion_logits->value.shape() == std::vector<int>{B, T, 7});
  CHECK(out.frame_features->value.shape() ==
        std::vector<int>{B, T, cfg.frame_feature_dim()});
  CHECK(all_finite(out.valence->value));

  // single-frame window
  Var one = ag::constant(rand_tensor({1, 1, 3, 32, 32}, rng));
  auto out1 = net.forward(one, ag::constant(rand_tensor({1, 1, cfg.emo_dim}, rng)),
                          ag::constant(rand_tensor({1, 1, cfg.au_dim}, rng)));
  CHECK(out1.valence->value.shape() == std::vector<int>{1, 1});
  CHECK(out1.emotion_logits->value.shape() == std::vector<int>{1, 1, 7});

  // static length mismatch
  CHECK_THROWS_AS(
      net.forward(frames, ag::constant(rand_tensor({B, T + 1, cfg.emo_dim}, rng)), au),
      ShapeMismatch);
  // wrong spatial size
  CHECK_THROWS_AS(
      net.forward(ag::constant(rand_tensor({1, 2, 3, 16, 16}, rng)), emo, au),
      ShapeMismatch);
}

TEST_CASE("route_static concatenation widths") {
  std::mt19937_64 rng(2);
  const int B = 1, T = 3;
  Var v = ag::constant(rand_tensor({B, T, 512}, rng));
  Var a = ag::constant(rand_tensor({B, T, 512}, rng));
  Var emo = ag::constant(rand_tensor({B, T, 512}, rng));
  Var au = ag::constant(rand_tensor({B, T, 256}, rng));

  auto [v1, a1] = route_static(v, a, emo, au, StaticRouting::kEmoAu);
  CHECK(v1->value.shape() == std::vector<int>{B, T, 1024});
  CHECK(a1->value.shape() == std::vector<int>{B, T, 768});

  auto [v2, a2] = route_static(v, a, emo, au, StaticRouting::kEmoEmo);
  CHECK(v2->value.shape() == std::vector<int>{B, T, 1024});
  CHECK(a2->value.shape() == std::vector<int>{B, T, 1024});

  auto [v3, a3] = route_static(v, a, emo, au, StaticRouting::kNone);
  CHECK(v3->value.shape() == std::vector<int>{B, T, 512});
  CHECK(a3->value.shape() == std::vector<int>{B, T, 512});

  // 3D features occupy the leading channels, statics follow
  for (int i = 0; i < 512; ++i) CHECK(v1->value[i] == v->value[i]);
  for (int i = 0; i < 512; ++i) CHECK(v1->value[512 + i] == emo->value[i]);
  CHECK(parse_routing("emo_au") == StaticRouting::kEmoAu);
  CHECK(routing_name(StaticRouting::kEmoEmo) == "emo_emo");
  CHECK_THROWS_AS(parse_routing("bogus"), ConfigError);
}

TEST_CASE("zeroed static features reduce to the none-routing model") {
  std::mt19937_64 rng(3);
  VisualConfig cfg = tiny_visual();
  VisualNetwork with_static(cfg, rng);

  VisualConfig none_cfg = cfg;
  none_cfg.routing = StaticRouting::kNone;
  std::mt19937_64 rng2(99);
  VisualNetwork none_net(none_cfg, rng2);

  // copy weights: identical names copy verbatim; the branch GRUs' layer-0
  // input weights shrink to the leading (conv-feature) columns
  nn::ParamList src, dst;
  with_static.collect(src, "");
  none_net.collect(dst, "");
  std::map<std::string, Var> by_name;
  for (auto& [n, v] : src) by_name[n] = v;
  const int conv_cols = cfg.channel_widths[4];
  for (auto& [name, var] : dst) {
    Var s = by_name.at(name);
    if (var->value.same_shape(s->value)) {
      var->value = s->value;
    } else {
      // [3H, conv_cols] from [3H, conv_cols + static_dim]
      const int rows = var->value.size(0);
      const int wide = s->value.size(1);
      REQUIRE(var->value.size(1) == conv_cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < conv_cols; ++c)
          var->value[r * conv_cols + c] = s->value[r * wide + c];
    }
  }

  const int B = 2, T = 4;
  ag::NoGradGuard ng;
  Var frames = ag::constant(rand_tensor({B, T, 3, 32, 32}, rng));
  Var emo_zero = ag::constant(Tensor::zeros({B, T, cfg.emo_dim}));
  Var au_zero = ag::constant(Tensor::zeros({B, T, cfg.au_dim}));
  Var emo_rand = ag::constant(rand_tensor({B, T, cfg.emo_dim}, rng));
  Var au_rand = ag::constant(rand_tensor({B, T, cfg.au_dim}, rng));

  auto out_zero = with_static.forward(frames, emo_zero, au_zero);
  auto out_rand = with_static.forward(frames, emo_rand, au_rand);
  auto out_none = none_net.forward(frames, emo_zero, au_zero);

  // statics matter when nonzero
  double diff = 0;
  for (int64_t i = 0; i < out_zero.valence->value.numel(); ++i)
    diff += std::abs(out_zero.valence->value[i] - out_rand.valence->value[i]);
  CHECK(diff > 1e-4);

  // zero statics match the reduced model (same effective computation)
  for (int64_t i = 0; i < out_zero.valence->value.numel(); ++i) {
    CHECK(out_zero.valence->value[i] ==
          doctest::Approx(out_none.valence->value[i]).epsilon(1e-5));
    CHECK(out_zero.arousal->value[i] ==
          doctest::Approx(out_none.arousal->value[i]).epsilon(1e-5));
  }
}

TEST_CASE("gradient partition isolates the branches") {
  std::mt19937_64 rng(5);
  VisualConfig cfg = tiny_visual();
  VisualNetwork net(cfg, rng);
  const int B = 1, T = 6;
  Var frames = ag::constant(rand_tensor({B, T, 3, 32, 32}, rng));
  Var emo = ag::constant(rand_tensor({B, T, cfg.emo_dim}, rng));
  Var au = ag::constant(rand_tensor({B, T, cfg.au_dim}, rng));

  std::vector<double> targets(B * T);
  std::uniform_real_distribution<double> dist(-1, 1);
  std::mt19937_64 trng(6);
  for (auto& t : targets) t = dist(trng);

  SUBCASE("arousal loss leaves valence-exclusive weights untouched") {
    auto out = net.forward(frames, emo, au);
    ag::backward(ag::ccc_loss_node(out.arousal, targets, {}));
    nn::ParamList params;
    net.collect(params, "");
    for (auto& [name, var] : params) {
      const bool valence_only = name.rfind("valence.", 0) == 0 ||
                                name.rfind("emotion.", 0) == 0;
      if (valence_only) {
        CHECK_MESSAGE(grad_abs_sum(var) == 0.0, name);
      } else {
        CHECK_MESSAGE(grad_abs_sum(var) > 0.0, name);  // trunk + arousal path
      }
    }
  }

  SUBCASE("valence loss leaves arousal-exclusive weights untouched") {
    auto out = net.forward(frames, emo, au);
    ag::backward(ag::ccc_loss_node(out.valence, targets, {}));
    nn::ParamList params;
    net.collect(params, "");
    for (auto& [name, var] : params) {
      const bool arousal_only = name.rfind("arousal.", 0) == 0;
      const bool emotion_only = name.rfind("emotion.", 0) == 0;
      if (arousal_only || emotion_only) {
        CHECK_MESSAGE(grad_abs_sum(var) == 0.0, name);
      } else {
        CHECK_MESSAGE(grad_abs_sum(var) > 0.0, name);
      }
    }
  }
}

TEST_CASE("fully unlabeled emotion batch yields zero emotion gradients") {
  std::mt19937_64 rng(7);
  VisualConfig cfg = tiny_visual();
  VisualNetwork net(cfg, rng);
  const int B = 2, T = 3;
  auto out = net.forward(ag::constant(rand_tensor({B, T, 3, 32, 32}, rng)),
                         ag::constant(rand_tensor({B, T, cfg.emo_dim}, rng)),
                         ag::constant(rand_tensor({B, T, cfg.au_dim}, rng)));
  std::vector<int> labels(B * T, metrics::kUnlabeled);
  Var logits = ag::reshape(out.emotion_logits, {B * T, 7});
  Var ce = ag::softmax_cross_entropy_masked(logits, labels);
  CHECK(ce->value[0] == 0.0f);
  ag::backward(ce);
  nn::ParamList params;
  net.collect(params, "");
  for (auto& [name, var] : params)
    if (name.rfind("emotion.", 0) == 0)
      CHECK_MESSAGE(grad_abs_sum(var) == 0.0, name);
}

TEST_CASE("acoustic network shapes, zero-input safety, batch independence") {
  std::mt19937_64 rng(11);
  AcousticConfig cfg = tiny_acoustic();
  AcousticNetwork net(cfg, rng);
  const int T = 7;
  ag::NoGradGuard ng;

  Tensor batch = rand_tensor({3, T, cfg.input_dim}, rng);
  auto out = net.forward(ag::constant(batch));
  CHECK(out.frame_features->value.shape() ==
        std::vector<int>{3, T, cfg.feature_dim()});
  CHECK(out.valence->value.shape() == std::vector<int>{3, T});
  CHECK(out.arousal->value.shape() == std::vector<int>{3, T});

  auto zero = net.forward(ag::constant(Tensor::zeros({2, T, cfg.input_dim})));
  CHECK(all_finite(zero.valence->value));
  CHECK(all_finite(zero.arousal->value));
  CHECK(all_finite(zero.frame_features->value));

  // swap samples 0 and 2: outputs must follow their samples exactly
  Tensor permuted({3, T, cfg.input_dim});
  const int64_t stride = static_cast<int64_t>(T) * cfg.input_dim;
  std::vector<int> perm = {2, 1, 0};
  for (int b = 0; b < 3; ++b)
    std::copy(batch.data() + perm[b] * stride, batch.data() + (perm[b] + 1) * stride,
              permuted.data() + b * stride);
  // per-sample results may differ by an ULP from gemm row blocking, no more
  auto out_p = net.forward(ag::constant(permuted));
  for (int b = 0; b < 3; ++b)
    for (int t = 0; t < T; ++t)
      CHECK(out_p.valence->value[b * T + t] ==
            doctest::Approx(out.valence->value[perm[b] * T + t]).epsilon(1e-6));

  CHECK_THROWS_AS(net.forward(ag::constant(rand_tensor({2, T, cfg.input_dim + 1}, rng))),
                  ShapeMismatch);
}

TEST_CASE("attention alpha: softmax identities and bounds") {
  // equal scores -> 0.5 exactly
  Var h = ag::constant(Tensor::full({1, 4, 1}, 0.37f));
  Var alpha_eq = attention_alpha(h, h);
  for (int64_t i = 0; i < alpha_eq->value.numel(); ++i)
    CHECK(alpha_eq->value[i] == doctest::Approx(0.5).epsilon(1e-7));

  // h_v = 1, h_a = 0 -> alpha_v = e/(1+e)
  Var one = ag::constant(Tensor::full({1, 1, 1}, 1.0f));
  Var zero = ag::constant(Tensor::zeros({1, 1, 1}));
  Var alpha10 = attention_alpha(one, zero);
  CHECK(alpha10->value[0] == doctest::Approx(0.7310585786300049).epsilon(1e-6));
  CHECK(alpha10->value[1] == doctest::Approx(1.0 - 0.7310585786300049).epsilon(1e-6));

  // rows sum to one; sigmoid-range scores keep alpha within (0.2689, 0.7311)
  std::mt19937_64 rng(13);
  Tensor hv = rand_tensor({2, 50, 1}, rng, 0.0001f, 0.9999f);
  Tensor ha = rand_tensor({2, 50, 1}, rng, 0.0001f, 0.9999f);
  Var alpha = attention_alpha(ag::constant(hv), ag::constant(ha));
  for (int64_t i = 0; i < alpha->value.numel(); i += 2) {
    const double av = alpha->value[i], aa = alpha->value[i + 1];
    CHECK(std::abs(av + aa - 1.0) < 1e-6);
    CHECK(av > 0.2689);
    CHECK(av < 0.7311);
    CHECK(aa > 0.2689);
    CHECK(aa < 0.7311);
  }

  // monotonic: alpha_v strictly increases with h_v for fixed h_a
  double prev = -1;
  for (float s = 0.05f; s < 1.0f; s += 0.05f) {
    Var a = attention_alpha(ag::constant(Tensor::full({1, 1, 1}, s)),
                            ag::constant(Tensor::full({1, 1, 1}, 0.4f)));
    CHECK(a->value[0] > prev);
    prev = a->value[0];
  }
}

TEST_CASE("attention fuse is a per-frame convex combination") {
  std::mt19937_64 rng(17);
  Tensor v = rand_tensor({2, 5, 4}, rng);
  Tensor a = rand_tensor({2, 5, 4}, rng);

  // alpha = (0.5, 0.5) -> elementwise mean
  Tensor half({2, 5, 2});
  half.fill(0.5f);
  Var mean = attention_fuse(ag::constant(v), ag::constant(a), ag::constant(half));
  for (int64_t i = 0; i < v.numel(); ++i)
    CHECK(mean->value[i] == doctest::Approx(0.5f * (v[i] + a[i])).epsilon(1e-6));

  // alpha = (1, 0) -> exactly v
  Tensor hard({2, 5, 2});
  for (int r = 0; r < 10; ++r) {
    hard[r * 2] = 1.0f;
    hard[r * 2 + 1] = 0.0f;
  }
  Var pick = attention_fuse(ag::constant(v), ag::constant(a), ag::constant(hard));
  for (int64_t i = 0; i < v.numel(); ++i) CHECK(pick->value[i] == v[i]);

  // random alphas stay inside [min(v,a), max(v,a)] per coordinate
  Tensor av = rand_tensor({2, 5, 1}, rng, 0.1f, 0.9f);
  Tensor alpha({2, 5, 2});
  for (int r = 0; r < 10; ++r) {
    alpha[r * 2] = av[r];
    alpha[r * 2 + 1] = 1.0f - av[r];
  }
  Var f = attention_fuse(ag::constant(v), ag::constant(a), ag::constant(alpha));
  for (int r = 0; r < 10; ++r)
    for (int d = 0; d < 4; ++d) {
      const float lo = std::min(v[r * 4 + d], a[r * 4 + d]);
      const float hi = std::max(v[r * 4 + d], a[r * 4 + d]);
      CHECK(f->value[r * 4 + d] >= lo - 1e-6f);
      CHECK(f->value[r * 4 + d] <= hi + 1e-6f);
    }
}

TEST_CASE("concat fuse keeps both modalities recoverable") {
  std::mt19937_64 rng(19);
  Tensor v = rand_tensor({2, 3, 5}, rng);
  Tensor a = rand_tensor({2, 3, 4}, rng);
  Var fused = concat_fuse(ag::constant(v), ag::constant(a));
  REQUIRE(fused->value.shape() == std::vector<int>{2, 3, 9});
  Var back_v = ag::slice_last(fused, 0, 5);
  Var back_a = ag::slice_last(fused, 5, 9);
  for (int64_t i = 0; i < v.numel(); ++i) CHECK(back_v->value[i] == v[i]);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(back_a->value[i] == a[i]);
}

TEST_CASE("fusion network end to end in both modes") {
  std::mt19937_64 rng(23);
  ModelConfig mc = tiny_model();
  const int B = 2, T = 6;

  for (auto mode : {FusionMode::kConcat, FusionMode::kAttention}) {
    FusionConfig fc = mc.fusion;
    fc.mode = mode;
    if (mode == FusionMode::kAttention) fc.proj_dim = fc.acoustic_dim;
    FusionNetwork net(fc, rng);
    Var vis = ag::constant(rand_tensor({B, T, fc.visual_dim}, rng));
    Var acu = ag::constant(rand_tensor({B, T, fc.acoustic_dim}, rng));
    auto out = net.forward(vis, acu);
    CHECK(out.valence->value.shape() == std::vector<int>{B, T});
    CHECK(out.arousal->value.shape() == std::vector<int>{B, T});
    CHECK(out.fused->value.shape() == std::vector<int>{B, T, fc.fused_dim()});
    if (mode == FusionMode::kAttention) {
      REQUIRE(out.alpha);
      CHECK(out.alpha->value.shape() == std::vector<int>{B, T, 2});
      for (int64_t i = 0; i < out.alpha->value.numel(); i += 2)
        CHECK(std::abs(out.alpha->value[i] + out.alpha->value[i + 1] - 1.0f) < 1e-6f);
    } else {
      CHECK_FALSE(out.alpha);
    }
    // zero either modality: finite outputs and finite gradients
    for (int side = 0; side < 2; ++side) {
      Var vz = side == 0 ? ag::constant(Tensor::zeros({B, T, fc.visual_dim})) : vis;
      Var az = side == 1 ? ag::constant(Tensor::zeros({B, T, fc.acoustic_dim})) : acu;
      auto o = net.forward(vz, az);
      CHECK(all_finite(o.valence->value));
      CHECK(all_finite(o.arousal->value));
      ag::backward(ag::mean_all(ag::add(o.valence, o.arousal)));
      nn::ParamList params;
      net.collect(params, "f.");
      bool any = false;
      for (auto& [name, var] : params) {
        if (var->grad.empty()) continue;
        any = true;
        CHECK_MESSAGE(all_finite(var->grad), name);
        var->zero_grad();
      }
      CHECK(any);
    }
  }

  // attention mode rejects mismatched projection width
  FusionConfig bad = mc.fusion;
  bad.mode = FusionMode::kAttention;
  bad.proj_dim = bad.acoustic_dim + 1;
  CHECK_THROWS_AS(FusionNetwork(bad, rng), ConfigError);
}

TEST_CASE("fused model wires the pieces together deterministically") {
  std::mt19937_64 rng(29);
  ModelConfig mc = tiny_model();
  FusedModel model(mc, 42);
  const int B = 2, T = 4;
  ag::NoGradGuard ng;
  Var frames = ag::constant(rand_tensor({B, T, 3, 32, 32}, rng));
  Var emo = ag::constant(rand_tensor({B, T, mc.visual.emo_dim}, rng));
  Var au = ag::constant(rand_tensor({B, T, mc.visual.au_dim}, rng));
  Var audio = ag::constant(rand_tensor({B, T, mc.acoustic.input_dim}, rng));

  auto out = model.forward(frames, emo, au, audio);
  CHECK(out.joint.valence->value.shape() == std::vector<int>{B, T});
  CHECK(out.joint.arousal->value.shape() == std::vector<int>{B, T});
  CHECK(out.visual.frame_features->value.size(2) == mc.fusion.visual_dim);
  CHECK(out.acoustic.frame_features->value.size(2) == mc.fusion.acoustic_dim);

  // two forward passes with identical weights and inputs are bit-identical
  auto again = model.forward(frames, emo, au, audio);
  for (int64_t i = 0; i < out.joint.valence->value.numel(); ++i) {
    CHECK(out.joint.valence->value[i] == again.joint.valence->value[i]);
    CHECK(out.joint.arousal->value[i] == again.joint.arousal->value[i]);
  }
}

TEST_CASE("identical seeds give identical models") {
  ModelConfig mc = tiny_model();
  FusedModel a(mc, 7), b(mc, 7), c(mc, 8);
  REQUIRE(a.params().size() == b.params().size());
  bool all_equal = true, any_differs = false;
  for (size_t i = 0; i < a.params().size(); ++i) {
    const Tensor& ta = a.params()[i].second->value;
    const Tensor& tb = b.params()[i].second->value;
    const Tensor& tc = c.params()[i].second->value;
    REQUIRE(ta.same_shape(tb));
    for (int64_t j = 0; j < ta.numel(); ++j) {
      if (ta[j] != tb[j]) all_equal = false;
      if (ta[j] != tc[j]) any_differs = true;
    }
  }
  CHECK(all_equal);
  CHECK(any_differs);
}

TEST_CASE("set_trainable freezes by prefix and stops gradient flow") {
  std::mt19937_64 rng(31);
  ModelConfig mc = tiny_model();
  FusedModel model(mc, 11);
  const int B = 1, T = 4;

  const int frozen =
      set_trainable(model.params(), "visual.", false) +
      set_trainable(model.params(), "acoustic.", false);
  CHECK(frozen > 0);

  auto out = model.forward(
      ag::constant(rand_tensor({B, T, 3, 32, 32}, rng)),
      ag::constant(rand_tensor({B, T, mc.visual.emo_dim}, rng)),
      ag::constant(rand_tensor({B, T, mc.visual.au_dim}, rng)),
      ag::constant(rand_tensor({B, T, mc.acoustic.input_dim}, rng)));
  ag::backward(ag::mean_all(ag::add(out.joint.valence, out.joint.arousal)));

  for (auto& [name, var] : model.params()) {
    if (name.rfind("fusion.", 0) == 0) {
      CHECK_MESSAGE(!var->grad.empty(), name);
    } else {
      CHECK_MESSAGE(var->grad.empty(), name);
    }
  }
  set_trainable(model.params(), "", true);
  for (auto& [name, var] : model.params()) CHECK(var->requires_grad);
}
