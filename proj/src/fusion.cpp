#include "m3t/fusion.hpp"

namespace m3t {

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "concat") return FusionMode::kConcat;
  if (name == "attention") return FusionMode::kAttention;
  throw ConfigError("unknown fusion mode '" + name +
                    "' (expected concat or attention)");
}

std::string fusion_mode_name(FusionMode m) {
  return m == FusionMode::kConcat ? "concat" : "attention";
}

ag::Var attention_alpha(const ag::Var& h_v, const ag::Var& h_a) {
  if (!h_v->value.same_shape(h_a->value) || h_v->value.size(-1) != 1)
    throw ShapeMismatch("attention scores must both be [B,T,1]");
  // a softmax over two entries reduces to a sigmoid of the difference
  ag::Var a_v = ag::sigmoid(ag::sub(h_v, h_a));
  ag::Var a_a = ag::affine(a_v, -1.0f, 1.0f);
  return ag::concat_last({a_v, a_a});
}

ag::Var attention_fuse(const ag::Var& v, const ag::Var& a, const ag::Var& alpha) {
  if (!v->value.same_shape(a->value))
    throw ShapeMismatch("attention_fuse needs equal modality dims: " +
                        v->value.shape_str() + " vs " + a->value.shape_str());
  if (alpha->value.ndim() != 3 || alpha->value.size(2) != 2)
    throw ShapeMismatch("alpha must be [B,T,2]");
  return ag::add(ag::scale_rows(v, ag::slice_last(alpha, 0, 1)),
                 ag::scale_rows(a, ag::slice_last(alpha, 1, 2)));
}

ag::Var concat_fuse(const ag::Var& v, const ag::Var& a) {
  return ag::concat_last({v, a});
}

FusionNetwork::FusionNetwork(const FusionConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.mode == FusionMode::kAttention && cfg.proj_dim != cfg.acoustic_dim)
    throw ConfigError("attention fusion requires projected visual width == "
                      "acoustic width");
  proj_ = nn::Linear(cfg.visual_dim, cfg.proj_dim, rng);
  if (cfg.mode == FusionMode::kAttention) {
    scorer_v_gru_ = nn::GRU(cfg.proj_dim, cfg.scorer_hidden, 1, true, rng);
    scorer_v_fc_ = nn::Linear(2 * cfg.scorer_hidden, 1, rng);
    scorer_a_gru_ = nn::GRU(cfg.acoustic_dim, cfg.scorer_hidden, 1, true, rng);
    scorer_a_fc_ = nn::Linear(2 * cfg.scorer_hidden, 1, rng);
  }
  joint_gru_ = nn::GRU(cfg.fused_dim(), cfg.joint_hidden, 2, true, rng);
  joint_fc1_ = nn::Linear(2 * cfg.joint_hidden, cfg.joint_fc_hidden, rng);
  joint_fc2_ = nn::Linear(cfg.joint_fc_hidden, 2, rng);
}

ag::Var FusionNetwork::project_visual(const ag::Var& v) const {
  if (v->value.ndim() != 3 || v->value.size(2) != cfg_.visual_dim)
    throw ShapeMismatch("visual features must be [B,T," +
                        std::to_string(cfg_.visual_dim) + "], got " +
                        v->value.shape_str());
  return proj_(v);
}

ag::Var FusionNetwork::score(const nn::GRU& gru, const nn::Linear& fc,
                             const ag::Var& x) const {
  return ag::sigmoid(fc(gru(x)));  // [B,T,1], values in (0,1)
}

FusionNetwork::Output FusionNetwork::forward(const ag::Var& visual_feats,
                                             const ag::Var& acoustic_feats) const {
  if (acoustic_feats->value.ndim() != 3 ||
      acoustic_feats->value.size(2) != cfg_.acoustic_dim)
    throw ShapeMismatch("acoustic features must be [B,T," +
                        std::to_string(cfg_.acoustic_dim) + "], got " +
                        acoustic_feats->value.shape_str());
  ag::Var v = project_visual(visual_feats);
  if (v->value.size(0) != acoustic_feats->value.size(0) ||
      v->value.size(1) != acoustic_feats->value.size(1))
    throw ShapeMismatch("modalities disagree on [B,T]: " +
                        v->value.shape_str() + " vs " +
                        acoustic_feats->value.shape_str());

  Output out;
  if (cfg_.mode == FusionMode::kConcat) {
    out.fused = concat_fuse(v, acoustic_feats);
  } else {
    out.alpha = attention_alpha(score(scorer_v_gru_, scorer_v_fc_, v),
                                score(scorer_a_gru_, scorer_a_fc_, acoustic_feats));
    out.fused = attention_fuse(v, acoustic_feats, out.alpha);
  }
  const int B = out.fused->value.size(0), T = out.fused->value.size(1);
  ag::Var scores = joint_fc2_(ag::relu(joint_fc1_(joint_gru_(out.fused))));
  out.valence = ag::reshape(ag::slice_last(scores, 0, 1), {B, T});
  out.arousal = ag::reshape(ag::slice_last(scores, 1, 2), {B, T});
  return out;
}

void FusionNetwork::collect(nn::ParamList& out, const std::string& prefix) const {
  proj_.collect(out, prefix + "projection");
  if (cfg_.mode == FusionMode::kAttention) {
    scorer_v_gru_.collect(out, prefix + "scorer.visual.gru");
    scorer_v_fc_.collect(out, prefix + "scorer.visual.fc");
    scorer_a_gru_.collect(out, prefix + "scorer.acoustic.gru");
    scorer_a_fc_.collect(out, prefix + "scorer.acoustic.fc");
  }
  joint_gru_.collect(out, prefix + "joint.gru");
  joint_fc1_.collect(out, prefix + "joint.fc1");
  joint_fc2_.collect(out, prefix + "joint.fc2");
}

}  // namespace m3t
