#include "m3t/visual.hpp"

namespace m3t {

StaticRouting parse_routing(const std::string& name) {
  if (name == "emo_au") return StaticRouting::kEmoAu;
  if (name == "emo_emo") return StaticRouting::kEmoEmo;
  if (name == "none") return StaticRouting::kNone;
  throw ConfigError("unknown static routing '" + name +
                    "' (expected emo_au, emo_emo or none)");
}

std::string routing_name(StaticRouting r) {
  switch (r) {
    case StaticRouting::kEmoAu: return "emo_au";
    case StaticRouting::kEmoEmo: return "emo_emo";
    case StaticRouting::kNone: return "none";
  }
  return "?";
}

int VisualConfig::valence_gru_input() const {
  return channel_widths.at(4) + (routing == StaticRouting::kNone ? 0 : emo_dim);
}

int VisualConfig::arousal_gru_input() const {
  switch (routing) {
    case StaticRouting::kEmoAu: return channel_widths.at(4) + au_dim;
    case StaticRouting::kEmoEmo: return channel_widths.at(4) + emo_dim;
    case StaticRouting::kNone: return channel_widths.at(4);
  }
  return channel_widths.at(4);
}

std::pair<ag::Var, ag::Var> route_static(const ag::Var& branch_v,
                                         const ag::Var& branch_a,
                                         const ag::Var& emotion_feats,
                                         const ag::Var& au_feats,
                                         StaticRouting routing) {
  switch (routing) {
    case StaticRouting::kEmoAu:
      return {ag::concat_last({branch_v, emotion_feats}),
              ag::concat_last({branch_a, au_feats})};
    case StaticRouting::kEmoEmo:
      return {ag::concat_last({branch_v, emotion_feats}),
              ag::concat_last({branch_a, emotion_feats})};
    case StaticRouting::kNone:
      return {branch_v, branch_a};
  }
  throw ConfigError("invalid routing");
}

VisualNetwork::VisualNetwork(const VisualConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  const auto& w = cfg.channel_widths;
  if (w.size() != 5)
    throw ConfigError("visual channel_widths must list 5 layers");
  if (cfg.input_size % 16 != 0)
    throw ConfigError("visual input_size must be divisible by 16");

  trunk_.emplace_back(3, w[0], rng);
  trunk_.emplace_back(w[0], w[1], rng);
  trunk_.emplace_back(w[1], w[2], rng);
  for (auto* branch : {&val_conv_, &aro_conv_}) {
    branch->emplace_back(w[2], w[3], rng);
    branch->emplace_back(w[3], w[4], rng);
  }
  val_gru_ = nn::GRU(cfg.valence_gru_input(), cfg.gru_hidden, cfg.gru_layers,
                     /*bidirectional=*/true, rng);
  aro_gru_ = nn::GRU(cfg.arousal_gru_input(), cfg.gru_hidden, cfg.gru_layers,
                     true, rng);
  const int enc = 2 * cfg.gru_hidden;  // one branch's recurrent output width
  val_fc1_ = nn::Linear(enc, cfg.head_hidden, rng);
  val_fc2_ = nn::Linear(cfg.head_hidden, 1, rng);
  aro_fc1_ = nn::Linear(enc, cfg.head_hidden, rng);
  aro_fc2_ = nn::Linear(cfg.head_hidden, 1, rng);
  if (cfg.emotion_head_branch != "valence" && cfg.emotion_head_branch != "arousal")
    throw ConfigError("emotion_head_branch must be 'valence' or 'arousal'");
  emotion_fc_ = nn::Linear(enc, cfg.emotion_classes, rng);
}

VisualNetwork::Output VisualNetwork::forward(const ag::Var& frames,
                                             const ag::Var& emotion_feats,
                                             const ag::Var& au_feats) const {
  if (frames->value.ndim() != 5 || frames->value.size(2) != 3 ||
      frames->value.size(3) != cfg_.input_size ||
      frames->value.size(4) != cfg_.input_size)
    throw ShapeMismatch("visual input must be [B,T,3," +
                        std::to_string(cfg_.input_size) + "," +
                        std::to_string(cfg_.input_size) + "], got " +
                        frames->value.shape_str());
  const int B = frames->value.size(0), T = frames->value.size(1);
  auto expect_static = [&](const ag::Var& f, int dim, const char* what) {
    if (f->value.shape() != std::vector<int>{B, T, dim})
      throw ShapeMismatch(std::string(what) + " features must be [B,T," +
                          std::to_string(dim) + "], got " + f->value.shape_str());
  };
  if (cfg_.routing != StaticRouting::kNone) {
    expect_static(emotion_feats, cfg_.emo_dim, "emotion");
    if (cfg_.routing == StaticRouting::kEmoAu)
      expect_static(au_feats, cfg_.au_dim, "AU");
  }

  // shared trunk: conv-relu-pool x3
  ag::Var x = frames;
  for (const auto& conv : trunk_) x = ag::maxpool2d(ag::relu(conv(x)));

  // per-branch: conv-relu-pool, conv-relu, global spatial average
  auto run_branch = [](const std::vector<nn::Conv3d>& layers, const ag::Var& in) {
    ag::Var y = ag::maxpool2d(ag::relu(layers[0](in)));
    y = ag::relu(layers[1](y));
    return ag::spatial_avg(y);  // [B,T,C]
  };
  ag::Var v3d = run_branch(val_conv_, x);
  ag::Var a3d = run_branch(aro_conv_, x);

  auto [v_in, a_in] = route_static(v3d, a3d, emotion_feats, au_feats, cfg_.routing);
  ag::Var v_enc = val_gru_(v_in);  // [B,T,2*hidden]
  ag::Var a_enc = aro_gru_(a_in);

  Output out;
  out.frame_features = ag::concat_last({v_enc, a_enc});
  out.valence = ag::reshape(val_fc2_(ag::relu(val_fc1_(v_enc))), {B, T});
  out.arousal = ag::reshape(aro_fc2_(ag::relu(aro_fc1_(a_enc))), {B, T});
  out.emotion_logits =
      emotion_fc_(cfg_.emotion_head_branch == "valence" ? v_enc : a_enc);
  return out;
}

void VisualNetwork::collect(nn::ParamList& out, const std::string& prefix) const {
  for (size_t i = 0; i < trunk_.size(); ++i)
    trunk_[i].collect(out, prefix + kTrunkPrefix + "conv" + std::to_string(i));
  for (size_t i = 0; i < val_conv_.size(); ++i)
    val_conv_[i].collect(out, prefix + kValencePrefix + "conv" + std::to_string(i + 3));
  for (size_t i = 0; i < aro_conv_.size(); ++i)
    aro_conv_[i].collect(out, prefix + kArousalPrefix + "conv" + std::to_string(i + 3));
  val_gru_.collect(out, prefix + kValencePrefix + "gru");
  aro_gru_.collect(out, prefix + kArousalPrefix + "gru");
  val_fc1_.collect(out, prefix + kValencePrefix + "head.fc1");
  val_fc2_.collect(out, prefix + kValencePrefix + "head.fc2");
  aro_fc1_.collect(out, prefix + kArousalPrefix + "head.fc1");
  aro_fc2_.collect(out, prefix + kArousalPrefix + "head.fc2");
  emotion_fc_.collect(out, prefix + kEmotionPrefix + "head");
}

}  // namespace m3t
