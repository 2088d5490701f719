#include "m3t/acoustic.hpp"

namespace m3t {

AcousticNetwork::AcousticNetwork(const AcousticConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  const int d = cfg.feature_dim();
  gru_ = nn::GRU(cfg.input_dim, cfg.gru_hidden, cfg.gru_layers,
                 /*bidirectional=*/true, rng);
  mlp1_ = nn::Linear(d, d, rng);
  mlp2_ = nn::Linear(d, d, rng);
  val_fc_ = nn::Linear(d, 1, rng);
  aro_fc_ = nn::Linear(d, 1, rng);
}

AcousticNetwork::Output AcousticNetwork::forward(const ag::Var& features) const {
  if (features->value.ndim() != 3 || features->value.size(2) != cfg_.input_dim)
    throw ShapeMismatch("acoustic input must be [B,T," +
                        std::to_string(cfg_.input_dim) + "], got " +
                        features->value.shape_str());
  const int B = features->value.size(0), T = features->value.size(1);

  Output out;
  out.frame_features = gru_(features);  // [B,T,2*hidden]
  ag::Var h = ag::relu(mlp2_(ag::relu(mlp1_(out.frame_features))));
  out.valence = ag::reshape(val_fc_(h), {B, T});
  out.arousal = ag::reshape(aro_fc_(h), {B, T});
  return out;
}

void AcousticNetwork::collect(nn::ParamList& out, const std::string& prefix) const {
  gru_.collect(out, prefix + "gru");
  mlp1_.collect(out, prefix + "mlp.fc1");
  mlp2_.collect(out, prefix + "mlp.fc2");
  val_fc_.collect(out, prefix + "head.valence");
  aro_fc_.collect(out, prefix + "head.arousal");
}

}  // namespace m3t
