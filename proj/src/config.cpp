#include "m3t/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "m3t/errors.hpp"

namespace m3t {

namespace {

// Wraps one mapping section so unknown keys are rejected after extraction.
class Section {
 public:
  Section(const YAML::Node& node, std::string name)
      : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsMap())
      throw ConfigError("config section '" + name_ + "' must be a mapping");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_[key]) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("bad value for '" + name_ + "." + key + "'");
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key))
        throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string name_;
  std::set<std::string> seen_;
};

void apply_override(YAML::Node& root, const std::string& kv) {
  const size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + kv + "' is not of the form section.key=value");
  const std::string path = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);

  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override path '" + path + "' has an empty segment");
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("override '" + kv + "' has an empty path");

  YAML::Node cur;
  cur.reset(root);
  for (size_t i = 0; i + 1 < parts.size(); ++i) cur.reset(cur[parts[i]]);
  try {
    cur[parts.back()] = YAML::Load(value);
  } catch (const YAML::Exception&) {
    throw ConfigError("cannot parse override value '" + value + "'");
  }
}

RunConfig map_config(const YAML::Node& root) {
  if (root && !root.IsMap() && !root.IsNull())
    throw ConfigError("config root must be a mapping");
  static const std::set<std::string> kSections = {"model", "fusion", "data",
                                                  "training"};
  if (root && root.IsMap()) {
    for (const auto& kv : root) {
      const std::string key = kv.first.as<std::string>();
      if (!kSections.count(key))
        throw ConfigError("unknown config section '" + key + "'");
    }
  }

  RunConfig cfg;

  Section model(root["model"], "model");
  std::string routing = routing_name(cfg.model.visual.routing);
  model.get("input_size", cfg.model.visual.input_size);
  model.get("channel_widths", cfg.model.visual.channel_widths);
  model.get("visual_gru_hidden", cfg.model.visual.gru_hidden);
  model.get("visual_gru_layers", cfg.model.visual.gru_layers);
  model.get("head_hidden", cfg.model.visual.head_hidden);
  model.get("routing", routing);
  model.get("emotion_head_branch", cfg.model.visual.emotion_head_branch);
  model.get("acoustic_gru_hidden", cfg.model.acoustic.gru_hidden);
  model.get("acoustic_gru_layers", cfg.model.acoustic.gru_layers);
  model.finish();
  cfg.model.visual.routing = parse_routing(routing);

  Section fusion(root["fusion"], "fusion");
  std::string mode = fusion_mode_name(cfg.model.fusion.mode);
  fusion.get("mode", mode);
  fusion.get("proj_dim", cfg.model.fusion.proj_dim);
  fusion.get("scorer_hidden", cfg.model.fusion.scorer_hidden);
  fusion.get("joint_hidden", cfg.model.fusion.joint_hidden);
  fusion.get("joint_fc_hidden", cfg.model.fusion.joint_fc_hidden);
  fusion.finish();
  cfg.model.fusion.mode = parse_fusion_mode(mode);

  Section data(root["data"], "data");
  data.get("root", cfg.data.root);
  data.get("eval_root", cfg.data.eval_root);
  data.get("window_length", cfg.data.window_length);
  data.get("windows_per_video", cfg.data.windows_per_video);
  data.get("source_size", cfg.data.source_size);
  data.get("audio_dim", cfg.data.audio_dim);
  data.get("emotion_dim", cfg.data.emotion_dim);
  data.get("au_dim", cfg.data.au_dim);
  data.get("audio_min_fps", cfg.data.audio_min_fps);
  data.get("smooth_threshold", cfg.data.smooth_threshold);
  data.get("smooth_sigma", cfg.data.smooth_sigma);
  data.finish();

  Section training(root["training"], "training");
  training.get("batch_size", cfg.training.batch_size);
  training.get("weight_decay", cfg.training.weight_decay);
  training.get("lambda_emot", cfg.training.loss_weights.lambda_emot);
  training.get("base_lr", cfg.training.base_lr);
  training.get("max_lr", cfg.training.max_lr);
  training.get("lr_epochs_up", cfg.training.lr_epochs_up);
  training.get("finetune_lr", cfg.training.finetune_lr);
  training.get("plateau_factor", cfg.training.plateau_factor);
  training.get("plateau_patience", cfg.training.plateau_patience);
  training.get("epochs", cfg.training.epochs);
  training.get("per_window_ccc", cfg.training.per_window_ccc);
  training.get("seed", cfg.training.seed);
  training.finish();

  cfg.finalize();
  return cfg;
}

}  // namespace

void RunConfig::finalize() {
  // the data section owns the feature widths; the model consumes them
  model.visual.emo_dim = data.emotion_dim;
  model.visual.au_dim = data.au_dim;
  model.acoustic.input_dim = data.audio_dim;
  data.crop_size = model.visual.input_size;
  model.sync_dims();

  if (model.visual.channel_widths.size() != 5)
    throw ConfigError("model.channel_widths needs exactly 5 entries");
  if (model.visual.input_size <= 0 || model.visual.input_size % 16 != 0)
    throw ConfigError("model.input_size must be a positive multiple of 16");
  if (data.source_size < model.visual.input_size)
    throw ConfigError("data.source_size smaller than the model input size");
  if (model.visual.emotion_head_branch != "valence" &&
      model.visual.emotion_head_branch != "arousal")
    throw ConfigError("model.emotion_head_branch must be valence or arousal");
  if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (training.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (training.lr_epochs_up < 1)
    throw ConfigError("training.lr_epochs_up must be >= 1");
  if (!(training.base_lr < training.max_lr))
    throw ConfigError("training.base_lr must be below training.max_lr");
  if (data.window_length < 1 || data.windows_per_video < 1)
    throw ConfigError("data window settings must be >= 1");
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.finalize();
  return cfg;
}

RunConfig parse_config(const std::string& yaml_text,
                       const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const auto& kv : overrides) apply_override(root, kv);
  return map_config(root);
}

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::string dump_config(const RunConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "input_size" << YAML::Value << cfg.model.visual.input_size;
  out << YAML::Key << "channel_widths" << YAML::Value << YAML::Flow
      << cfg.model.visual.channel_widths;
  out << YAML::Key << "visual_gru_hidden" << YAML::Value
      << cfg.model.visual.gru_hidden;
  out << YAML::Key << "visual_gru_layers" << YAML::Value
      << cfg.model.visual.gru_layers;
  out << YAML::Key << "head_hidden" << YAML::Value << cfg.model.visual.head_hidden;
  out << YAML::Key << "routing" << YAML::Value
      << routing_name(cfg.model.visual.routing);
  out << YAML::Key << "emotion_head_branch" << YAML::Value
      << cfg.model.visual.emotion_head_branch;
  out << YAML::Key << "acoustic_gru_hidden" << YAML::Value
      << cfg.model.acoustic.gru_hidden;
  out << YAML::Key << "acoustic_gru_layers" << YAML::Value
      << cfg.model.acoustic.gru_layers;
  out << YAML::EndMap;

  out << YAML::Key << "fusion" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value
      << fusion_mode_name(cfg.model.fusion.mode);
  out << YAML::Key << "proj_dim" << YAML::Value << cfg.model.fusion.proj_dim;
  out << YAML::Key << "scorer_hidden" << YAML::Value
      << cfg.model.fusion.scorer_hidden;
  out << YAML::Key << "joint_hidden" << YAML::Value << cfg.model.fusion.joint_hidden;
  out << YAML::Key << "joint_fc_hidden" << YAML::Value
      << cfg.model.fusion.joint_fc_hidden;
  out << YAML::EndMap;

  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "root" << YAML::Value << cfg.data.root;
  out << YAML::Key << "eval_root" << YAML::Value << cfg.data.eval_root;
  out << YAML::Key << "window_length" << YAML::Value << cfg.data.window_length;
  out << YAML::Key << "windows_per_video" << YAML::Value
      << cfg.data.windows_per_video;
  out << YAML::Key << "source_size" << YAML::Value << cfg.data.source_size;
  out << YAML::Key << "audio_dim" << YAML::Value << cfg.data.audio_dim;
  out << YAML::Key << "emotion_dim" << YAML::Value << cfg.data.emotion_dim;
  out << YAML::Key << "au_dim" << YAML::Value << cfg.data.au_dim;
  out << YAML::Key << "audio_min_fps" << YAML::Value << cfg.data.audio_min_fps;
  out << YAML::Key << "smooth_threshold" << YAML::Value
      << cfg.data.smooth_threshold;
  out << YAML::Key << "smooth_sigma" << YAML::Value << cfg.data.smooth_sigma;
  out << YAML::EndMap;

  out << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "batch_size" << YAML::Value << cfg.training.batch_size;
  out << YAML::Key << "weight_decay" << YAML::Value << cfg.training.weight_decay;
  out << YAML::Key << "lambda_emot" << YAML::Value
      << cfg.training.loss_weights.lambda_emot;
  out << YAML::Key << "base_lr" << YAML::Value << cfg.training.base_lr;
  out << YAML::Key << "max_lr" << YAML::Value << cfg.training.max_lr;
  out << YAML::Key << "lr_epochs_up" << YAML::Value << cfg.training.lr_epochs_up;
  out << YAML::Key << "finetune_lr" << YAML::Value << cfg.training.finetune_lr;
  out << YAML::Key << "plateau_factor" << YAML::Value
      << cfg.training.plateau_factor;
  out << YAML::Key << "plateau_patience" << YAML::Value
      << cfg.training.plateau_patience;
  out << YAML::Key << "epochs" << YAML::Value << cfg.training.epochs;
  out << YAML::Key << "per_window_ccc" << YAML::Value
      << cfg.training.per_window_ccc;
  out << YAML::Key << "seed" << YAML::Value << cfg.training.seed;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
  // The epoch budget is the one knob that may legitimately differ between a
  // checkpoint and a resume extending it, so it stays out of the hash.
  RunConfig keyed = cfg;
  keyed.training.epochs = 0;
  const std::string text = dump_config(keyed);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace m3t
