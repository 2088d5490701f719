#include "m3t/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "m3t/errors.hpp"

namespace m3t {

namespace {
using nlohmann::json;
using nlohmann::ordered_json;

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}
}  // namespace

void save_checkpoint(const fs::path& dir, CheckpointManifest manifest,
                     const nn::ParamList& params, const Adam* optim) {
  fs::create_directories(dir);

  manifest.tensors.clear();
  {
    std::ofstream weights(dir / "weights.bin", std::ios::binary);
    if (!weights) throw IoError("cannot write " + (dir / "weights.bin").string());
    for (const auto& [name, var] : params) {
      manifest.tensors.emplace_back(name, var->value.shape());
      weights.write(reinterpret_cast<const char*>(var->value.data()),
                    static_cast<std::streamsize>(var->value.numel() * 4));
    }
  }
  manifest.has_optim = optim != nullptr;
  if (optim) {
    std::ofstream state(dir / "optim.bin", std::ios::binary);
    if (!state) throw IoError("cannot write " + (dir / "optim.bin").string());
    optim->save_state(state);
  }

  ordered_json j;
  j["stage"] = manifest.stage;
  j["iteration"] = manifest.iteration;
  j["epoch"] = manifest.epoch;
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash;
  j["skipped_batches"] = manifest.skipped_batches;
  j["has_optim"] = manifest.has_optim;
  // JSON has no -inf; an absent "best" stands for "no evaluation yet".
  j["plateau"] = {{"lr", manifest.plateau_lr}, {"bad", manifest.plateau_bad}};
  if (std::isfinite(manifest.plateau_best))
    j["plateau"]["best"] = manifest.plateau_best;
  ordered_json tensors = ordered_json::array();
  for (const auto& [name, shape] : manifest.tensors)
    tensors.push_back({{"name", name}, {"shape", shape}});
  j["tensors"] = std::move(tensors);

  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << "\n";
}

bool checkpoint_exists(const fs::path& dir) {
  return fs::exists(dir / "manifest.json") && fs::exists(dir / "weights.bin");
}

CheckpointManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw MissingCheckpoint("no checkpoint at " + dir.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded())
    throw IncompatibleCheckpoint("unparseable manifest at " + dir.string());

  CheckpointManifest m;
  m.stage = j.value("stage", "");
  m.iteration = j.value("iteration", int64_t{0});
  m.epoch = j.value("epoch", 0);
  m.seed = j.value("seed", uint64_t{0});
  m.config_hash = j.value("config_hash", "");
  m.skipped_batches = j.value("skipped_batches", 0);
  m.has_optim = j.value("has_optim", false);
  if (j.contains("plateau")) {
    m.plateau_lr = j["plateau"].value("lr", 0.0);
    m.plateau_best = j["plateau"].value(
        "best", -std::numeric_limits<double>::infinity());
    m.plateau_bad = j["plateau"].value("bad", 0);
  }
  for (const auto& t : j.value("tensors", json::array()))
    m.tensors.emplace_back(t.at("name").get<std::string>(),
                           t.at("shape").get<std::vector<int>>());
  return m;
}

LoadReport load_weights(const fs::path& dir, const nn::ParamList& params,
                        const std::string& prefix, bool strict) {
  const CheckpointManifest manifest = read_manifest(dir);

  struct Slot {
    int64_t offset;
    std::vector<int> shape;
  };
  std::map<std::string, Slot> slots;
  int64_t offset = 0;
  for (const auto& [name, shape] : manifest.tensors) {
    int64_t numel = 1;
    for (int d : shape) numel *= d;
    slots[name] = {offset, shape};
    offset += numel;
  }

  LoadReport report;
  std::vector<std::pair<ag::Var, Slot>> to_load;
  std::map<std::string, bool> requested;
  for (const auto& [name, var] : params) {
    if (!starts_with(name, prefix)) continue;
    requested[name] = true;
    auto it = slots.find(name);
    if (it == slots.end()) {
      report.missing.push_back(name);
    } else if (it->second.shape != var->value.shape()) {
      report.mismatched.push_back(name);
    } else {
      to_load.emplace_back(var, it->second);
    }
  }
  for (const auto& [name, slot] : slots)
    if (starts_with(name, prefix) && !requested.count(name))
      report.extra.push_back(name);

  if (strict && (!report.missing.empty() || !report.mismatched.empty())) {
    std::ostringstream msg;
    msg << "checkpoint " << dir.string() << " incompatible:";
    for (const auto& n : report.missing) msg << " missing:" << n;
    for (const auto& n : report.mismatched) msg << " shape:" << n;
    throw IncompatibleCheckpoint(msg.str());
  }

  std::ifstream weights(dir / "weights.bin", std::ios::binary);
  if (!weights) throw MissingCheckpoint("no weights.bin at " + dir.string());
  for (auto& [var, slot] : to_load) {
    weights.seekg(slot.offset * 4);
    weights.read(reinterpret_cast<char*>(var->value.data()),
                 static_cast<std::streamsize>(var->value.numel() * 4));
    if (!weights)
      throw IncompatibleCheckpoint("weights.bin truncated at " + dir.string());
    ++report.loaded;
  }
  return report;
}

void load_optimizer(const fs::path& dir, Adam& optim) {
  std::ifstream in(dir / "optim.bin", std::ios::binary);
  if (!in) throw MissingCheckpoint("no optimizer state at " + dir.string());
  optim.load_state(in);
}

}  // namespace m3t
