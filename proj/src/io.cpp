#include "m3t/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "m3t/errors.hpp"

namespace m3t::io {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = {}) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = {}) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// PPM (P6, maxval 255)
// ---------------------------------------------------------------------------

Image read_ppm(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::string magic;
  int w, h, maxval;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw IoError("unsupported PPM " + path.string());
  in.get();  // single whitespace after header
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
    throw IoError("truncated PPM " + path.string());
  return img;
}

void write_ppm(const fs::path& path, const Image& img) {
  auto out = open_out(path, std::ios::binary);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
}

// ---------------------------------------------------------------------------
// WAV (16-bit PCM mono)
// ---------------------------------------------------------------------------

namespace {
void put_u32(std::ofstream& out, uint32_t v) {
  char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
  out.write(b, 4);
}
void put_u16(std::ofstream& out, uint16_t v) {
  char b[2] = {char(v), char(v >> 8)};
  out.write(b, 2);
}
uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}
uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }
}  // namespace

Waveform read_wav(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path.string());

  Waveform wav;
  size_t pos = 12;
  bool got_fmt = false;
  while (pos + 8 <= raw.size()) {
    const std::string id(reinterpret_cast<const char*>(raw.data() + pos), 4);
    const uint32_t size = get_u32(raw.data() + pos + 4);
    const size_t body = pos + 8;
    if (id == "fmt ") {
      if (body + 16 > raw.size()) throw IoError("bad fmt chunk");
      const uint16_t format = get_u16(raw.data() + body);
      const uint16_t channels = get_u16(raw.data() + body + 2);
      wav.sample_rate = static_cast<int>(get_u32(raw.data() + body + 4));
      const uint16_t bits = get_u16(raw.data() + body + 14);
      if (format != 1 || channels != 1 || bits != 16)
        throw IoError("expected 16-bit mono PCM: " + path.string());
      got_fmt = true;
    } else if (id == "data") {
      const size_t n = std::min<size_t>(size, raw.size() - body) / 2;
      wav.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(get_u16(raw.data() + body + 2 * i));
        wav.samples[i] = static_cast<float>(s) / 32768.0f;
      }
    }
    pos = body + size + (size & 1);
  }
  if (!got_fmt) throw IoError("missing fmt chunk: " + path.string());
  return wav;
}

void write_wav(const fs::path& path, const Waveform& wav) {
  auto out = open_out(path, std::ios::binary);
  const uint32_t data_bytes = static_cast<uint32_t>(wav.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(wav.sample_rate));
  put_u32(out, static_cast<uint32_t>(wav.sample_rate * 2));  // byte rate
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (float s : wav.samples) {
    const long q = std::clamp(std::lrint(s * 32768.0f), -32768l, 32767l);
    put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
}

// ---------------------------------------------------------------------------
// annotations CSV
// ---------------------------------------------------------------------------

AnnotationTrack read_annotations(const fs::path& path, int frame_count) {
  auto in = open_in(path);
  AnnotationTrack track;
  track.valence.assign(frame_count, 0.0f);
  track.arousal.assign(frame_count, 0.0f);
  track.emotion.assign(frame_count, -1);
  track.va_valid.assign(frame_count, 0);

  std::string line;
  if (!std::getline(in, line) || line.rfind("frame,valence,arousal,emotion", 0) != 0)
    throw IoError("bad annotation header in " + path.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    int frame;
    double v, a, e;
    try {
      std::getline(ss, cell, ',');
      frame = std::stoi(cell);
      std::getline(ss, cell, ',');
      v = std::stod(cell);
      std::getline(ss, cell, ',');
      a = std::stod(cell);
      std::getline(ss, cell, ',');
      e = std::stod(cell);
    } catch (const std::exception&) {
      throw IoError("bad annotation row '" + line + "' in " + path.string());
    }
    if (frame < 0 || frame >= frame_count) continue;
    const bool valid = v != kAnnotationAbsent && a != kAnnotationAbsent &&
                       v >= -1.0 && v <= 1.0 && a >= -1.0 && a <= 1.0;
    if (valid) {
      track.valence[frame] = static_cast<float>(v);
      track.arousal[frame] = static_cast<float>(a);
      track.va_valid[frame] = 1;
    }
    if (e != kAnnotationAbsent && e >= 0 && e <= 6)
      track.emotion[frame] = static_cast<int>(e);
  }
  return track;
}

void write_annotations(const fs::path& path, const AnnotationTrack& track) {
  auto out = open_out(path);
  out << "frame,valence,arousal,emotion\n";
  char buf[96];
  for (size_t i = 0; i < track.size(); ++i) {
    const double v = track.va_valid[i] ? track.valence[i] : kAnnotationAbsent;
    const double a = track.va_valid[i] ? track.arousal[i] : kAnnotationAbsent;
    const double e = track.emotion[i] >= 0 ? track.emotion[i] : kAnnotationAbsent;
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%d\n", i, v, a,
                  static_cast<int>(e));
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// float32 arrays + feature stores
// ---------------------------------------------------------------------------

void write_f32(const fs::path& path, const float* data, int64_t count) {
  static_assert(std::endian::native == std::endian::little,
                "feature files are little-endian");
  auto out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * 4));
}

std::vector<float> read_f32(const fs::path& path, int64_t expect_count) {
  auto in = open_in(path, std::ios::binary);
  std::vector<float> data(static_cast<size_t>(expect_count));
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(expect_count * 4));
  if (in.gcount() != static_cast<std::streamsize>(expect_count * 4))
    throw IoError("short read from " + path.string());
  return data;
}

FeatureStore::FeatureStore(fs::path index_json, std::string stream)
    : index_path_(std::move(index_json)), stream_(std::move(stream)) {}

FeatureStore FeatureStore::open(const fs::path& index_json,
                                const std::string& stream) {
  FeatureStore store(index_json, stream);
  auto in = open_in(index_json);
  json root = json::parse(in);
  if (!root.contains(stream)) return store;  // stream absent => empty store
  for (auto& [id, e] : root.at(stream).items()) {
    FeatureEntry entry;
    entry.path = e.at("path").get<std::string>();
    entry.frame_count = e.at("frame_count").get<int>();
    entry.dim = e.at("dim").get<int>();
    entry.zero_filled = e.value("zero_filled", false);
    store.entries_[id] = std::move(entry);
  }
  return store;
}

void FeatureStore::put(const std::string& id, const Tensor& rows, bool zero_filled) {
  if (rows.ndim() != 2) throw ShapeMismatch("feature rows must be [N,dim]");
  FeatureEntry entry;
  entry.path = stream_ + "/" + id + ".bin";
  entry.frame_count = rows.size(0);
  entry.dim = rows.size(1);
  entry.zero_filled = zero_filled;
  write_f32(index_path_.parent_path() / entry.path, rows.data(), rows.numel());
  entries_[id] = std::move(entry);
}

void FeatureStore::save() const {
  ordered_json root;
  {
    std::ifstream in(index_path_);
    if (in) root = ordered_json::parse(in);  // merge with other streams
  }
  ordered_json section;
  for (const auto& [id, e] : entries_) {
    ordered_json je{{"path", e.path}, {"frame_count", e.frame_count}, {"dim", e.dim}};
    if (e.zero_filled) je["zero_filled"] = true;
    section[id] = std::move(je);
  }
  root[stream_] = std::move(section);
  auto out = open_out(index_path_);
  out << root.dump(2) << "\n";
}

const FeatureEntry& FeatureStore::entry(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw IoError("no features for video " + id);
  return it->second;
}

int FeatureStore::dim() const {
  return entries_.empty() ? 0 : entries_.begin()->second.dim;
}

Tensor FeatureStore::load_rows(const std::string& id, int start, int count) const {
  const FeatureEntry& e = entry(id);
  Tensor out({count, e.dim});
  const int lo = std::max(start, 0);
  const int hi = std::min(start + count, e.frame_count);
  if (lo >= hi) return out;  // fully outside: zeros
  auto all = read_f32(index_path_.parent_path() / e.path,
                      static_cast<int64_t>(e.frame_count) * e.dim);
  std::copy(all.begin() + static_cast<int64_t>(lo) * e.dim,
            all.begin() + static_cast<int64_t>(hi) * e.dim,
            out.data() + static_cast<int64_t>(lo - start) * e.dim);
  return out;
}

// ---------------------------------------------------------------------------
// corpus index
// ---------------------------------------------------------------------------

CorpusIndex CorpusIndex::load(const fs::path& root_dir) {
  CorpusIndex idx;
  idx.root = root_dir;
  auto in = open_in(root_dir / "videos.json");
  json root = json::parse(in);
  for (const auto& v : root.at("videos")) {
    VideoMetadata meta;
    meta.id = v.at("id").get<std::string>();
    meta.fps = v.at("fps").get<double>();
    meta.frame_count = v.at("frame_count").get<int>();
    meta.sample_rate = v.value("sample_rate", 16000);
    if (meta.fps <= 0 || meta.frame_count < 1)
      throw IoError("bad metadata for video " + meta.id);
    idx.videos.push_back(std::move(meta));
  }
  std::sort(idx.videos.begin(), idx.videos.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return idx;
}

void CorpusIndex::save() const {
  ordered_json list = ordered_json::array();
  for (const auto& v : videos)
    list.push_back({{"id", v.id},
                    {"fps", v.fps},
                    {"frame_count", v.frame_count},
                    {"sample_rate", v.sample_rate}});
  auto out = open_out(root / "videos.json");
  out << ordered_json{{"videos", list}}.dump(2) << "\n";
}

const VideoMetadata* CorpusIndex::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return &v;
  return nullptr;
}

fs::path frame_path(const CorpusIndex& corpus, const std::string& id, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d.ppm", index);
  return corpus.frames_dir(id) / name;
}

Tensor load_frame_window(const CorpusIndex& corpus, const VideoMetadata& video,
                         int start, int count, int expect_size) {
  Tensor out({count, 3, expect_size, expect_size});
  const int64_t plane = static_cast<int64_t>(expect_size) * expect_size;
  for (int i = 0; i < count; ++i) {
    const int frame = start + i;
    if (frame < 0 || frame >= video.frame_count) continue;  // masked zero fill
    Image img = read_ppm(frame_path(corpus, video.id, frame));
    if (img.width != expect_size || img.height != expect_size)
      throw IoError("frame size " + std::to_string(img.width) + " != expected " +
                    std::to_string(expect_size) + " for video " + video.id);
    float* dst = out.data() + static_cast<int64_t>(i) * 3 * plane;
    for (int64_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c)
        dst[c * plane + p] = static_cast<float>(img.rgb[p * 3 + c]) / 127.5f - 1.0f;
    }
  }
  return out;
}

}  // namespace m3t::io
