#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "m3t/tensor.hpp"

// On-disk corpus layout and the small binary formats it uses:
//   <root>/videos.json                    video index [{id, fps, frame_count}]
//   <root>/<id>/frames/NNNNNN.ppm         8-bit P6 frames, square
//   <root>/<id>/audio.wav                 16 kHz mono 16-bit PCM
//   <root>/<id>/annotations.csv           frame,valence,arousal,emotion (-5 = absent)
//   <root>/features/<stream>/<id>.bin     float32 LE row-major [frame_count, dim]
//   <root>/features/index.json            {stream: {id: {path, frame_count, dim}}}
namespace m3t::io {

namespace fs = std::filesystem;

// ---- images ----
struct Image {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // interleaved, row-major
};
Image read_ppm(const fs::path& path);
void write_ppm(const fs::path& path, const Image& img);

// ---- audio ----
struct Waveform {
  int sample_rate = 16000;
  std::vector<float> samples;  // mono, in [-1,1]
};
Waveform read_wav(const fs::path& path);
void write_wav(const fs::path& path, const Waveform& wav);

// ---- annotations ----
constexpr double kAnnotationAbsent = -5.0;  // CSV sentinel

struct AnnotationTrack {
  std::vector<float> valence, arousal;  // 0 where invalid
  std::vector<int> emotion;             // -1 where unlabeled
  std::vector<uint8_t> va_valid;
  size_t size() const { return valence.size(); }
};
// Parses `frame,valence,arousal,emotion` rows into a dense track of
// `frame_count` entries; frames missing from the CSV are invalid.
AnnotationTrack read_annotations(const fs::path& path, int frame_count);
void write_annotations(const fs::path& path, const AnnotationTrack& track);

// ---- float32 arrays + index ----
struct FeatureEntry {
  std::string path;  // relative to the index file's directory
  int frame_count = 0;
  int dim = 0;
  bool zero_filled = false;  // true when fabricated for missing input
};

void write_f32(const fs::path& path, const float* data, int64_t count);
std::vector<float> read_f32(const fs::path& path, int64_t expect_count);

// One stream ("emotion", "au", "audio") of per-video feature files.
class FeatureStore {
 public:
  FeatureStore() = default;
  static FeatureStore open(const fs::path& index_json, const std::string& stream);
  // Writer side: register + persist entries, then save().
  FeatureStore(fs::path index_json, std::string stream);
  void put(const std::string& id, const Tensor& rows, bool zero_filled = false);
  void save() const;

  bool has(const std::string& id) const { return entries_.count(id) > 0; }
  const FeatureEntry& entry(const std::string& id) const;
  const std::map<std::string, FeatureEntry>& entries() const { return entries_; }
  int dim() const;  // common dim across entries (0 when empty)

  // Rows [start, start+count) as a [count, dim] tensor; rows outside the
  // stored range are exactly zero.
  Tensor load_rows(const std::string& id, int start, int count) const;

 private:
  fs::path index_path_;
  std::string stream_;
  std::map<std::string, FeatureEntry> entries_;
};

// ---- corpus ----
struct VideoMetadata {
  std::string id;
  double fps = 25.0;
  int frame_count = 0;
  int sample_rate = 16000;
};

struct CorpusIndex {
  fs::path root;
  std::vector<VideoMetadata> videos;  // sorted by id

  static CorpusIndex load(const fs::path& root);
  void save() const;

  fs::path frames_dir(const std::string& id) const { return root / id / "frames"; }
  fs::path audio_path(const std::string& id) const { return root / id / "audio.wav"; }
  fs::path annotations_path(const std::string& id) const {
    return root / id / "annotations.csv";
  }
  fs::path features_index() const { return root / "features" / "index.json"; }

  const VideoMetadata* find(const std::string& id) const;
};

// Frames [count,3,S,S] normalized to [-1,1]; frames at/after frame_count are
// exactly zero. Throws IoError when a frame file inside the range is absent.
Tensor load_frame_window(const CorpusIndex& corpus, const VideoMetadata& video,
                         int start, int count, int expect_size);

fs::path frame_path(const CorpusIndex& corpus, const std::string& id, int index);

}  // namespace m3t::io
