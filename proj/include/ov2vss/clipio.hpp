#pragma once

// Clip assembly and the on-disk dataset layout:
//
//   root/vocab.txt                one class name per line (line index = class)
//   root/splits.txt               line 1: seen indices, line 2: unseen indices
//   root/manifest.json            frame size, channel mean/std, video list
//   root/<video>/frames/%06d.png  RGB frames
//   root/<video>/masks/%06d.png   8-bit class indices, 255 = ignore; optional

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ov2vss/config.hpp"
#include "ov2vss/image.hpp"

namespace ov::inline OV2VSS_ABI {

struct ClassVocabulary {
  std::vector<std::string> names;
  std::vector<int> seen;    // ascending
  std::vector<int> unseen;  // ascending
  int ignore_index = kDefaultIgnoreIndex;

  int size() const { return int(names.size()); }
  bool is_seen(int c) const;
  bool is_unseen(int c) const;
  // Throws ValidationError when an invariant does not hold.
  void validate() const;
  std::vector<std::string> seen_names() const;
};

ClassVocabulary read_vocabulary(const std::filesystem::path& root);
void write_vocabulary(const std::filesystem::path& root, const ClassVocabulary& vocab);

class InsufficientHistoryError : public Error {
 public:
  explicit InsufficientHistoryError(const std::string& what) : Error("insufficient-history", what) {}
};

class NoCandidateError : public Error {
 public:
  explicit NoCandidateError(const std::string& what) : Error("no-candidate", what) {}
};

// [t - n*s, ..., t - s, t]. Throws InsufficientHistoryError when t < n*s.
std::vector<int> build_clip_indices(int target_t, int n, int spacing, int video_len);
// Same, but indices before the first frame repeat frame 0.
std::vector<int> build_clip_indices_padded(int target_t, int n, int spacing, int video_len);

enum class FrameMode { kTrain, kInfer };

// Train: uniform over frames not in the clip. Infer: the frame outside the clip
// farthest from the target, ties toward index 0.
int select_random_frame(int target_t, std::span<const int> clip_indices, int video_len,
                        FrameMode mode, std::uint64_t rng_seed);

struct VideoClipSample {
  std::vector<RgbImage> past_frames;
  RgbImage target_frame;
  RgbImage random_frame;
  LabelMap target_mask;
  std::vector<std::optional<LabelMap>> past_masks;  // present when annotated
  std::vector<int> timestamps;  // past..., target, random
  int video = -1;
};

struct Manifest {
  int height = 0;
  int width = 0;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
  std::vector<std::string> videos;
};

Manifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const Manifest& m);

struct VideoData {
  std::string id;
  std::vector<RgbImage> frames;
  std::vector<std::optional<LabelMap>> masks;
  std::vector<int> annotated;  // frame indices with a mask
};

// Immutable after load; safe to share across threads.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& root);

  const ClassVocabulary& vocab() const { return vocab_; }
  const Manifest& manifest() const { return manifest_; }
  int video_count() const { return int(videos_.size()); }
  const VideoData& video(int i) const { return videos_.at(std::size_t(i)); }
  const std::filesystem::path& root() const { return root_; }

  VideoClipSample sample(int video, int target_t, const ClipConfig& clip, FrameMode mode,
                         std::uint64_t seed) const;

  // Replaces the vocabulary (cross-dataset evaluation with a foreign name list).
  Dataset with_vocabulary(ClassVocabulary vocab) const;

 private:
  std::filesystem::path root_;
  ClassVocabulary vocab_;
  Manifest manifest_;
  std::vector<VideoData> videos_;
};

std::string frame_file_name(int index);

}  // namespace ov::inline OV2VSS_ABI
