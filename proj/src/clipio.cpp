#include "ov2vss/clipio.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ov2vss/nn.hpp"

namespace ov::inline OV2VSS_ABI {

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_index_line(const std::string& line, const fs::path& file) {
  std::vector<int> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    try {
      out.push_back(std::stoi(item.substr(b)));
    } catch (const std::exception&) {
      throw ValidationError(file.string() + ": bad class index '" + item + "'");
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

bool ClassVocabulary::is_seen(int c) const { return std::binary_search(seen.begin(), seen.end(), c); }
bool ClassVocabulary::is_unseen(int c) const {
  return std::binary_search(unseen.begin(), unseen.end(), c);
}

void ClassVocabulary::validate() const {
  const int n = size();
  std::set<std::string> unique;
  for (const auto& name : names) {
    if (name.empty()) throw ValidationError("vocabulary contains an empty class name");
    if (!unique.insert(name).second) throw ValidationError("duplicate class name '" + name + "'");
  }
  std::vector<int> all;
  for (int c : seen) all.push_back(c);
  for (int c : unseen) all.push_back(c);
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw ValidationError("seen and unseen class sets overlap");
  }
  if (int(all.size()) != n || (n > 0 && (all.front() != 0 || all.back() != n - 1))) {
    throw ValidationError("seen and unseen sets must partition 0.." + std::to_string(n - 1));
  }
  if (ignore_index >= 0 && ignore_index < n) {
    throw ValidationError("ignore index " + std::to_string(ignore_index) + " collides with a class");
  }
}

std::vector<std::string> ClassVocabulary::seen_names() const {
  std::vector<std::string> out;
  for (int c : seen) out.push_back(names[std::size_t(c)]);
  return out;
}

ClassVocabulary read_vocabulary(const fs::path& root) {
  ClassVocabulary v;
  const fs::path vocab_file = root / "vocab.txt";
  std::ifstream in(vocab_file);
  if (!in) throw IoError("missing vocabulary file " + vocab_file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    v.names.push_back(line);
  }
  const fs::path split_file = root / "splits.txt";
  std::ifstream sp(split_file);
  if (!sp) throw IoError("missing split file " + split_file.string());
  std::string seen_line, unseen_line;
  std::getline(sp, seen_line);
  std::getline(sp, unseen_line);
  v.seen = parse_index_line(seen_line, split_file);
  v.unseen = parse_index_line(unseen_line, split_file);
  v.validate();
  return v;
}

void write_vocabulary(const fs::path& root, const ClassVocabulary& vocab) {
  vocab.validate();
  std::ofstream out(root / "vocab.txt", std::ios::binary);
  for (const auto& n : vocab.names) out << n << "\n";
  std::ofstream sp(root / "splits.txt", std::ios::binary);
  sp << join(vocab.seen) << "\n" << join(vocab.unseen) << "\n";
  if (!out || !sp) throw IoError("cannot write vocabulary files under " + root.string());
}

std::vector<int> build_clip_indices(int target_t, int n, int spacing, int video_len) {
  if (n < 0 || spacing < 1) throw ValidationError("clip needs n >= 0 and spacing >= 1");
  if (target_t < 0 || target_t >= video_len) {
    throw ValidationError("target frame " + std::to_string(target_t) + " outside video of length " +
                          std::to_string(video_len));
  }
  if (target_t < n * spacing) {
    throw InsufficientHistoryError("target frame " + std::to_string(target_t) + " has fewer than " +
                                   std::to_string(n * spacing) + " frames of history");
  }
  std::vector<int> out;
  for (int i = n; i >= 0; --i) out.push_back(target_t - i * spacing);
  return out;
}

std::vector<int> build_clip_indices_padded(int target_t, int n, int spacing, int video_len) {
  if (target_t >= n * spacing) return build_clip_indices(target_t, n, spacing, video_len);
  if (target_t < 0 || target_t >= video_len) throw ValidationError("target frame outside video");
  std::vector<int> out;
  for (int i = n; i >= 0; --i) out.push_back(std::max(0, target_t - i * spacing));
  return out;
}

int select_random_frame(int target_t, std::span<const int> clip_indices, int video_len,
                        FrameMode mode, std::uint64_t rng_seed) {
  std::vector<int> candidates;
  for (int i = 0; i < video_len; ++i) {
    if (std::find(clip_indices.begin(), clip_indices.end(), i) == clip_indices.end()) {
      candidates.push_back(i);
    }
  }
  if (candidates.empty()) {
    throw NoCandidateError("every frame of the video is already in the clip");
  }
  if (mode == FrameMode::kTrain) {
    Rng rng(rng_seed);
    return candidates[std::size_t(rng.uniform_int(0, int(candidates.size()) - 1))];
  }
  int best = candidates.front();
  for (int c : candidates) {
    if (std::abs(c - target_t) > std::abs(best - target_t)) best = c;
  }
  return best;
}

Manifest read_manifest(const fs::path& root) {
  const fs::path file = root / "manifest.json";
  std::ifstream in(file);
  if (!in) throw IoError("missing manifest file " + file.string());
  nlohmann::json j;
  try {
    in >> j;
    Manifest m;
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.mean = j.at("mean").get<std::array<double, 3>>();
    m.stddev = j.at("std").get<std::array<double, 3>>();
    m.videos = j.at("videos").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& root, const Manifest& m) {
  nlohmann::json j;
  j["height"] = m.height;
  j["width"] = m.width;
  j["mean"] = m.mean;
  j["std"] = m.stddev;
  j["videos"] = m.videos;
  std::ofstream out(root / "manifest.json", std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write manifest under " + root.string());
}

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

Dataset Dataset::load(const fs::path& root) {
  Dataset ds;
  ds.root_ = root;
  ds.vocab_ = read_vocabulary(root);
  ds.manifest_ = read_manifest(root);
  for (const auto& id : ds.manifest_.videos) {
    VideoData v;
    v.id = id;
    const fs::path frames_dir = root / id / "frames";
    const fs::path masks_dir = root / id / "masks";
    if (!fs::is_directory(frames_dir)) throw IoError("missing frame directory " + frames_dir.string());
    std::vector<fs::path> frame_files;
    for (const auto& e : fs::directory_iterator(frames_dir)) {
      if (e.path().extension() == ".png") frame_files.push_back(e.path());
    }
    std::sort(frame_files.begin(), frame_files.end());
    for (std::size_t i = 0; i < frame_files.size(); ++i) {
      if (frame_files[i].filename() != frame_file_name(int(i))) {
        throw ValidationError("frames of video '" + id + "' are not numbered contiguously from 0");
      }
      RgbImage img = read_png_rgb(frame_files[i]);
      if (img.h != ds.manifest_.height || img.w != ds.manifest_.width) {
        throw ValidationError(frame_files[i].string() + ": frame size differs from manifest");
      }
      v.frames.push_back(std::move(img));
    }
    v.masks.resize(v.frames.size());
    if (fs::is_directory(masks_dir)) {
      std::vector<fs::path> mask_files;
      for (const auto& e : fs::directory_iterator(masks_dir)) {
        if (e.path().extension() == ".png") mask_files.push_back(e.path());
      }
      std::sort(mask_files.begin(), mask_files.end());
      if (mask_files.size() > v.frames.size()) {
        throw ValidationError("video '" + id + "' has " + std::to_string(mask_files.size()) +
                              " masks but only " + std::to_string(v.frames.size()) + " frames");
      }
      for (const auto& mf : mask_files) {
        const auto it = std::find_if(frame_files.begin(), frame_files.end(),
                                     [&](const fs::path& f) { return f.filename() == mf.filename(); });
        if (it == frame_files.end()) {
          throw ValidationError(mf.string() + ": mask has no matching frame");
        }
        const int idx = int(it - frame_files.begin());
        LabelMap m = read_png_labels(mf);
        if (m.h != ds.manifest_.height || m.w != ds.manifest_.width) {
          throw ValidationError(mf.string() + ": mask size differs from manifest");
        }
        for (int label : m.labels) {
          if (label != ds.vocab_.ignore_index && (label < 0 || label >= ds.vocab_.size())) {
            throw ValidationError(mf.string() + ": mask value " + std::to_string(label) +
                                  " is outside the vocabulary of " + std::to_string(ds.vocab_.size()) +
                                  " classes");
          }
        }
        v.masks[std::size_t(idx)] = std::move(m);
        v.annotated.push_back(idx);
      }
    }
    ds.videos_.push_back(std::move(v));
  }
  return ds;
}

VideoClipSample Dataset::sample(int video, int target_t, const ClipConfig& clip, FrameMode mode,
                                std::uint64_t seed) const {
  const VideoData& v = videos_.at(std::size_t(video));
  const int len = int(v.frames.size());
  if (!v.masks.at(std::size_t(target_t))) {
    throw ValidationError("target frame " + std::to_string(target_t) + " of video '" + v.id +
                          "' has no mask");
  }
  const auto idx = build_clip_indices_padded(target_t, clip.past_frames, clip.spacing, len);
  VideoClipSample s;
  s.video = video;
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    s.past_frames.push_back(v.frames[std::size_t(idx[i])]);
    s.past_masks.push_back(v.masks[std::size_t(idx[i])]);
    s.timestamps.push_back(idx[i]);
  }
  s.target_frame = v.frames[std::size_t(target_t)];
  s.target_mask = *v.masks[std::size_t(target_t)];
  s.timestamps.push_back(target_t);
  int random_t = target_t;
  try {
    random_t = select_random_frame(target_t, idx, len, mode, seed);
  } catch (const NoCandidateError&) {
    // Very short videos: fall back to the target itself.
  }
  s.random_frame = v.frames[std::size_t(random_t)];
  s.timestamps.push_back(random_t);
  return s;
}

Dataset Dataset::with_vocabulary(ClassVocabulary vocab) const {
  vocab.validate();
  Dataset d = *this;
  d.vocab_ = std::move(vocab);
  return d;
}

}  // namespace ov::inline OV2VSS_ABI
