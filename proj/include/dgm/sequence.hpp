#pragma once

#include "dgm/camera.hpp"
#include "dgm/core.hpp"
#include "dgm/marbles.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace dgm {

// One timestep of observations. Depth 0 marks an invalid pixel.
struct FrameBundle {
  int index = 1;
  ImageU8 rgb;       // H x W x 3
  ImageF depth;      // H x W x 1, camera-space z
  ImageU16 seg;      // H x W x 1, instance labels
  Camera camera;
};

struct TrackEntry {
  int frame = 1;
  Vec2 position = Vec2::Zero();  // pixels
  bool visible = true;
};

struct PointTrack {
  int id = 0;
  std::vector<TrackEntry> entries;  // sorted by frame, at most one per frame

  const TrackEntry *at(int frame) const;
};

struct NovelView {
  int frame = 1;
  int view = 0;
  Camera camera;
  ImageU8 rgb;
};

// Keypoint correspondences used for PCK-T: source (frame, pixel) -> query
// (frame, pixel).
struct KeypointPair {
  int id = 0;
  int source_frame = 1;
  Vec2 source = Vec2::Zero();
  int query_frame = 1;
  Vec2 query = Vec2::Zero();
};

struct Sequence {
  std::vector<FrameBundle> frames;  // frames[i].index == i + 1
  std::vector<PointTrack> tracks;
  std::vector<std::string> labels;  // label id -> name
  std::vector<NovelView> novel_views;
  std::vector<KeypointPair> keypoints;
  std::optional<MarbleSet> gt_marbles;  // synthetic ground truth

  int num_frames() const { return static_cast<int>(frames.size()); }
  int num_labels() const { return std::max<int>(1, static_cast<int>(labels.size())); }
  const FrameBundle &frame(int index) const;

  // Checks every documented invariant; throws dgm::Error naming the first
  // breach.
  void validate() const;
};

}  // namespace dgm
