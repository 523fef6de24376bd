#pragma once

#include "dgm/camera.hpp"
#include "dgm/core.hpp"
#include "dgm/marbles.hpp"
#include "dgm/sequence.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dgm {

namespace fs = std::filesystem;

// 8-bit RGB and 16-bit gray PNG.
ImageU8 read_png_rgb(const fs::path &path);
void write_png_rgb(const fs::path &path, const ImageU8 &image);
ImageU16 read_png_gray16(const fs::path &path);
void write_png_gray16(const fs::path &path, const ImageU16 &image);

// Depth raster: "DGMDEPTH", u32 width, u32 height, then width * height
// little-endian float32, row-major.
ImageF read_depth(const fs::path &path);
void write_depth(const fs::path &path, const ImageF &depth);

// Rendered [0, 1] color to 8-bit, rounding to nearest.
ImageU8 to_rgb8(const ImageD &color);

std::vector<PointTrack> read_tracks(const fs::path &path);
void write_tracks(const fs::path &path, const std::vector<PointTrack> &tracks);

struct CameraEntry {
  int frame = 1;
  int view = 0;
  Camera camera;
};

// JSON list of {"frame", "view", "width", "height", "K": 3x3,
// "world_to_camera": 4x4}.
std::vector<CameraEntry> read_cameras(const fs::path &path);
void write_cameras(const fs::path &path, const std::vector<CameraEntry> &cameras);

// Marble table: "DGMMARB", u32 version, u32 count, i32 first, i32 last, then
// per marble mu, log_scale, color, opacity_logit (float64), instance (i32)
// and the trajectory (float64 xyz per frame).
MarbleSet read_marbles(const fs::path &path);
void write_marbles(const fs::path &path, const MarbleSet &set);

std::vector<KeypointPair> read_keypoints(const fs::path &path);
void write_keypoints(const fs::path &path, const std::vector<KeypointPair> &keypoints);

// Layout:
//   root/rgb/%05d.png  root/depth/%05d.f32  root/seg/%05d.png
//   root/tracks.csv    root/cameras.txt     root/labels.txt
//   root/gt/marbles.bin  root/gt/novel_cameras.txt  root/gt/novel/%05d_%02d.png
//   root/gt/keypoints.csv
Sequence load_sequence(const fs::path &root);
void save_sequence(const fs::path &root, const Sequence &sequence);

// Trajectory table: "DGMTRAJ\0", u32 version, u64 rows, then rows of
// (u32 marble id, u32 instance, i32 frame, float32 x, y, z).
struct TrajectoryRow {
  std::uint32_t marble = 0;
  std::uint32_t instance = 0;
  std::int32_t frame = 0;
  float x = 0, y = 0, z = 0;
};
void write_trajectories(const fs::path &path, const std::vector<MarbleSet> &sets);
std::vector<TrajectoryRow> read_trajectories(const fs::path &path);

// ASCII "x y z r g b" lines, colors in [0, 1].
void write_point_cloud(const fs::path &path, const std::vector<Vec3> &points,
                       const std::vector<Vec3> &colors);
void read_point_cloud(const fs::path &path, std::vector<Vec3> &points, std::vector<Vec3> &colors);

std::string frame_name(int index, const char *ext);

// Least-squares scale and shift mapping `depth` onto `reference` over pixels
// valid in both; returns (scale, shift).
std::pair<double, double> align_depth_scale_shift(const ImageF &depth, const ImageF &reference);

}  // namespace dgm
