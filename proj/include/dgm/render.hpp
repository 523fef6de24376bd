#pragma once

#include "dgm/camera.hpp"
#include "dgm/core.hpp"
#include "dgm/gradients.hpp"
#include "dgm/marbles.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dgm {

struct RenderConfig {
  int tile_size = 16;
  double cutoff_sigma = 3.0;  // splats contribute inside this Mahalanobis radius
  double min_transmittance = 1.0 / 255.0;
  double cov_floor = 0.3;  // px^2 added to the 2D covariance diagonal
  double near_plane = 0.01;
  int num_labels = 1;  // segmentation channels
  bool operator==(const RenderConfig &) const = default;
};

// Camera-space splat. cov2d holds the symmetric matrix [[a, b], [b, c]] as
// (a, b, c).
struct Splat {
  Vec2 mean2d = Vec2::Zero();
  double depth = 1.0;
  Vec3 cov2d = Vec3(1, 0, 1);
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  int instance = 0;
  bool visible = false;
  Vec3 cam = Vec3::Zero();  // camera-space center, kept for the backward pass
};

struct ProjectedSplats {
  int frame = 0;
  std::vector<Splat> splats;
  std::size_t size() const { return splats.size(); }
};

struct SplatGrads {
  std::vector<Vec2> mean2d;
  std::vector<double> depth;
  std::vector<Vec3> cov2d;  // w.r.t. (a, b, c)
  std::vector<Vec3> color;
  std::vector<double> opacity;

  explicit SplatGrads(std::size_t n = 0)
      : mean2d(n, Vec2::Zero()), depth(n, 0.0), cov2d(n, Vec3::Zero()),
        color(n, Vec3::Zero()), opacity(n, 0.0) {}
  std::size_t size() const { return mean2d.size(); }
};

// One splat's contribution to one pixel. alpha is the splat's local opacity
// w at the pixel; transmittance is T before it was composited. The
// composited weight (alpha') is their product.
struct Contribution {
  std::int32_t splat = -1;
  double alpha = 0.0;
  double transmittance = 1.0;
  double weight() const { return alpha * transmittance; }
};

// Per-pixel, front-to-back ordered contributions. Pixel p (row-major) owns
// entries[begin[p], end[p]); the entry order across pixels is unspecified.
struct ContributionRecords {
  int width = 0;
  std::vector<Contribution> entries;
  std::vector<std::uint32_t> begin, end;  // per pixel

  std::size_t pixel_count() const { return begin.size(); }
  std::span<const Contribution> at(std::size_t p) const {
    return {entries.data() + begin[p], entries.data() + end[p]};
  }
  std::span<const Contribution> at(int x, int y) const {
    return at(static_cast<std::size_t>(y) * width + x);
  }
};

// Depth-ordered splat lists per screen tile.
struct TileBins {
  int tile_size = 16;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::uint32_t> offsets;  // tiles + 1
  std::vector<std::int32_t> splats;

  int tile_count() const { return tiles_x * tiles_y; }
  std::span<const std::int32_t> tile(int t) const {
    return {splats.data() + offsets[t], splats.data() + offsets[t + 1]};
  }
};

struct RenderOutput {
  int width = 0, height = 0, num_labels = 1;
  ImageD color;         // H x W x 3
  ImageD disparity;     // H x W x 1, composited 1 / depth
  ImageD segmentation;  // H x W x num_labels, composited one-hot labels
  ImageD alpha;         // H x W x 1
  ContributionRecords records;

  // Backward-pass bookkeeping from the tiled rasterizer: for each record,
  // its slot in the owning tile's list.
  TileBins bins;
  std::vector<std::int32_t> record_slot;
};

// Projects every marble at frame t. Invisible when behind the near plane or
// when its cutoff ellipse misses the image entirely.
ProjectedSplats project(const MarbleSet &set, int t, const Camera &camera,
                        const RenderConfig &config);

// Tile-binned, depth-sorted front-to-back alpha compositing.
RenderOutput rasterize(const ProjectedSplats &splats, const Camera &camera,
                       const RenderConfig &config);

// Backpropagates image gradients (and optionally a gradient per contribution
// record weight, aligned with output.records.entries) to splat parameters.
SplatGrads rasterize_backward(const ProjectedSplats &splats, const RenderOutput &output,
                              const ImageD &d_color, const ImageD &d_disparity,
                              const ImageD &d_segmentation, std::span<const double> d_weight,
                              const RenderConfig &config);

// Chains splat gradients into marble parameters at frame t, accumulating
// `scale` times the result into `out`.
void project_backward(const MarbleSet &set, int t, const Camera &camera,
                      const ProjectedSplats &splats, const SplatGrads &grads,
                      MarbleGrads &out, double scale = 1.0);

// Brute-force reference: every visible splat tested at every pixel in global
// depth order. Used by tests and synthetic ground truth.
RenderOutput render_oracle(const MarbleSet &set, int t, const Camera &camera,
                           const RenderConfig &config);
RenderOutput rasterize_oracle(const ProjectedSplats &splats, const Camera &camera,
                              const RenderConfig &config);

// Compositing evaluated only at the listed pixels (integer pixel indices).
// Contribution lists match what rasterize() would record there.
std::vector<std::vector<Contribution>> composite_pixels(const ProjectedSplats &splats,
                                                        const Camera &camera,
                                                        const RenderConfig &config,
                                                        std::span<const Vec2> pixels);

// Depth at which accumulated opacity first reaches one half, together with
// the label of that splat. Pixels that never reach one half get depth 0 and
// label 0.
void median_depth_and_label(const RenderOutput &output, const ProjectedSplats &splats,
                            ImageF &depth, ImageU16 &labels);

// Helpers shared with the anisotropic test mode.
namespace detail {
// Jacobian of the perspective map at camera-space point `cam` (2 x 3).
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera &camera, const Vec3 &cam);
// Given dL/dJ, accumulates dL/d(cam) through the Jacobian's dependence on
// the camera-space point.
Vec3 jacobian_backward(const Camera &camera, const Vec3 &cam,
                       const Eigen::Matrix<double, 2, 3> &d_jacobian);
// d(mean2d, depth)/d(cam) chained with upstream gradients.
Vec3 mean_depth_backward(const Camera &camera, const Vec3 &cam, const Vec2 &d_mean,
                         double d_depth);
bool cull(Splat &splat, const Camera &camera, const RenderConfig &config);
}  // namespace detail

}  // namespace dgm
