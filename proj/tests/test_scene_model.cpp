#include "dgm/knn.hpp"
#include "dgm/marbles.hpp"
#include "dgm/sequence.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace dgm;
using dgm::test::random_set;

TEST(Marbles, PositionAtAddsOffset) {
  Rng rng(1);
  const MarbleSet s = random_set(rng, 5, 4, 3);
  for (int t = 3; t <= 6; ++t) {
    const auto pos = positions_at(s, t);
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(pos[i], s.marbles[i].mu + s.marbles[i].delta_x[t - 3]);
      EXPECT_EQ(pos[i], position_at(s.marbles[i], 3, t));
    }
  }
  EXPECT_THROW(positions_at(s, 2), std::out_of_range);
  EXPECT_THROW(position_at(s.marbles[0], 3, 7), std::out_of_range);
}

TEST(Marbles, ValidateRejectsLengthMismatch) {
  Rng rng(2);
  MarbleSet s = random_set(rng, 3, 2);
  EXPECT_NO_THROW(s.validate());
  s.marbles[1].delta_x.pop_back();
  EXPECT_THROW(s.validate(), Error);
}

TEST(Marbles, ForwardExtensionIsConstantVelocity) {
  Rng rng(3);
  const MarbleSet s = random_set(rng, 10, 3, 2);
  const MarbleSet e = extend_trajectory(s, Direction::forward);
  EXPECT_EQ(e.first_frame, 2);
  EXPECT_EQ(e.last_frame, 5);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto &d = s.marbles[i].delta_x;
    EXPECT_EQ(e.marbles[i].delta_x.size(), 4u);
    EXPECT_TRUE(e.marbles[i].delta_x[3].isApprox(2 * d[2] - d[1], 1e-15));
    for (int k = 0; k < 3; ++k) EXPECT_EQ(e.marbles[i].delta_x[k], d[k]);
  }
}

TEST(Marbles, SingleFrameExtensionRepeatsPosition) {
  Rng rng(4);
  const MarbleSet s = random_set(rng, 4, 1, 5);
  const MarbleSet f = extend_trajectory(s, Direction::forward);
  const MarbleSet b = extend_trajectory(s, Direction::backward);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(positions_at(f, 6)[i], s.marbles[i].mu);
    EXPECT_EQ(positions_at(b, 4)[i], s.marbles[i].mu);
  }
}

TEST(Marbles, BackwardExtensionPreservesWorldPositions) {
  Rng rng(5);
  const MarbleSet s = random_set(rng, 12, 3, 4);
  const MarbleSet e = extend_trajectory(s, Direction::backward);
  EXPECT_EQ(e.first_frame, 3);
  EXPECT_EQ(e.length(), 4);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_TRUE(e.marbles[i].delta_x[0].isZero(0.0));
    for (int t = 4; t <= 6; ++t)
      EXPECT_TRUE(position_at(e.marbles[i], 3, t).isApprox(position_at(s.marbles[i], 4, t), 1e-12));
    const auto &d = s.marbles[i].delta_x;
    const Vec3 expected = s.marbles[i].mu + d[0] - (d[1] - d[0]);
    EXPECT_TRUE(position_at(e.marbles[i], 3, 3).isApprox(expected, 1e-12));
  }
}

TEST(Marbles, DeferredRebaseMatchesImmediate) {
  Rng rng(6);
  const MarbleSet s = random_set(rng, 8, 2, 5);
  MarbleSet lazy = extend_trajectory(s, Direction::backward, false);
  extend_trajectory_inplace(lazy, Direction::backward, false);
  rebase_trajectories(lazy);
  const MarbleSet eager = extend_trajectory(extend_trajectory(s, Direction::backward), Direction::backward);
  ASSERT_EQ(lazy.first_frame, eager.first_frame);
  for (int t = lazy.first_frame; t <= lazy.last_frame; ++t) {
    const auto a = positions_at(lazy, t), b = positions_at(eager, t);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].isApprox(b[i], 1e-12));
  }
  for (const Marble &m : lazy.marbles) EXPECT_TRUE(m.delta_x[0].isZero(0.0));
}

TEST(Marbles, MergeConcatenatesAndChecksIntervals) {
  Rng rng(7);
  const MarbleSet a = random_set(rng, 5, 3, 1), b = random_set(rng, 7, 3, 1);
  const MarbleSet m = merge(a, b);
  EXPECT_EQ(m.size(), 12u);
  EXPECT_EQ(m.marbles[0], a.marbles[0]);
  EXPECT_EQ(m.marbles[5], b.marbles[0]);
  const MarbleSet c = random_set(rng, 3, 3, 2);
  EXPECT_THROW(merge(a, c), Error);
}

TEST(Marbles, PruneDropsFaintAndTinyThenSamples) {
  Rng rng(8);
  MarbleSet s = random_set(rng, 100, 1);
  s.marbles[3].opacity_logit = logit(0.001);
  s.marbles[9].log_scale = std::log(1e-6);
  const MarbleSet all = prune_and_downsample(s, 1000, 0.005, 1e-4, 1);
  EXPECT_EQ(all.size(), 98u);
  for (const Marble &m : all.marbles) {
    EXPECT_GE(m.opacity(), 0.005);
    EXPECT_GE(m.scale(), 1e-4);
  }
  const MarbleSet half = prune_and_downsample(s, 40, 0.005, 1e-4, 9);
  EXPECT_EQ(half.size(), 40u);
  EXPECT_EQ(half, prune_and_downsample(s, 40, 0.005, 1e-4, 9));
  EXPECT_NE(half, prune_and_downsample(s, 40, 0.005, 1e-4, 10));
  // Survivors keep their relative order.
  std::size_t cursor = 0;
  for (const Marble &m : half.marbles) {
    while (cursor < s.size() && !(s.marbles[cursor] == m)) ++cursor;
    ASSERT_LT(cursor, s.size());
  }
  EXPECT_THROW(prune_and_downsample(s, 0, 0.0, 0.0, 1), Error);
}

TEST(Marbles, StatisticalInliersFlagFarPoint) {
  Rng rng(9);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(dgm::test::uniform3(rng, 0.0, 1.0));
  pts.push_back(Vec3(30, 30, 30));
  const auto keep = statistical_inliers(pts, 8, 2.0);
  EXPECT_EQ(keep.back(), 0);
  EXPECT_GT(std::count(keep.begin(), keep.end(), 1), 180);
}

TEST(Knn, MatchesBruteForce) {
  Rng rng(10);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(dgm::test::uniform3(rng, -1.0, 1.0));
  const KdTree3 tree(pts);
  for (int q = 0; q < 50; ++q) {
    const Vec3 p = dgm::test::uniform3(rng, -1.2, 1.2);
    std::vector<std::pair<double, int>> brute;
    for (int i = 0; i < 500; ++i) brute.push_back({(pts[i] - p).squaredNorm(), i});
    std::sort(brute.begin(), brute.end());
    const auto nn = tree.knn(p, 7);
    ASSERT_EQ(nn.size(), 7u);
    for (int k = 0; k < 7; ++k) EXPECT_EQ(nn[k].index, brute[k].second);
  }
}

TEST(Knn, NeighborGraphExcludesSelfAndPads) {
  Rng rng(11);
  std::vector<Vec3> pts;
  for (int i = 0; i < 4; ++i) pts.push_back(dgm::test::uniform3(rng, 0.0, 1.0));
  const NeighborGraph g = build_neighbor_graph(pts, 5);
  ASSERT_EQ(g.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    for (int k = 0; k < 3; ++k) {
      EXPECT_NE(g.of(i)[k], static_cast<std::int32_t>(i));
      EXPECT_GE(g.of(i)[k], 0);
    }
    EXPECT_EQ(g.of(i)[3], -1);
    EXPECT_EQ(g.of(i)[4], -1);
  }
}

namespace {

FrameBundle flat_frame(int w, int h, float depth) {
  FrameBundle f;
  f.index = 3;
  f.rgb = ImageU8(w, h, 3, 0);
  f.depth = ImageF(w, h, 1, depth);
  f.seg = ImageU16(w, h, 1, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.rgb.at(x, y, 0) = static_cast<std::uint8_t>(x * 10);
      f.seg.at(x, y) = x < w / 2 ? 1 : 2;
    }
  f.camera = make_camera(w, h, 20.0);
  return f;
}

}  // namespace

TEST(Init, UnprojectsPixelCentersWithAttributes) {
  const FrameBundle f = flat_frame(8, 6, 2.0f);
  InitOptions o;
  o.target_count = 1000;
  o.outlier_neighbors = 0;
  o.init_opacity = 0.25;
  const MarbleSet s = init_marbles_from_frame(f, f.camera, o);
  ASSERT_EQ(s.size(), 48u);
  EXPECT_EQ(s.first_frame, 3);
  for (const Marble &m : s.marbles) {
    const Vec2 px = f.camera.project(f.camera.to_camera(m.mu));
    const int x = static_cast<int>(std::floor(px.x())), y = static_cast<int>(std::floor(px.y()));
    EXPECT_NEAR(px.x() - x, 0.5, 1e-9);
    EXPECT_NEAR(px.y() - y, 0.5, 1e-9);
    EXPECT_NEAR(m.mu.z(), 2.0, 1e-12);
    EXPECT_NEAR(m.color.x(), x * 10 / 255.0, 1e-12);
    EXPECT_EQ(m.instance, x < 4 ? 1 : 2);
    EXPECT_NEAR(m.opacity(), 0.25, 1e-12);
    // Pixel pitch at depth 2 with focal 20; corners see one diagonal neighbor.
    EXPECT_GE(m.scale(), 0.1 - 1e-9);
    EXPECT_LE(m.scale(), (0.2 + std::sqrt(0.02)) / 3 + 1e-9);
  }
}

TEST(Init, DownsamplesAndSkipsInvalidDepth) {
  FrameBundle f = flat_frame(10, 10, 1.0f);
  for (int x = 0; x < 10; ++x) f.depth.at(x, 0) = 0.0f;
  InitOptions o;
  o.target_count = 20;
  o.outlier_neighbors = 0;
  EXPECT_EQ(init_marbles_from_frame(f, f.camera, o).size(), 20u);
  o.target_count = 1000;
  EXPECT_EQ(init_marbles_from_frame(f, f.camera, o).size(), 90u);
  o.allow_undershoot = false;
  EXPECT_THROW(init_marbles_from_frame(f, f.camera, o), Error);
  f.depth.at(3, 3) = -1.0f;
  o.allow_undershoot = true;
  EXPECT_THROW(init_marbles_from_frame(f, f.camera, o), Error);
  FrameBundle empty = flat_frame(4, 4, 0.0f);
  EXPECT_THROW(init_marbles_from_frame(empty, empty.camera, o), Error);
}

TEST(Camera, ProjectUnprojectRoundTrip) {
  Rng rng(12);
  Camera c = make_camera(100, 80, 90.0);
  look_at(c, Vec3(0.3, -0.2, -1.0), Vec3(0, 0, 3));
  EXPECT_NO_THROW(c.validate());
  for (int i = 0; i < 20; ++i) {
    const Vec3 w = dgm::test::uniform3(rng, -1.0, 1.0) + Vec3(0, 0, 3);
    const Vec3 cam = c.to_camera(w);
    const Vec2 px = c.project(cam);
    EXPECT_TRUE(c.to_world(c.unproject(px.x(), px.y(), cam.z())).isApprox(w, 1e-12));
  }
  const Camera o = orbit(c, Vec3(0, 0, 3), 10.0);
  EXPECT_NEAR((o.center() - Vec3(0, 0, 3)).norm(), (c.center() - Vec3(0, 0, 3)).norm(), 1e-12);
  EXPECT_NEAR(o.to_camera(Vec3(0, 0, 3)).head<2>().norm(), 0.0, 1e-12);
}
