#include "dgm/checkpoint.hpp"
#include "dgm/trainer.hpp"
#include "structure.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace dgm;
using namespace dgm::test;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.eta = 2;
  c.beta = 3;
  c.init_steps = 2;
  c.target_count = 150;
  c.seed = 11;
  c.track_k = 8;
  c.iso_samples = 4;
  c.init.init_opacity = 0.6;
  return c;
}

const Sequence &sequence(int frames) {
  static std::map<int, Sequence> cache;
  auto it = cache.find(frames);
  if (it == cache.end()) it = cache.emplace(frames, generate_synthetic(small_scene(frames, 32, 24), 5)).first;
  return it->second;
}

void expect_partition(const TrainState &s) { EXPECT_EQ(partition_error(s), ""); }

}  // namespace

TEST(Trainer, LadderInvariantsHoldAtEveryLevel) {
  StructureRecorder rec;
  const TrainState final_state = train(sequence(8), tiny_config(), &rec);
  ASSERT_EQ(rec.levels.size(), 4u);  // K = 1, 2, 4, 8
  for (std::size_t l = 0; l < rec.levels.size(); ++l) {
    const TrainState &s = rec.levels[l];
    EXPECT_EQ(s.level_length, 1 << l);
    EXPECT_EQ(s.ladder.size(), 8u >> l);
    expect_partition(s);
  }
  EXPECT_TRUE(final_state.finished);
  EXPECT_EQ(final_state.ladder.size(), 1u);
  EXPECT_EQ(rec.merges, 4 + 2 + 1);
  EXPECT_GT(rec.frontier_checks, 0);
  EXPECT_TRUE(rec.failures.empty()) << rec.failures.front();
}

TEST(Trainer, OddLadderCarriesLastSet) {
  StructureRecorder rec;
  TrainConfig c = tiny_config();
  c.beta = 1;
  const TrainState s = train(sequence(6), c, &rec);
  std::vector<std::size_t> sizes;
  for (const TrainState &l : rec.levels) {
    sizes.push_back(l.ladder.size());
    expect_partition(l);
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{6, 3, 2, 1}));
  EXPECT_EQ(s.ladder.front().set.length(), 6);
}

TEST(Trainer, KMaxStopsCurriculum) {
  TrainConfig c = tiny_config();
  c.k_max = 2;
  const TrainState s = train(sequence(8), c);
  EXPECT_TRUE(s.finished);
  EXPECT_EQ(s.level_length, 2);
  EXPECT_EQ(s.ladder.size(), 4u);
}

TEST(Trainer, DeterministicCheckpoints) {
  const TrainState a = train(sequence(4), tiny_config());
  const TrainState b = train(sequence(4), tiny_config());
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
  TrainConfig other = tiny_config();
  other.seed = 12;
  EXPECT_NE(serialize_checkpoint(a), serialize_checkpoint(train(sequence(4), other)));
}

TEST(Trainer, ResumeIsBitwiseEquivalent) {
  std::vector<std::string> snapshots;
  const TrainState full = train(sequence(4), tiny_config(), nullptr,
                                [&](const TrainState &s) { snapshots.push_back(serialize_checkpoint(s)); });
  ASSERT_EQ(snapshots.size(), 3u);
  for (std::size_t k = 0; k + 1 < snapshots.size(); ++k) {
    TrainState resumed = deserialize_checkpoint(snapshots[k]);
    resume(resumed, sequence(4));
    EXPECT_EQ(serialize_checkpoint(resumed), serialize_checkpoint(full)) << "from snapshot " << k;
  }
}

TEST(Trainer, MotionEstimationDisabledKeepsConstantVelocity) {
  TrainConfig c = tiny_config();
  c.eta = 0;
  c.beta = 0;
  c.init_steps = 0;
  const Sequence &seq = sequence(2);
  const TrainState init = initialize(seq, c);
  TrainState s = init;
  const ObjectiveContext ctx(seq);
  train_level(s, ctx);
  ASSERT_EQ(s.ladder.size(), 1u);
  // Without optimization the merged set holds constant (zero) offsets.
  for (const Marble &m : s.ladder[0].set.marbles) EXPECT_EQ(m.delta_x[0], m.delta_x[1]);
}

TEST(Trainer, FrozenInstanceStopsUpdating) {
  TrainConfig c = tiny_config();
  c.instance_stop = {{1, 2}};
  StructureRecorder rec;
  const TrainState s = train(sequence(4), c, &rec);
  ASSERT_EQ(rec.levels.size(), 3u);
  // Length-2 sets are still learned for instance 1.
  bool moved = false;
  for (const SetState &set : rec.levels[1].ladder)
    for (const Marble &m : set.set.marbles)
      if (m.instance == 1) moved |= !m.delta_x[1].isZero(0.0);
  EXPECT_TRUE(moved);
  // Building length 4, its offsets only receive constant-velocity
  // extrapolation: one half of every trajectory has zero second differences.
  auto linear = [](const Marble &m, int k0) {
    const Vec3 d = m.delta_x[k0 + 2] - 2.0 * m.delta_x[k0 + 1] + m.delta_x[k0];
    return d.norm() < 1e-12;
  };
  int frozen = 0, free_nonlinear = 0;
  for (const Marble &m : s.ladder.front().set.marbles) {
    const bool lin = linear(m, 0) || linear(m, 1);
    if (m.instance == 1) {
      EXPECT_TRUE(lin);
      ++frozen;
    } else if (!lin) {
      ++free_nonlinear;
    }
  }
  EXPECT_GT(frozen, 0);
  EXPECT_GT(free_nonlinear, 0);
  EXPECT_EQ(c.final_length(), 32);
}

TEST(Trainer, SourceFrameSampling) {
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const int s = sample_source_frame(10, 5, 20, 3, seed);
    EXPECT_GE(s, 7);
    EXPECT_LE(s, 13);
    EXPECT_NE(s, 10);
    seen.insert(s);
  }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(sample_source_frame(4, 4, 4, 3, 1), 4);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int s = sample_source_frame(5, 5, 6, 12, seed);
    EXPECT_EQ(s, 6);
  }
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.k_max = 12;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.instance_stop = {{0, 3}};
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.target_count = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const TrainState s = train(sequence(2), tiny_config());
  const std::string bytes = serialize_checkpoint(s);
  const TrainState back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back, s);
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  std::string flipped = bytes;
  flipped[flipped.size() - 10] ^= 0x40;
  EXPECT_THROW(deserialize_checkpoint(flipped), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), Error);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), Error);
  std::string version = bytes;
  version[8] = 9;
  EXPECT_THROW(deserialize_checkpoint(version), Error);

  const auto dir = temp_dir("ckpt");
  save_checkpoint(dir / "a.dgm", s);
  EXPECT_FALSE(std::filesystem::exists(dir / "a.dgm.tmp"));
  EXPECT_EQ(load_checkpoint(dir / "a.dgm"), s);
  EXPECT_THROW(load_checkpoint(dir / "missing.dgm"), Error);
}

TEST(Trainer, RenderAtUsesCoveringSet) {
  const TrainState s = train(sequence(2), tiny_config());
  const RenderOutput out = render_at(s, 2, s.cameras[1]);
  EXPECT_EQ(out.width, 32);
  EXPECT_THROW(render_at(s, 3, s.cameras[1]), Error);
}
