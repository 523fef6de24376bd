#pragma once

#include "dgm/gradients.hpp"
#include "dgm/marbles.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace dgm {

enum class ParamGroup { mu = 0, delta_x, log_scale, color, opacity };
inline constexpr int kParamGroupCount = 5;
const char *param_group_name(ParamGroup g);

enum class Phase { init, motion_estimation, global_adjustment };
const char *phase_name(Phase p);

struct LearningRates {
  double mu = 1.6e-4;
  double delta_x = 1.6e-3;
  double log_scale = 5e-3;
  double color = 2.5e-3;
  double opacity = 5e-2;

  double of(ParamGroup g) const;
  bool operator==(const LearningRates &) const = default;
};

struct OptimizerConfig {
  LearningRates lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
  double min_scale = 1e-6;  // world units, applied after every step
  double lr_decay = 1.0;    // per-step multiplicative factor on every lr

  void validate() const;
  bool operator==(const OptimizerConfig &) const = default;
};

// Which parameters a step may touch. Trajectory entries are restricted to
// [dx_begin, dx_end); marbles whose instance is listed in frozen_instances
// keep their trajectories.
struct ParamGroups {
  std::array<bool, kParamGroupCount> enabled{};
  int dx_begin = 0;
  int dx_end = 0;
  std::vector<int> frozen_instances;

  bool is_enabled(ParamGroup g) const { return enabled[static_cast<int>(g)]; }
  bool operator==(const ParamGroups &) const = default;
};

// init: mu, color, scale, opacity. motion_estimation: delta_x at `frontier`
// only. global_adjustment: color, scale, opacity and every trajectory entry
// past the anchor. `length` is the current trajectory length.
ParamGroups configure_phase(const ParamGroups &groups, Phase phase, int length, int frontier = -1);

// First and second moments shaped like a MarbleSet. Step counts are kept per
// group, and per trajectory index for delta_x, so freshly added entries get
// their own bias correction.
struct AdamState {
  int length = 1;
  std::vector<Vec3> m_mu, v_mu;
  std::vector<Vec3> m_dx, v_dx;  // marble-major, like MarbleGrads::delta_x
  std::vector<double> m_scale, v_scale;
  std::vector<Vec3> m_color, v_color;
  std::vector<double> m_opacity, v_opacity;
  std::array<std::int64_t, kParamGroupCount> steps{};
  std::vector<std::int64_t> dx_steps;

  static AdamState zeros_like(const MarbleSet &set);
  std::size_t size() const { return m_mu.size(); }

  // Mirrors extend_trajectory: a zeroed trajectory slot at the end or front.
  void extend(Direction direction);
  bool matches(const MarbleSet &set) const;
  bool operator==(const AdamState &) const = default;
};

// One adaptive-moment update of every enabled group. Throws NonFiniteError
// on non-finite gradients or parameters.
void step(MarbleSet &set, const MarbleGrads &grads, const ParamGroups &groups, AdamState &state,
          const OptimizerConfig &config);

// Scalar update shared with the anisotropic overfit experiment. `t` is the
// 1-based step count of this parameter.
inline double adam_delta(double &m, double &v, double g, std::int64_t t, double lr,
                         const OptimizerConfig &c) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  const double mh = m / (1.0 - std::pow(c.beta1, static_cast<double>(t)));
  const double vh = v / (1.0 - std::pow(c.beta2, static_cast<double>(t)));
  return -lr * mh / (std::sqrt(vh) + c.eps);
}

}  // namespace dgm
