#include "dgm/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace dgm {

const char *param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::mu: return "mu";
    case ParamGroup::delta_x: return "delta_x";
    case ParamGroup::log_scale: return "scale";
    case ParamGroup::color: return "color";
    default: return "opacity";
  }
}

const char *phase_name(Phase p) {
  switch (p) {
    case Phase::init: return "init";
    case Phase::motion_estimation: return "motion_estimation";
    default: return "global_adjustment";
  }
}

double LearningRates::of(ParamGroup g) const {
  switch (g) {
    case ParamGroup::mu: return mu;
    case ParamGroup::delta_x: return delta_x;
    case ParamGroup::log_scale: return log_scale;
    case ParamGroup::color: return color;
    default: return opacity;
  }
}

void OptimizerConfig::validate() const {
  for (double r : {lr.mu, lr.delta_x, lr.log_scale, lr.color, lr.opacity})
    if (!(r >= 0.0) || !std::isfinite(r)) throw Error("learning rates must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw Error("optimizer betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw Error("optimizer eps must be positive");
  if (!(min_scale > 0.0)) throw Error("optimizer min_scale must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error("optimizer lr_decay must lie in (0, 1]");
}

ParamGroups configure_phase(const ParamGroups &groups, Phase phase, int length, int frontier) {
  ParamGroups g;
  g.frozen_instances = groups.frozen_instances;
  auto on = [&](ParamGroup p) { g.enabled[static_cast<int>(p)] = true; };
  switch (phase) {
    case Phase::init:
      on(ParamGroup::mu);
      on(ParamGroup::color);
      on(ParamGroup::log_scale);
      on(ParamGroup::opacity);
      break;
    case Phase::motion_estimation:
      if (frontier < 0 || frontier >= length)
        throw Error("configure_phase: frontier index outside trajectory");
      on(ParamGroup::delta_x);
      g.dx_begin = frontier;
      g.dx_end = frontier + 1;
      break;
    case Phase::global_adjustment:
      on(ParamGroup::delta_x);
      on(ParamGroup::color);
      on(ParamGroup::log_scale);
      on(ParamGroup::opacity);
      g.dx_begin = 1;
      g.dx_end = length;
      break;
  }
  return g;
}

AdamState AdamState::zeros_like(const MarbleSet &set) {
  AdamState s;
  const std::size_t n = set.size();
  s.length = set.length();
  s.m_mu.assign(n, Vec3::Zero());
  s.v_mu.assign(n, Vec3::Zero());
  s.m_dx.assign(n * s.length, Vec3::Zero());
  s.v_dx.assign(n * s.length, Vec3::Zero());
  s.m_scale.assign(n, 0.0);
  s.v_scale.assign(n, 0.0);
  s.m_color.assign(n, Vec3::Zero());
  s.v_color.assign(n, Vec3::Zero());
  s.m_opacity.assign(n, 0.0);
  s.v_opacity.assign(n, 0.0);
  s.dx_steps.assign(s.length, 0);
  return s;
}

void AdamState::extend(Direction direction) {
  const std::size_t n = size();
  const int nl = length + 1;
  auto grow = [&](std::vector<Vec3> &buf) {
    std::vector<Vec3> out(n * nl, Vec3::Zero());
    const int off = direction == Direction::backward ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < length; ++k) out[i * nl + k + off] = buf[i * length + k];
    buf.swap(out);
  };
  grow(m_dx);
  grow(v_dx);
  if (direction == Direction::backward)
    dx_steps.insert(dx_steps.begin(), 0);
  else
    dx_steps.push_back(0);
  length = nl;
}

bool AdamState::matches(const MarbleSet &set) const {
  return size() == set.size() && length == set.length() &&
         m_dx.size() == set.size() * static_cast<std::size_t>(set.length()) &&
         dx_steps.size() == static_cast<std::size_t>(length);
}

namespace {

void check_finite(const MarbleGrads &g) {
  auto bad3 = [](const std::vector<Vec3> &v) {
    return std::any_of(v.begin(), v.end(), [](const Vec3 &x) { return !x.allFinite(); });
  };
  auto bad1 = [](const std::vector<double> &v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return !std::isfinite(x); });
  };
  if (bad3(g.mu)) throw NonFiniteError("mu", "gradient");
  if (bad3(g.delta_x)) throw NonFiniteError("delta_x", "gradient");
  if (bad1(g.log_scale)) throw NonFiniteError("scale", "gradient");
  if (bad3(g.color)) throw NonFiniteError("color", "gradient");
  if (bad1(g.opacity_logit)) throw NonFiniteError("opacity", "gradient");
}

}  // namespace

void step(MarbleSet &set, const MarbleGrads &grads, const ParamGroups &groups, AdamState &state,
          const OptimizerConfig &c) {
  const std::size_t n = set.size();
  const int len = set.length();
  if (!state.matches(set)) throw Error("optimizer state does not match marble set");
  if (grads.size() != n || grads.length != len)
    throw Error("gradient buffers do not match marble set");
  check_finite(grads);

  auto lr_of = [&](ParamGroup g, std::int64_t t) {
    return c.lr.of(g) * std::pow(c.lr_decay, static_cast<double>(t - 1));
  };
  auto group_step = [&](ParamGroup g) -> std::int64_t {
    return ++state.steps[static_cast<int>(g)];
  };

  if (groups.is_enabled(ParamGroup::mu)) {
    const auto t = group_step(ParamGroup::mu);
    const double lr = lr_of(ParamGroup::mu, t);
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d)
        set.marbles[i].mu[d] += adam_delta(state.m_mu[i][d], state.v_mu[i][d], grads.mu[i][d], t, lr, c);
  }

  if (groups.is_enabled(ParamGroup::delta_x)) {
    const int kb = std::max(0, groups.dx_begin), ke = std::min(len, groups.dx_end);
    std::vector<std::uint8_t> frozen(n, 0);
    if (!groups.frozen_instances.empty())
      for (std::size_t i = 0; i < n; ++i)
        frozen[i] = std::find(groups.frozen_instances.begin(), groups.frozen_instances.end(),
                              set.marbles[i].instance) != groups.frozen_instances.end();
    for (int k = kb; k < ke; ++k) {
      const auto t = ++state.dx_steps[k];
      const double lr = lr_of(ParamGroup::delta_x, t);
      for (std::size_t i = 0; i < n; ++i) {
        if (frozen[i]) continue;
        const std::size_t f = i * len + k;
        for (int d = 0; d < 3; ++d)
          set.marbles[i].delta_x[k][d] +=
              adam_delta(state.m_dx[f][d], state.v_dx[f][d], grads.delta_x[f][d], t, lr, c);
      }
    }
  }

  if (groups.is_enabled(ParamGroup::log_scale)) {
    const auto t = group_step(ParamGroup::log_scale);
    const double lr = lr_of(ParamGroup::log_scale, t);
    const double floor = std::log(c.min_scale);
    for (std::size_t i = 0; i < n; ++i) {
      double &ls = set.marbles[i].log_scale;
      ls += adam_delta(state.m_scale[i], state.v_scale[i], grads.log_scale[i], t, lr, c);
      ls = std::max(ls, floor);
    }
  }

  if (groups.is_enabled(ParamGroup::color)) {
    const auto t = group_step(ParamGroup::color);
    const double lr = lr_of(ParamGroup::color, t);
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d)
        set.marbles[i].color[d] +=
            adam_delta(state.m_color[i][d], state.v_color[i][d], grads.color[i][d], t, lr, c);
  }

  if (groups.is_enabled(ParamGroup::opacity)) {
    const auto t = group_step(ParamGroup::opacity);
    const double lr = lr_of(ParamGroup::opacity, t);
    for (std::size_t i = 0; i < n; ++i) {
      double &o = set.marbles[i].opacity_logit;
      o += adam_delta(state.m_opacity[i], state.v_opacity[i], grads.opacity_logit[i], t, lr, c);
      if (!std::isfinite(o)) throw NonFiniteError("opacity", "parameter");
    }
  }

  for (const Marble &m : set.marbles) {
    if (!m.mu.allFinite()) throw NonFiniteError("mu", "parameter");
    for (const Vec3 &d : m.delta_x)
      if (!d.allFinite()) throw NonFiniteError("delta_x", "parameter");
  }
}

}  // namespace dgm
