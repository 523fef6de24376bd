#pragma once

#include "dgm/marbles.hpp"

#include <string>
#include <vector>

namespace dgm {

// Gradient buffers shaped like a MarbleSet. delta_x is flat, marble-major:
// entry (i, k) lives at i * length + k.
struct MarbleGrads {
  int length = 1;
  std::vector<Vec3> mu;
  std::vector<Vec3> delta_x;
  std::vector<double> log_scale;
  std::vector<Vec3> color;
  std::vector<double> opacity_logit;

  static MarbleGrads zeros_like(const MarbleSet &set);

  std::size_t size() const { return mu.size(); }
  Vec3 &dx(std::size_t i, int k) { return delta_x[i * length + k]; }
  const Vec3 &dx(std::size_t i, int k) const { return delta_x[i * length + k]; }

  // Gradient with respect to the world position of marble i at trajectory
  // index k flows to both mu and delta_x[k].
  void add_position(std::size_t i, int k, const Vec3 &g) {
    mu[i] += g;
    dx(i, k) += g;
  }
  void add(const MarbleGrads &other, double weight);
  void set_zero();
  bool all_finite() const;
};

}  // namespace dgm
