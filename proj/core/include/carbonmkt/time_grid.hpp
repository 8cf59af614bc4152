#pragma once

#include <cmath>
#include <cstdint>

#include "carbonmkt/errors.hpp"

namespace carbonmkt {

/// Uniform grid on [0, T] with n = T/dt + 1 nodes.
struct TimeGrid {
  double T = 0.0;
  double dt = 0.0;
  int n = 0;

  static TimeGrid make(double T, double dt) {
    if (!(T > 0.0)) throw StructuralError("TimeGrid: horizon must be positive");
    if (!(dt > 0.0)) throw StructuralError("TimeGrid: step must be positive");
    const double steps = T / dt;
    const double rounded = std::round(steps);
    if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps))
      throw StructuralError("TimeGrid: T/dt is not an integer");
    TimeGrid g;
    g.T = T;
    g.dt = dt;
    g.n = static_cast<int>(rounded) + 1;
    if (g.n < 2) throw StructuralError("TimeGrid: need at least two nodes");
    return g;
  }

  int steps() const { return n - 1; }
  double t(int k) const { return k * dt; }

  /// Nearest node if t sits on the grid (within 1e-9 absolute), else -1.
  int node_of(double t) const {
    const int k = static_cast<int>(std::llround(t / dt));
    if (k < 0 || k >= n) return -1;
    return std::abs(t - k * dt) <= 1e-9 ? k : -1;
  }
};

}  // namespace carbonmkt
