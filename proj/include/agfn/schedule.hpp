// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "agfn/error.hpp"

namespace agfn {

/// Two-stage alpha schedule: hold alpha0 for the first N1 steps, then decay
/// exponentially toward 0.5 over the remaining N - N1 steps.
struct ScheduleSpec {
  std::uint64_t total_steps = 1;
  std::uint64_t stage1_steps = 1;
  double alpha0 = 0.5;
  double decay_rate = 4.0;

  void validate() const {
    if (!(stage1_steps > 0 && stage1_steps <= total_steps))
      throw InvalidArgument("schedule: need 0 < stage1_steps <= total_steps");
    if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw InvalidArgument("schedule: alpha0 must lie in (0, 1)");
    if (!std::isfinite(decay_rate)) throw InvalidArgument("schedule: decay_rate must be finite");
  }

  /// N1 = round(fraction * N), clamped to [1, N].
  static ScheduleSpec from_fraction(std::uint64_t total, double stage1_fraction, double alpha0, double decay = 4.0) {
    if (!(stage1_fraction > 0.0 && stage1_fraction <= 1.0))
      throw InvalidArgument("schedule: stage1_fraction must lie in (0, 1]");
    if (total == 0) throw InvalidArgument("schedule: total_steps must be positive");
    auto n1 = static_cast<std::uint64_t>(std::llround(stage1_fraction * static_cast<double>(total)));
    n1 = std::clamp<std::uint64_t>(n1, 1, total);
    return {total, n1, alpha0, decay};
  }
};

inline double alpha_at(const ScheduleSpec& s, std::uint64_t n) {
  s.validate();
  if (n < 1 || n > s.total_steps)
    throw InvalidArgument("alpha_at: step " + std::to_string(n) + " outside [1, " + std::to_string(s.total_steps) + "]");
  if (n <= s.stage1_steps) return s.alpha0;
  const double progress =
      static_cast<double>(n - s.stage1_steps) / static_cast<double>(s.total_steps - s.stage1_steps);
  return 0.5 + (s.alpha0 - 0.5) * std::exp(-s.decay_rate * progress);
}

}  // namespace agfn
