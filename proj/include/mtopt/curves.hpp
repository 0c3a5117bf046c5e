#pragma once

#include <cmath>
#include <stdexcept>

namespace mtopt {

/// Normalized Hill-type muscle curves. Lengths are in units of optimal fiber
/// length, velocities in optimal fiber lengths per second divided by v_max.
struct CurveParams {
  double gaussian_width = 0.45;   // width of the active force-length bell
  double max_eccentric_gain = 1.4;
  double shortening_curvature = 0.25;
  double lengthening_curvature = 0.25;
  double passive_exponent = 4.0;
  double passive_strain = 0.6;    // strain at which passive force reaches f_o
  double max_contraction_velocity = 10.0;  // optimal fiber lengths / s

  bool valid() const {
    return gaussian_width > 0 && max_eccentric_gain > 1 &&
           shortening_curvature > 0 && lengthening_curvature > 0 &&
           passive_exponent > 0 && passive_strain > 0 && passive_strain < 1 &&
           max_contraction_velocity > 0;
  }

  /// Active force-length gain, exp(-(l-1)^2 / width). Peak 1 at optimal length.
  double active_force_length(double l_norm) const {
    if (!(l_norm > 0.0) || !std::isfinite(l_norm))
      throw std::domain_error("active_force_length: normalized length must be positive and finite");
    const double d = l_norm - 1.0;
    return std::exp(-d * d / gaussian_width);
  }

  /// Force-velocity gain. Hyperbolic shortening branch, saturating
  /// lengthening branch; continuous at zero velocity with value 1.
  double force_velocity(double v_norm) const {
    if (!std::isfinite(v_norm))
      throw std::domain_error("force_velocity: normalized velocity must be finite");
    const double v = v_norm < -1.0 ? -1.0 : v_norm;
    if (v < 0.0) return (1.0 + v) / (1.0 - v / shortening_curvature);
    return (max_eccentric_gain * v + lengthening_curvature) / (v + lengthening_curvature);
  }

  /// Passive force gain: zero at or below optimal length, normalized to 1 at
  /// strain passive_strain.
  double passive_force(double l_norm) const {
    if (!(l_norm > 0.0) || !std::isfinite(l_norm))
      throw std::domain_error("passive_force: normalized length must be positive and finite");
    if (l_norm <= 1.0) return 0.0;
    const double e = passive_exponent;
    return std::expm1(e * (l_norm - 1.0) / passive_strain) / std::expm1(e);
  }
};

}  // namespace mtopt
