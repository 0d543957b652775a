#pragma once

// Synthetic closed-form aerodynamics used as a stand-in for CFD labels.
//
// Lift: finite-wing lift slope 2*pi*AR/(AR+2) about a zero-lift angle set by
// the c2 camber proxy. Drag: Schlichting turbulent flat-plate friction scaled
// by the wetted/planform ratio plus induced drag with a sweep-dependent
// Oswald factor. Coefficients are referenced to S_ref = C1^2 (= 1).
// Surface fields: thin-airfoil pressure, flat-plate skin friction.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bwb/geom.hpp"

namespace bwb::surrogate {

struct AeroCoefficients {
  double cl = 0.0;
  double cd = 0.0;
  double cm = 0.0;
  double ld = 0.0;
  double aspect_ratio = 0.0;
  double area = 0.0;
  double oswald = 0.0;
  double cd0 = 0.0;  // planform-referenced
  double alpha0_deg = 0.0;
};

inline constexpr double kOracleThickness = 0.12;
inline constexpr double kCamberProxyDeg = 2.0;  // zero-lift angle is -2 deg * c2

inline double zero_lift_angle_deg(const geom::PlanformParams& p) { return -kCamberProxyDeg * p.c2; }

inline double oswald_factor(const geom::PlanformParams& p) {
  const double t = std::tan(geom::deg_to_rad(p.s1)) - 1.0;
  return 0.85 - 0.05 * t * t;
}

/// Schlichting turbulent flat-plate mean friction coefficient.
inline double flat_plate_friction(double reynolds) {
  return 0.455 / std::pow(std::log10(reynolds), 2.58);
}

inline AeroCoefficients oracle_aero(const geom::PlanformParams& p, const geom::FlightCondition& fc,
                                    const geom::ParamBox& box = {}) {
  AeroCoefficients a;
  a.area = geom::planform_area(p, box);
  a.aspect_ratio = geom::aspect_ratio(p, box);
  a.oswald = oswald_factor(p);
  a.alpha0_deg = zero_lift_angle_deg(p);

  const double ar = a.aspect_ratio;
  const double lift_slope = 2.0 * std::numbers::pi * ar / (ar + 2.0);
  const double cl_plan = lift_slope * geom::deg_to_rad(fc.alpha_deg - a.alpha0_deg);
  const double wetted_ratio = 2.0 * (1.0 + 0.2 * kOracleThickness);
  a.cd0 = flat_plate_friction(fc.reynolds) * wetted_ratio;
  const double cd_plan = a.cd0 + cl_plan * cl_plan / (std::numbers::pi * a.oswald * ar);

  a.cl = cl_plan * a.area;
  a.cd = cd_plan * a.area;
  a.ld = cl_plan / cd_plan;
  a.cm = -a.cl * geom::planform_centroid_x(p, box);
  return a;
}

/// Fills Cp, Cfx, Cfz on a cloud produced by synthesize_surface.
inline void oracle_fields(const geom::PlanformParams& p, const geom::FlightCondition& fc,
                          geom::SurfacePointCloud& cloud, const geom::ParamBox& box = {}) {
  const std::size_t n = cloud.size();
  if (cloud.xi.size() != n || cloud.side.size() != n || cloud.slope.size() != n) {
    throw ArgumentError("oracle_fields: cloud lacks lofting coordinates (xi/side/slope)");
  }
  const auto st = geom::planform_stations(p, box);
  const double alpha_eff = geom::deg_to_rad(fc.alpha_deg - zero_lift_angle_deg(p));
  cloud.cp.resize(n);
  cloud.cfx.resize(n);
  cloud.cfz.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = std::clamp(cloud.xi[i], 1e-6, 1.0);
    const double side = static_cast<double>(cloud.side[i]);
    const double cp = -side * 4.0 * alpha_eff * std::sqrt((1.0 - xi) / xi);
    cloud.cp[i] = std::clamp(cp, -2.0, 2.0);
    const double chord = geom::interpolate_station(st, cloud.points[i].y).chord;
    const double re_x = fc.reynolds * xi * chord;
    cloud.cfx[i] = 0.0592 * std::pow(re_x, -0.2);
    cloud.cfz[i] = cloud.cfx[i] * cloud.slope[i];
  }
}

}  // namespace bwb::surrogate
