#pragma once

// Blended-wing-body planform parameterization, surface lofting, Latin
// hypercube sampling and standard-atmosphere flight conditions.
//
// All lengths are fractions of the centerline chord C1; sweeps are degrees.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bwb/error.hpp"

namespace bwb::geom {

inline constexpr std::size_t kNumParams = 9;

/// Canonical parameter order used everywhere a planform is flattened.
inline constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "b1", "b2", "b3", "c2", "c3", "c4", "s1", "s3", "x3"};

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

struct PlanformParams {
  double b1 = 0.0;  // span fractions B_i / C1
  double b2 = 0.0;
  double b3 = 0.0;
  double c2 = 0.0;  // chord fractions C_i / C1
  double c3 = 0.0;
  double c4 = 0.0;
  double s1 = 0.0;  // sweep angles, degrees
  double s3 = 0.0;
  double x3 = 0.0;  // streamwise break X3 / C1

  std::array<double, kNumParams> to_array() const {
    return {b1, b2, b3, c2, c3, c4, s1, s3, x3};
  }

  static PlanformParams from_array(std::span<const double> v) {
    if (v.size() != kNumParams) {
      throw ArgumentError("PlanformParams::from_array: expected 9 values, got " +
                          std::to_string(v.size()));
    }
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
  }

  bool operator==(const PlanformParams&) const = default;
};

/// Closed box of admissible planforms. Defaults reproduce the published bounds.
struct ParamBox {
  std::array<double, kNumParams> lo = {0.10, 0.05, 0.35, 0.55, 0.18, 0.06, 40.0, 20.0, 0.50};
  std::array<double, kNumParams> hi = {0.20, 0.20, 0.70, 0.85, 0.28, 0.09, 60.0, 40.0, 0.65};

  std::array<double, kNumParams> midpoint() const {
    std::array<double, kNumParams> m{};
    for (std::size_t j = 0; j < kNumParams; ++j) m[j] = 0.5 * (lo[j] + hi[j]);
    return m;
  }

  bool contains(const PlanformParams& p) const {
    const auto v = p.to_array();
    for (std::size_t j = 0; j < kNumParams; ++j) {
      if (!std::isfinite(v[j]) || v[j] < lo[j] || v[j] > hi[j]) return false;
    }
    return true;
  }

  /// Throws DomainError naming the first offending field.
  void require(const PlanformParams& p) const {
    const auto v = p.to_array();
    for (std::size_t j = 0; j < kNumParams; ++j) {
      if (!std::isfinite(v[j]) || v[j] < lo[j] || v[j] > hi[j]) {
        throw DomainError("planform parameter '" + std::string(kParamNames[j]) + "' = " +
                          std::to_string(v[j]) + " outside [" + std::to_string(lo[j]) + ", " +
                          std::to_string(hi[j]) + "]");
      }
    }
  }

  PlanformParams clip(const PlanformParams& p) const {
    auto v = p.to_array();
    for (std::size_t j = 0; j < kNumParams; ++j) v[j] = std::clamp(v[j], lo[j], hi[j]);
    return PlanformParams::from_array(v);
  }
};

// ---------------------------------------------------------------------------
// Planform stations

struct Station {
  double y = 0.0;      // spanwise position
  double le_x = 0.0;   // leading-edge streamwise position
  double chord = 0.0;
};

using StationTable = std::array<Station, 4>;

/// Stations 1..4 from centerline to tip. Station 3's leading edge sits at x3.
inline StationTable planform_stations(const PlanformParams& p, const ParamBox& box = {}) {
  box.require(p);
  StationTable s{};
  s[0] = {0.0, 0.0, 1.0};
  s[1] = {p.b1, p.b1 * std::tan(deg_to_rad(p.s1)), p.c2};
  s[2] = {p.b1 + p.b2, p.x3, p.c3};
  s[3] = {p.b1 + p.b2 + p.b3, p.x3 + p.b3 * std::tan(deg_to_rad(p.s3)), p.c4};
  return s;
}

inline double half_span(const PlanformParams& p) { return p.b1 + p.b2 + p.b3; }

/// Leading-edge position and chord at spanwise station |y|, linear between stations.
inline Station interpolate_station(const StationTable& st, double y) {
  y = std::abs(y);
  if (y >= st[3].y) return {y, st[3].le_x, st[3].chord};
  std::size_t k = 0;
  while (k + 1 < st.size() - 1 && y > st[k + 1].y) ++k;
  const double w = (y - st[k].y) / (st[k + 1].y - st[k].y);
  return {y, st[k].le_x + w * (st[k + 1].le_x - st[k].le_x),
          st[k].chord + w * (st[k + 1].chord - st[k].chord)};
}

/// Full-span planform area via the shoelace formula on the outline polygon.
inline double planform_area(const PlanformParams& p, const ParamBox& box = {}) {
  const auto st = planform_stations(p, box);
  std::vector<std::array<double, 2>> poly;
  for (const auto& s : st) poly.push_back({s.le_x, s.y});
  for (auto it = st.rbegin(); it != st.rend(); ++it) poly.push_back({it->le_x + it->chord, it->y});
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    twice += a[0] * b[1] - b[0] * a[1];
  }
  return std::abs(twice);  // half-planform area is |twice|/2; full span doubles it
}

/// Centroid of the half planform in x, from the same outline polygon.
inline double planform_centroid_x(const PlanformParams& p, const ParamBox& box = {}) {
  const auto st = planform_stations(p, box);
  std::vector<std::array<double, 2>> poly;
  for (const auto& s : st) poly.push_back({s.le_x, s.y});
  for (auto it = st.rbegin(); it != st.rend(); ++it) poly.push_back({it->le_x + it->chord, it->y});
  double a2 = 0.0, cx = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    const double cross = a[0] * b[1] - b[0] * a[1];
    a2 += cross;
    cx += (a[0] + b[0]) * cross;
  }
  return cx / (3.0 * a2);
}

inline double aspect_ratio(const PlanformParams& p, const ParamBox& box = {}) {
  const double span = 2.0 * half_span(p);
  return span * span / planform_area(p, box);
}

// ---------------------------------------------------------------------------
// Surface synthesis

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

/// Surface samples with optional per-point field channels (Cp, Cfx, Cfz).
/// Cfy is carried only when read from files and never used downstream.
struct SurfacePointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<double> cp, cfx, cfz;
  std::vector<double> cfy;

  /// Per-point lofting coordinates; empty for clouds read from files.
  std::vector<double> xi;        // chordwise fraction
  std::vector<double> slope;     // local dz/dx of the surface
  std::vector<std::int8_t> side; // +1 upper, -1 lower

  std::size_t size() const { return points.size(); }
  bool has_fields() const { return cp.size() == size() && cfx.size() == size() && cfz.size() == size(); }
};

/// Half-thickness of a symmetric 4-digit section at chord fraction xi.
inline double naca4_half_thickness(double xi, double t) {
  return 5.0 * t *
         (0.2969 * std::sqrt(xi) - 0.1260 * xi - 0.3516 * xi * xi + 0.2843 * xi * xi * xi -
          0.1015 * xi * xi * xi * xi);
}

struct LoftOptions {
  std::size_t n_chord = 16;
  std::size_t n_span = 16;
  double thickness = 0.12;
  bool full_span = false;  // mirror to y < 0 as well
};

namespace detail {

inline Vec3 loft_point(const StationTable& st, double xi, double y, double side, double t) {
  const auto s = interpolate_station(st, y);
  return {s.le_x + xi * s.chord, y, side * naca4_half_thickness(xi, t) * s.chord};
}

}  // namespace detail

/// Lofts upper and lower surfaces between the four stations. Points are laid out
/// upper surface first, span-major then chordwise.
inline SurfacePointCloud synthesize_surface(const PlanformParams& p, const LoftOptions& opt = {},
                                            const ParamBox& box = {}) {
  if (opt.n_chord < 4 || opt.n_span < 4) {
    throw ArgumentError("synthesize_surface: n_chord and n_span must be >= 4");
  }
  const auto st = planform_stations(p, box);
  for (std::size_t k = 0; k < st.size(); ++k) {
    if (!(st[k].chord > 0.0)) {
      throw DomainError("synthesize_surface: station " + std::to_string(k + 1) +
                        " has non-positive chord");
    }
  }
  const double hs = half_span(p);
  const double hxi = 1e-6;
  const double hy = 1e-6 * hs;

  SurfacePointCloud cloud;
  const std::size_t n = 2 * opt.n_chord * opt.n_span * (opt.full_span ? 2 : 1);
  cloud.points.reserve(n);
  cloud.normals.reserve(n);

  for (double mirror : opt.full_span ? std::vector<double>{1.0, -1.0} : std::vector<double>{1.0}) {
    for (double side : {1.0, -1.0}) {
      for (std::size_t j = 0; j < opt.n_span; ++j) {
        const double y = hs * (static_cast<double>(j) + 0.5) / static_cast<double>(opt.n_span);
        for (std::size_t i = 0; i < opt.n_chord; ++i) {
          // Cosine spacing clustered at both edges, excluding xi = 0 and xi = 1.
          const double xi =
              0.5 * (1.0 - std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                    static_cast<double>(opt.n_chord)));
          const Vec3 pt = detail::loft_point(st, xi, y, side, opt.thickness);

          const double xa = std::max(xi - hxi, 0.0), xb = std::min(xi + hxi, 1.0);
          const Vec3 pa = detail::loft_point(st, xa, y, side, opt.thickness);
          const Vec3 pb = detail::loft_point(st, xb, y, side, opt.thickness);
          const Vec3 ya = detail::loft_point(st, xi, y - hy, side, opt.thickness);
          const Vec3 yb = detail::loft_point(st, xi, y + hy, side, opt.thickness);
          const Vec3 dxi{(pb.x - pa.x) / (xb - xa), 0.0, (pb.z - pa.z) / (xb - xa)};
          const Vec3 dy{(yb.x - ya.x) / (2 * hy), 1.0, (yb.z - ya.z) / (2 * hy)};
          // Upper: dxi x dy points to +z; lower flips the order.
          Vec3 nrm = side > 0 ? cross(dxi, dy) : cross(dy, dxi);
          const double len = norm(nrm);
          nrm = {nrm.x / len, nrm.y / len, nrm.z / len};

          cloud.points.push_back({pt.x, mirror * pt.y, pt.z});
          cloud.normals.push_back({nrm.x, mirror * nrm.y, nrm.z});
          cloud.xi.push_back(xi);
          cloud.slope.push_back(dxi.z / dxi.x);
          cloud.side.push_back(static_cast<std::int8_t>(side));
        }
      }
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Latin hypercube sampling

/// n x dims samples in [0,1); dimension d's n values occupy the n distinct
/// strata [k/n, (k+1)/n). Deterministic in seed.
inline std::vector<std::vector<double>> lhs_unit(std::size_t n, std::size_t dims,
                                                 std::uint64_t seed) {
  if (n == 0) throw ArgumentError("lhs_sample: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> out(n, std::vector<double>(dims));
  std::vector<std::size_t> perm(n);
  const double dn = static_cast<double>(n);
  for (std::size_t d = 0; d < dims; ++d) {
    for (std::size_t k = 0; k < n; ++k) perm[k] = k;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double k = static_cast<double>(perm[i]);
      double u = (k + unif(rng)) / dn;
      // Guard the rounding edge so u stays in its own stratum.
      const double upper = (k + 1.0) / dn;
      if (u >= upper) u = std::nextafter(upper, 0.0);
      if (u < k / dn) u = k / dn;
      out[i][d] = u;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flight conditions and standard atmosphere

/// Sampling ranges for flight conditions. Length is stratified in log10 space.
struct ConditionRanges {
  double alt_lo = 0.0, alt_hi = 40.0;       // kft
  double mach_lo = 0.05, mach_hi = 0.5;
  double length_lo = 0.1, length_hi = 10.0; // m
  double alpha_lo = -8.0, alpha_hi = 16.0;  // deg
};

struct FlightCondition {
  double altitude_kft = 0.0;
  double mach = 0.0;
  double centerline_length = 1.0;
  double alpha_deg = 0.0;
  double reynolds = 0.0;
  double log10_reynolds = 0.0;

  bool operator==(const FlightCondition&) const = default;
};

struct Atmosphere {
  double temperature = 0.0;  // K
  double pressure = 0.0;     // Pa
  double density = 0.0;      // kg/m^3
  double speed_of_sound = 0.0;
  double viscosity = 0.0;    // Pa s
};

namespace isa {
inline constexpr double kGamma = 1.4;
inline constexpr double kGasConstant = 287.05;
inline constexpr double kGravity = 9.80665;
inline constexpr double kSeaLevelTemperature = 288.15;
inline constexpr double kSeaLevelPressure = 101325.0;
inline constexpr double kLapseRate = 0.0065;  // K/m
inline constexpr double kTropopause = 11000.0;
inline constexpr double kFeetPerKft = 304.8;  // m per kft
inline constexpr double kSutherlandMuRef = 1.716e-5;
inline constexpr double kSutherlandTRef = 273.15;
inline constexpr double kSutherlandS = 110.4;
}  // namespace isa

inline Atmosphere standard_atmosphere(double altitude_m) {
  using namespace isa;
  Atmosphere a;
  const double trop_exp = kGravity / (kLapseRate * kGasConstant);
  if (altitude_m <= kTropopause) {
    a.temperature = kSeaLevelTemperature - kLapseRate * altitude_m;
    a.pressure = kSeaLevelPressure * std::pow(a.temperature / kSeaLevelTemperature, trop_exp);
  } else {
    const double t11 = kSeaLevelTemperature - kLapseRate * kTropopause;
    const double p11 = kSeaLevelPressure * std::pow(t11 / kSeaLevelTemperature, trop_exp);
    a.temperature = t11;
    a.pressure = p11 * std::exp(-kGravity * (altitude_m - kTropopause) / (kGasConstant * t11));
  }
  a.density = a.pressure / (kGasConstant * a.temperature);
  a.speed_of_sound = std::sqrt(kGamma * kGasConstant * a.temperature);
  a.viscosity = kSutherlandMuRef * std::pow(a.temperature / kSutherlandTRef, 1.5) *
                (kSutherlandTRef + kSutherlandS) / (a.temperature + kSutherlandS);
  return a;
}

inline double derive_reynolds(const FlightCondition& fc) {
  const auto atm = standard_atmosphere(fc.altitude_kft * isa::kFeetPerKft);
  const double v = fc.mach * atm.speed_of_sound;
  return atm.density * v * fc.centerline_length / atm.viscosity;
}

/// Builds a flight condition with Reynolds number filled in.
inline FlightCondition make_condition(double altitude_kft, double mach, double length,
                                      double alpha_deg) {
  FlightCondition fc{altitude_kft, mach, length, alpha_deg, 0.0, 0.0};
  fc.reynolds = derive_reynolds(fc);
  fc.log10_reynolds = std::log10(fc.reynolds);
  return fc;
}

/// Maps a 4-D unit-cube sample onto the condition ranges.
inline FlightCondition condition_from_unit(std::span<const double> u, const ConditionRanges& r = {}) {
  const double alt = r.alt_lo + u[0] * (r.alt_hi - r.alt_lo);
  const double mach = r.mach_lo + u[1] * (r.mach_hi - r.mach_lo);
  const double lg = std::log10(r.length_lo) + u[2] * (std::log10(r.length_hi) - std::log10(r.length_lo));
  const double alpha = r.alpha_lo + u[3] * (r.alpha_hi - r.alpha_lo);
  return make_condition(alt, mach, std::pow(10.0, lg), alpha);
}

inline PlanformParams planform_from_unit(std::span<const double> u, const ParamBox& box = {}) {
  std::array<double, kNumParams> v{};
  for (std::size_t j = 0; j < kNumParams; ++j) v[j] = box.lo[j] + u[j] * (box.hi[j] - box.lo[j]);
  return PlanformParams::from_array(v);
}

inline std::vector<PlanformParams> lhs_planforms(const ParamBox& box, std::size_t n,
                                                 std::uint64_t seed) {
  std::vector<PlanformParams> out;
  for (const auto& u : lhs_unit(n, kNumParams, seed)) out.push_back(planform_from_unit(u, box));
  return out;
}

inline std::vector<FlightCondition> lhs_conditions(const ConditionRanges& r, std::size_t n,
                                                   std::uint64_t seed) {
  std::vector<FlightCondition> out;
  for (const auto& u : lhs_unit(n, 4, seed)) out.push_back(condition_from_unit(u, r));
  return out;
}

struct DesignPoint {
  PlanformParams planform;
  FlightCondition condition;
};

/// Joint 13-D hypercube over planform and flight condition.
inline std::vector<DesignPoint> lhs_design(const ParamBox& box, const ConditionRanges& r,
                                           std::size_t n, std::uint64_t seed) {
  std::vector<DesignPoint> out;
  out.reserve(n);
  for (const auto& u : lhs_unit(n, kNumParams + 4, seed)) {
    const std::span<const double> all(u);
    out.push_back({planform_from_unit(all.first(kNumParams), box),
                   condition_from_unit(all.subspan(kNumParams, 4), r)});
  }
  return out;
}

}  // namespace bwb::geom
