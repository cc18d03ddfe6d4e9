#pragma once

// Tibial plateau angle construction from resolved landmarks.
//
// All coordinates are image pixels with y pointing down. Only undirected
// inter-line angles are used, so nothing here depends on that convention.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "stifle_tpa/error.hpp"

namespace stifle_tpa {

struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

struct Vec2 {
  double dx = 0.0;
  double dy = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline bool is_finite(const Point2D& p) noexcept {
  return std::isfinite(p.x) && std::isfinite(p.y);
}

inline double distance(const Point2D& a, const Point2D& b) noexcept {
  return std::hypot(b.x - a.x, b.y - a.y);
}

inline double dot(const Vec2& a, const Vec2& b) noexcept { return a.dx * b.dx + a.dy * b.dy; }

inline double cross(const Vec2& a, const Vec2& b) noexcept { return a.dx * b.dy - a.dy * b.dx; }

inline constexpr double degrees(double radians) noexcept {
  return radians * 180.0 / std::numbers::pi;
}

inline constexpr double radians(double degrees) noexcept {
  return degrees * std::numbers::pi / 180.0;
}

/// Infinite line through `anchor`. `direction` is a unit vector.
struct Line2D {
  Point2D anchor;
  Vec2 direction{1.0, 0.0};
};

enum class LandmarkRole {
  IntercondylarEminence,
  TalusCenter,
  MtplP1,
  MtplP2,
  StifleJoint,
  TarsusJoint,
};

inline constexpr std::array<LandmarkRole, 6> kAllRoles = {
    LandmarkRole::IntercondylarEminence, LandmarkRole::TalusCenter, LandmarkRole::MtplP1,
    LandmarkRole::MtplP2,                LandmarkRole::StifleJoint, LandmarkRole::TarsusJoint,
};

inline constexpr std::array<LandmarkRole, 4> kRequiredRoles = {
    LandmarkRole::IntercondylarEminence,
    LandmarkRole::TalusCenter,
    LandmarkRole::MtplP1,
    LandmarkRole::MtplP2,
};

constexpr std::string_view to_string(LandmarkRole role) noexcept {
  switch (role) {
    case LandmarkRole::IntercondylarEminence: return "IntercondylarEminence";
    case LandmarkRole::TalusCenter: return "TalusCenter";
    case LandmarkRole::MtplP1: return "MtplP1";
    case LandmarkRole::MtplP2: return "MtplP2";
    case LandmarkRole::StifleJoint: return "StifleJoint";
    case LandmarkRole::TarsusJoint: return "TarsusJoint";
  }
  return "Unknown";
}

inline std::optional<LandmarkRole> role_from_string(std::string_view name) noexcept {
  for (LandmarkRole role : kAllRoles) {
    if (to_string(role) == name) return role;
  }
  return std::nullopt;
}

constexpr bool is_required(LandmarkRole role) noexcept {
  return role != LandmarkRole::StifleJoint && role != LandmarkRole::TarsusJoint;
}

struct CaseLandmarks {
  Point2D intercondylar_eminence;
  Point2D talus_center;
  Point2D mtpl_p1;
  Point2D mtpl_p2;
  std::optional<Point2D> stifle_joint;
  std::optional<Point2D> tarsus_joint;

  std::optional<Point2D> get(LandmarkRole role) const noexcept {
    switch (role) {
      case LandmarkRole::IntercondylarEminence: return intercondylar_eminence;
      case LandmarkRole::TalusCenter: return talus_center;
      case LandmarkRole::MtplP1: return mtpl_p1;
      case LandmarkRole::MtplP2: return mtpl_p2;
      case LandmarkRole::StifleJoint: return stifle_joint;
      case LandmarkRole::TarsusJoint: return tarsus_joint;
    }
    return std::nullopt;
  }

  void set(LandmarkRole role, const Point2D& p) noexcept {
    switch (role) {
      case LandmarkRole::IntercondylarEminence: intercondylar_eminence = p; break;
      case LandmarkRole::TalusCenter: talus_center = p; break;
      case LandmarkRole::MtplP1: mtpl_p1 = p; break;
      case LandmarkRole::MtplP2: mtpl_p2 = p; break;
      case LandmarkRole::StifleJoint: stifle_joint = p; break;
      case LandmarkRole::TarsusJoint: tarsus_joint = p; break;
    }
  }

  friend bool operator==(const CaseLandmarks&, const CaseLandmarks&) = default;
};

enum class RangeClass { BelowRange, Normal, AboveRange };

constexpr std::string_view to_string(RangeClass c) noexcept {
  switch (c) {
    case RangeClass::BelowRange: return "BelowRange";
    case RangeClass::Normal: return "Normal";
    case RangeClass::AboveRange: return "AboveRange";
  }
  return "Unknown";
}

/// Inclusive normal band in degrees.
struct RangeThresholds {
  double lower = 18.0;
  double upper = 25.0;

  void validate() const {
    if (!(lower >= 0.0 && upper <= 90.0 && lower < upper)) {
      throw Error(ErrorKind::InvalidThresholds,
                  "InvalidThresholds: need 0 <= lower < upper <= 90, got lower=" +
                      std::to_string(lower) + " upper=" + std::to_string(upper));
    }
  }
};

struct TpaResult {
  double angle_deg = 0.0;
  RangeClass range_class = RangeClass::Normal;
  Line2D ftl;
  Line2D mtpl;
  Line2D perpendicular;
  /// Set when the plateau line runs parallel to the functional axis. The
  /// angle is then 90, which is reported but is almost always a bad input.
  bool mtpl_parallel_to_ftl = false;
};

/// Points closer than this are coincident. Scales with the image so the
/// check does not depend on absolute pixel units.
inline double degeneracy_epsilon(double image_diagonal = 1.0) noexcept {
  return 1e-9 * std::max(1.0, image_diagonal);
}

inline Line2D line_through(const Point2D& from, const Point2D& to, std::string_view what,
                           double image_diagonal = 1.0) {
  if (!is_finite(from) || !is_finite(to)) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + ": non-finite landmark coordinate");
  }
  const double len = distance(from, to);
  if (!(len >= degeneracy_epsilon(image_diagonal))) {
    throw Error(ErrorKind::DegenerateGeometry,
                "DegenerateGeometry: " + std::string(what) + " defining points coincide");
  }
  return Line2D{from, Vec2{(to.x - from.x) / len, (to.y - from.y) / len}};
}

/// Functional tibial line, anchored at the eminence and pointing to the talus.
inline Line2D ftl(const CaseLandmarks& lm, double image_diagonal = 1.0) {
  return line_through(lm.intercondylar_eminence, lm.talus_center, "FTL", image_diagonal);
}

/// Medial tibial plateau line, anchored at the first plateau point.
inline Line2D mtpl(const CaseLandmarks& lm, double image_diagonal = 1.0) {
  return line_through(lm.mtpl_p1, lm.mtpl_p2, "MTPL", image_diagonal);
}

/// The normal of `line` through `at` (direction rotated +90 degrees).
inline Line2D perpendicular_at(const Line2D& line, const Point2D& at) noexcept {
  return Line2D{at, Vec2{-line.direction.dy, line.direction.dx}};
}

/// Acute angle between two undirected lines, in degrees within [0, 90].
///
/// Equal to acos(|a.b|) in exact arithmetic. atan2 of the cross and dot
/// magnitudes keeps full precision near 0 and 90 where acos does not.
inline double angle_between_lines(const Line2D& a, const Line2D& b) noexcept {
  const double c = std::abs(cross(a.direction, b.direction));
  const double d = std::abs(dot(a.direction, b.direction));
  return std::clamp(degrees(std::atan2(c, d)), 0.0, 90.0);
}

inline RangeClass classify(double angle_deg, const RangeThresholds& thresholds = {}) {
  thresholds.validate();
  if (!(angle_deg >= 0.0 && angle_deg <= 90.0)) {
    throw Error(ErrorKind::InvalidInput, "classify: angle outside [0, 90]");
  }
  if (angle_deg < thresholds.lower) return RangeClass::BelowRange;
  if (angle_deg > thresholds.upper) return RangeClass::AboveRange;
  return RangeClass::Normal;
}

inline TpaResult compute_tpa(const CaseLandmarks& lm, const RangeThresholds& thresholds = {},
                             double image_diagonal = 1.0) {
  thresholds.validate();
  TpaResult result;
  result.ftl = ftl(lm, image_diagonal);
  result.mtpl = mtpl(lm, image_diagonal);
  result.perpendicular = perpendicular_at(result.ftl, lm.intercondylar_eminence);
  result.angle_deg = angle_between_lines(result.perpendicular, result.mtpl);
  result.range_class = classify(result.angle_deg, thresholds);
  result.mtpl_parallel_to_ftl = std::abs(cross(result.ftl.direction, result.mtpl.direction)) < 1e-12;
  return result;
}

}  // namespace stifle_tpa
