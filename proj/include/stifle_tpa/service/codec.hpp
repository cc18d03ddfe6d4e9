#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stifle_tpa/error.hpp"
#include "stifle_tpa/format.hpp"
#include "stifle_tpa/geometry.hpp"
#include "stifle_tpa/ingest.hpp"

namespace stifle_tpa::service {

using nlohmann::json;

/// A request the service rejects; `status` is the HTTP code to answer with.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, json detail = nullptr)
      : std::runtime_error(message), status_(status), code_(std::move(code)), detail_(std::move(detail)) {}

  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const json& detail() const noexcept { return detail_; }

  json to_json() const {
    json j = {{"error", code_}, {"message", what()}};
    if (!detail_.is_null()) j["detail"] = detail_;
    return j;
  }

 private:
  int status_;
  std::string code_;
  json detail_;
};

inline json point_json(const Point2D& p) { return json::array({p.x, p.y}); }

inline Point2D point_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ServiceError(400, "BadRequest", what + ": expected [x, y]");
  }
  Point2D p{j[0].get<double>(), j[1].get<double>()};
  if (!is_finite(p)) throw ServiceError(400, "BadRequest", what + ": non-finite coordinate");
  return p;
}

inline json landmarks_json(const CaseLandmarks& lm) {
  json j = json::object();
  for (LandmarkRole role : kAllRoles) {
    if (auto p = lm.get(role)) j[std::string(to_string(role))] = point_json(*p);
  }
  return j;
}

/// Role-keyed point map; unknown role names are rejected.
inline std::vector<std::pair<LandmarkRole, Point2D>> role_points_from_json(const json& j) {
  if (!j.is_object()) throw ServiceError(400, "BadRequest", "landmarks: expected an object of role -> [x, y]");
  std::vector<std::pair<LandmarkRole, Point2D>> out;
  for (const auto& [key, value] : j.items()) {
    auto role = role_from_string(key);
    if (!role) throw ServiceError(400, "BadRequest", "unknown landmark role '" + key + "'");
    out.emplace_back(*role, point_from_json(value, key));
  }
  return out;
}

/// Full landmark set. Missing required roles raise MissingRoleError.
inline CaseLandmarks landmarks_from_json(const json& j) {
  CaseLandmarks lm;
  std::vector<LandmarkRole> missing;
  const auto points = role_points_from_json(j);
  for (LandmarkRole role : kRequiredRoles) {
    if (std::none_of(points.begin(), points.end(), [&](const auto& rp) { return rp.first == role; })) {
      missing.push_back(role);
    }
  }
  if (!missing.empty()) throw MissingRoleError(std::move(missing));
  for (const auto& [role, p] : points) lm.set(role, p);
  return lm;
}

inline json line_json(const Line2D& l) {
  return {{"anchor", point_json(l.anchor)}, {"direction", json::array({l.direction.dx, l.direction.dy})}};
}

inline json tpa_json(const TpaResult& r) {
  return {{"tpa_deg", r.angle_deg},
          {"tpa_text", fixed(r.angle_deg, 3)},
          {"range_class", std::string(to_string(r.range_class))},
          {"ftl", line_json(r.ftl)},
          {"mtpl", line_json(r.mtpl)},
          {"perpendicular", line_json(r.perpendicular)},
          {"mtpl_parallel_to_ftl", r.mtpl_parallel_to_ftl}};
}

inline json image_meta_json(const ImageMeta& m) {
  return {{"image_id", m.image_id}, {"width", m.width}, {"height", m.height}};
}

inline ImageMeta image_meta_from_json(const json& j) {
  if (!j.is_object()) throw ServiceError(400, "BadRequest", "image_meta: expected an object");
  ImageMeta m;
  try {
    m.image_id = j.value("image_id", std::string{});
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw ServiceError(400, "BadRequest", std::string("image_meta: ") + e.what());
  }
  if (m.width < 1 || m.height < 1) throw ServiceError(400, "BadRequest", "image_meta: width and height must be >= 1");
  return m;
}

inline std::vector<DetectionRecord> detections_from_json(const json& j) {
  if (!j.is_array()) throw ServiceError(400, "BadRequest", "detections: expected an array");
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& d = j[i];
    DetectionRecord r;
    try {
      r.class_id = d.at("class_id").get<int>();
      r.cx = d.at("cx").get<double>();
      r.cy = d.at("cy").get<double>();
      r.w = d.at("w").get<double>();
      r.h = d.at("h").get<double>();
      if (d.contains("confidence")) r.confidence = d["confidence"].get<double>();
    } catch (const json::exception& e) {
      throw ServiceError(400, "BadRequest", "detections[" + std::to_string(i) + "]: " + e.what());
    }
    if (auto problem = record_problem(r)) {
      throw ServiceError(400, "BadRequest", "detections[" + std::to_string(i) + "]: " + *problem);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace stifle_tpa::service
