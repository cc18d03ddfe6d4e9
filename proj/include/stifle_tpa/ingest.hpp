#pragma once

// Detector label files, class-to-role maps and case manifests.
//
// Label line: "class_id cx cy w h [confidence]" with normalized box values.
// Lines starting with '#' and blank lines are skipped.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "stifle_tpa/error.hpp"
#include "stifle_tpa/format.hpp"
#include "stifle_tpa/geometry.hpp"

namespace stifle_tpa {

struct DetectionRecord {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  /// Absent in ground-truth annotation files.
  std::optional<double> confidence;

  double score() const noexcept { return confidence.value_or(1.0); }
  double area() const noexcept { return w * h; }

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct ImageMeta {
  int width = 1;
  int height = 1;
  std::string image_id;

  double diagonal() const noexcept { return std::hypot(double(width), double(height)); }
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::ParseError, "ParseError(line " + std::to_string(line) + "): " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MissingRoleError : public Error {
 public:
  explicit MissingRoleError(std::vector<LandmarkRole> roles, const std::string& context = {})
      : Error(ErrorKind::MissingRole, describe(roles, context)), roles_(std::move(roles)) {}

  const std::vector<LandmarkRole>& roles() const noexcept { return roles_; }

 private:
  static std::string describe(const std::vector<LandmarkRole>& roles, const std::string& context) {
    std::string msg = context.empty() ? "" : context + ": ";
    for (std::size_t i = 0; i < roles.size(); ++i) {
      if (i) msg += ", ";
      msg += "MissingRole(" + std::string(to_string(roles[i])) + ")";
    }
    return msg;
  }

  std::vector<LandmarkRole> roles_;
};

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size() && std::isfinite(out);
}

inline bool parse_int(std::string_view tok, long long& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size();
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "IoError: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::IoError, "IoError: read failed for " + path.string());
  return ss.str();
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidInput, path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace detail

/// Range violation in a record, if any.
inline std::optional<std::string> record_problem(const DetectionRecord& r) {
  if (r.class_id < 0) return "negative class id";
  if (!(r.cx >= 0.0 && r.cx <= 1.0 && r.cy >= 0.0 && r.cy <= 1.0)) return "box center outside [0, 1]";
  if (!(r.w > 0.0 && r.w <= 1.0 && r.h > 0.0 && r.h <= 1.0)) return "box extent outside (0, 1]";
  if (r.confidence && !(*r.confidence >= 0.0 && *r.confidence <= 1.0)) return "confidence outside [0, 1]";
  return std::nullopt;
}

inline DetectionRecord parse_label_line(std::string_view line, std::size_t line_no) {
  const auto fields = detail::split_ws(line);
  if (fields.size() != 5 && fields.size() != 6) {
    throw ParseError(line_no, "expected 5 or 6 fields, got " + std::to_string(fields.size()));
  }
  long long cls = 0;
  if (!detail::parse_int(fields[0], cls) || cls < 0 || cls > 1'000'000) {
    throw ParseError(line_no, "class id must be a non-negative integer: '" + std::string(fields[0]) + "'");
  }
  double v[5] = {};
  for (std::size_t i = 1; i < fields.size(); ++i) {
    if (!detail::parse_double(fields[i], v[i - 1])) {
      throw ParseError(line_no, "non-numeric field " + std::to_string(i + 1) + ": '" +
                                    std::string(fields[i]) + "'");
    }
  }
  DetectionRecord r;
  r.class_id = static_cast<int>(cls);
  r.cx = v[0];
  r.cy = v[1];
  r.w = v[2];
  r.h = v[3];
  if (fields.size() == 6) r.confidence = v[4];
  if (auto problem = record_problem(r)) throw ParseError(line_no, *problem);
  return r;
}

inline std::vector<DetectionRecord> parse_label_file(std::string_view text) {
  std::vector<DetectionRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r\f\v");
    if (first != std::string_view::npos && line[first] != '#') {
      records.push_back(parse_label_line(line, line_no));
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return records;
}

/// Writes records back in label-file form at full double precision.
inline std::string serialize_labels(const std::vector<DetectionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += std::to_string(r.class_id);
    for (double v : {r.cx, r.cy, r.w, r.h}) out += ' ' + shortest(v);
    if (r.confidence) out += ' ' + shortest(*r.confidence);
    out += '\n';
  }
  return out;
}

inline Point2D centroid(const DetectionRecord& r, const ImageMeta& meta) noexcept {
  return Point2D{r.cx * meta.width, r.cy * meta.height};
}

/// Inverse of centroid() with a fixed box size.
inline DetectionRecord record_for_point(int class_id, const Point2D& p, const ImageMeta& meta,
                                        double box = 0.05) {
  DetectionRecord r;
  r.class_id = class_id;
  r.cx = p.x / meta.width;
  r.cy = p.y / meta.height;
  r.w = box;
  r.h = box;
  return r;
}

class ClassRoleMap {
 public:
  ClassRoleMap() = default;

  explicit ClassRoleMap(std::map<int, LandmarkRole> mapping) : mapping_(std::move(mapping)) {
    validate();
  }

  /// 0 eminence, 1 talus, 2/3 plateau ends, 4 stifle, 5 tarsus.
  static ClassRoleMap standard() {
    return ClassRoleMap({{0, LandmarkRole::IntercondylarEminence},
                         {1, LandmarkRole::TalusCenter},
                         {2, LandmarkRole::MtplP1},
                         {3, LandmarkRole::MtplP2},
                         {4, LandmarkRole::StifleJoint},
                         {5, LandmarkRole::TarsusJoint}});
  }

  static ClassRoleMap from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("class_roles") || !j["class_roles"].is_object()) {
      throw Error(ErrorKind::InvalidInput, "class map: expected {\"class_roles\": {...}}");
    }
    std::map<int, LandmarkRole> mapping;
    for (const auto& [key, value] : j["class_roles"].items()) {
      long long id = 0;
      if (!detail::parse_int(key, id) || id < 0) {
        throw Error(ErrorKind::InvalidInput, "class map: bad class id '" + key + "'");
      }
      if (!value.is_string()) {
        throw Error(ErrorKind::InvalidInput, "class map: role for class " + key + " must be a string");
      }
      auto role = role_from_string(value.get<std::string>());
      if (!role) {
        throw Error(ErrorKind::InvalidInput, "class map: unknown role '" + value.get<std::string>() + "'");
      }
      mapping[static_cast<int>(id)] = *role;
    }
    return ClassRoleMap(std::move(mapping));
  }

  static ClassRoleMap load(const std::filesystem::path& path) {
    return from_json(detail::read_json_file(path));
  }

  nlohmann::json to_json() const {
    nlohmann::json roles = nlohmann::json::object();
    for (const auto& [id, role] : mapping_) roles[std::to_string(id)] = std::string(to_string(role));
    return {{"class_roles", roles}};
  }

  std::optional<LandmarkRole> role_of(int class_id) const {
    auto it = mapping_.find(class_id);
    if (it == mapping_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<int> class_of(LandmarkRole role) const {
    for (const auto& [id, r] : mapping_) {
      if (r == role) return id;
    }
    return std::nullopt;
  }

  const std::map<int, LandmarkRole>& mapping() const noexcept { return mapping_; }

 private:
  void validate() const {
    std::map<LandmarkRole, int> count;
    for (const auto& [id, role] : mapping_) ++count[role];
    for (const auto& [role, n] : count) {
      if (n > 1) {
        throw Error(ErrorKind::InvalidInput,
                    "class map: role " + std::string(to_string(role)) + " assigned to several classes");
      }
    }
    for (LandmarkRole role : kRequiredRoles) {
      if (!count.contains(role)) {
        throw Error(ErrorKind::InvalidInput,
                    "class map: required role " + std::string(to_string(role)) + " not mapped");
      }
    }
  }

  std::map<int, LandmarkRole> mapping_;
};

struct Resolution {
  CaseLandmarks landmarks;
  /// Detections whose class is not in the map.
  std::size_t ignored = 0;
};

/// Picks one detection per role: highest confidence, then larger box, then
/// first in file order.
inline Resolution resolve_landmarks(const std::vector<DetectionRecord>& records, const ImageMeta& meta,
                                    const ClassRoleMap& map) {
  std::map<LandmarkRole, const DetectionRecord*> best;
  Resolution res;
  for (const auto& r : records) {
    auto role = map.role_of(r.class_id);
    if (!role) {
      ++res.ignored;
      continue;
    }
    auto [it, inserted] = best.try_emplace(*role, &r);
    if (inserted) continue;
    const DetectionRecord& cur = *it->second;
    if (r.score() > cur.score() || (r.score() == cur.score() && r.area() > cur.area())) {
      it->second = &r;
    }
  }
  std::vector<LandmarkRole> missing;
  for (LandmarkRole role : kRequiredRoles) {
    if (!best.contains(role)) missing.push_back(role);
  }
  if (!missing.empty()) throw MissingRoleError(std::move(missing));
  for (const auto& [role, rec] : best) res.landmarks.set(role, centroid(*rec, meta));
  return res;
}

/// Converts landmarks back to one detection per mapped role.
inline std::vector<DetectionRecord> landmarks_to_records(const CaseLandmarks& lm, const ImageMeta& meta,
                                                         const ClassRoleMap& map) {
  std::vector<DetectionRecord> out;
  for (const auto& [id, role] : map.mapping()) {
    if (auto p = lm.get(role)) out.push_back(record_for_point(id, *p, meta));
  }
  return out;
}

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path labels;
  int width = 0;
  int height = 0;

  ImageMeta meta() const { return ImageMeta{width, height, image_id}; }
};

struct CaseManifest {
  std::vector<ManifestEntry> entries;
  std::optional<std::string> variant;
};

/// Relative label paths resolve against `base_dir`.
inline CaseManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_array()) throw Error(ErrorKind::InvalidInput, "manifest: expected a JSON array");
  CaseManifest manifest;
  std::set<std::string> seen;
  for (const auto& item : j) {
    try {
      ManifestEntry e;
      e.image_id = item.at("image_id").get<std::string>();
      std::filesystem::path labels = item.at("labels").get<std::string>();
      e.labels = labels.is_absolute() ? labels : base_dir / labels;
      e.width = item.at("width").get<int>();
      e.height = item.at("height").get<int>();
      if (e.width < 1 || e.height < 1) {
        throw Error(ErrorKind::InvalidInput, "manifest: " + e.image_id + " has non-positive size");
      }
      if (!seen.insert(e.image_id).second) {
        throw Error(ErrorKind::InvalidInput, "manifest: duplicate image_id " + e.image_id);
      }
      manifest.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::InvalidInput, std::string("manifest: ") + ex.what());
    }
  }
  return manifest;
}

inline CaseManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(detail::read_json_file(path), path.parent_path());
}

inline nlohmann::json manifest_to_json(const CaseManifest& m, const std::filesystem::path& base_dir = {}) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : m.entries) {
    const auto rel = base_dir.empty() ? e.labels : e.labels.lexically_relative(base_dir);
    arr.push_back({{"image_id", e.image_id}, {"labels", rel.generic_string()}, {"width", e.width},
                   {"height", e.height}});
  }
  return arr;
}

/// Reads, parses and resolves one manifest entry. Errors keep their kind
/// and gain the image id as context.
inline Resolution load_case(const ManifestEntry& entry, const ClassRoleMap& map) {
  const std::string ctx = "image " + entry.image_id;
  try {
    const std::string text = detail::read_file(entry.labels);
    return resolve_landmarks(parse_label_file(text), entry.meta(), map);
  } catch (const MissingRoleError& e) {
    throw MissingRoleError(e.roles(), ctx);
  } catch (const Error& e) {
    throw Error(e.kind(), ctx + ": " + e.what());
  }
}

}  // namespace stifle_tpa
