#pragma once

// Case store behind the review service.
//
// On disk under the data directory:
//   cases/<case_id>.json   current document per case, replaced atomically
//   events.ndjson          append-only correction log, one JSON per line
//   images/<case_id>.bin   optional radiograph bytes, stored verbatim
//
// With an empty data directory the store is memory-only.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stifle_tpa/error.hpp"
#include "stifle_tpa/geometry.hpp"
#include "stifle_tpa/ingest.hpp"
#include "stifle_tpa/service/codec.hpp"

namespace stifle_tpa::service {

enum class CaseStatus { AutoComputed, Corrected, Flagged };

constexpr std::string_view to_string(CaseStatus s) noexcept {
  switch (s) {
    case CaseStatus::AutoComputed: return "AutoComputed";
    case CaseStatus::Corrected: return "Corrected";
    case CaseStatus::Flagged: return "Flagged";
  }
  return "Unknown";
}

inline std::optional<CaseStatus> status_from_string(std::string_view s) noexcept {
  for (auto st : {CaseStatus::AutoComputed, CaseStatus::Corrected, CaseStatus::Flagged}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

inline std::string iso8601_utc(std::int64_t ms) {
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
  return buf;
}

struct CorrectionEvent {
  std::string case_id;
  std::uint64_t seq = 0;  // 1-based, per case
  std::int64_t timestamp_ms = 0;
  LandmarkRole role = LandmarkRole::IntercondylarEminence;
  std::optional<Point2D> old_point;
  Point2D new_point;
  double tpa_deg = 0.0;
  std::string actor = "anonymous";

  json to_json() const {
    return {{"case_id", case_id},
            {"seq", seq},
            {"timestamp_ms", timestamp_ms},
            {"timestamp", iso8601_utc(timestamp_ms)},
            {"role", std::string(to_string(role))},
            {"old_point", old_point ? point_json(*old_point) : json(nullptr)},
            {"new_point", point_json(new_point)},
            {"tpa_deg", tpa_deg},
            {"actor", actor}};
  }

  static CorrectionEvent from_json(const json& j) {
    CorrectionEvent e;
    e.case_id = j.at("case_id").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    auto role = role_from_string(j.at("role").get<std::string>());
    if (!role) throw std::runtime_error("unknown role in event");
    e.role = *role;
    if (!j.at("old_point").is_null()) e.old_point = point_from_json(j["old_point"], "old_point");
    e.new_point = point_from_json(j.at("new_point"), "new_point");
    e.tpa_deg = j.at("tpa_deg").get<double>();
    e.actor = j.at("actor").get<std::string>();
    return e;
  }
};

/// Applies the correction log in order on top of the original landmarks.
inline CaseLandmarks replay(CaseLandmarks landmarks, const std::vector<CorrectionEvent>& events) {
  for (const auto& e : events) landmarks.set(e.role, e.new_point);
  return landmarks;
}

struct Case {
  std::string case_id;
  ImageMeta image_meta;
  CaseLandmarks original_landmarks;
  CaseLandmarks current_landmarks;
  std::optional<TpaResult> tpa;
  std::optional<ErrorKind> error;
  std::string error_message;
  CaseStatus status = CaseStatus::AutoComputed;
  std::uint64_t version = 1;
  std::optional<std::string> image_content_type;

  json summary_json() const {
    json j = {{"case_id", case_id},
              {"image_id", image_meta.image_id},
              {"status", std::string(to_string(status))},
              {"version", version},
              {"tpa_deg", tpa ? json(tpa->angle_deg) : json(nullptr)},
              {"range_class", tpa ? json(std::string(to_string(tpa->range_class))) : json(nullptr)}};
    return j;
  }

  json to_json() const {
    json j = {{"case_id", case_id},
              {"image_meta", image_meta_json(image_meta)},
              {"original_landmarks", landmarks_json(original_landmarks)},
              {"current_landmarks", landmarks_json(current_landmarks)},
              {"status", std::string(to_string(status))},
              {"version", version},
              {"tpa", tpa ? tpa_json(*tpa) : json(nullptr)},
              {"error", error ? json{{"kind", std::string(to_string(*error))}, {"message", error_message}}
                              : json(nullptr)},
              {"image", image_content_type ? json{{"content_type", *image_content_type}} : json(nullptr)}};
    return j;
  }
};

/// Recomputes the angle from current_landmarks. Degenerate geometry clears
/// the angle and records the error instead.
inline void recompute(Case& c, const RangeThresholds& thresholds) {
  try {
    c.tpa = compute_tpa(c.current_landmarks, thresholds, c.image_meta.diagonal());
    c.error.reset();
    c.error_message.clear();
  } catch (const Error& e) {
    c.tpa.reset();
    c.error = e.kind();
    c.error_message = e.what();
  }
}

struct StoreOptions {
  std::filesystem::path data_dir;
  ClassRoleMap class_map = ClassRoleMap::standard();
  RangeThresholds thresholds;
  std::function<std::int64_t()> clock;
};

struct UpdateRequest {
  std::vector<std::pair<LandmarkRole, Point2D>> changes;
  std::optional<std::uint64_t> expected_version;
  std::string actor = "anonymous";
};

class CaseStore {
 public:
  explicit CaseStore(StoreOptions options) : opts_(std::move(options)) {
    opts_.thresholds.validate();
    if (!opts_.clock) {
      opts_.clock = [] {
        using namespace std::chrono;
        return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
      };
    }
    if (!opts_.data_dir.empty()) load();
  }

  CaseStore(const CaseStore&) = delete;
  CaseStore& operator=(const CaseStore&) = delete;

  const ClassRoleMap& class_map() const noexcept { return opts_.class_map; }
  const RangeThresholds& thresholds() const noexcept { return opts_.thresholds; }

  Case create(const ImageMeta& meta, const CaseLandmarks& landmarks) {
    for (LandmarkRole role : kAllRoles) {
      if (auto p = landmarks.get(role)) check_in_bounds(role, *p, meta);
    }
    Case c;
    c.image_meta = meta;
    c.original_landmarks = landmarks;
    c.current_landmarks = landmarks;
    recompute(c, opts_.thresholds);
    c.status = c.error ? CaseStatus::Flagged : CaseStatus::AutoComputed;

    auto entry = std::make_shared<Entry>();
    std::lock_guard entry_lock(entry->m);
    {
      std::unique_lock lock(map_mutex_);
      c.case_id = make_id(++last_id_);
      entry->c = c;
      cases_.emplace(c.case_id, entry);
    }
    persist_case(entry->c);
    return entry->c;
  }

  /// Throws MissingRoleError when a required role has no detection.
  Case create_from_detections(const ImageMeta& meta, const std::vector<DetectionRecord>& records) {
    return create(meta, resolve_landmarks(records, meta, opts_.class_map).landmarks);
  }

  Case update_landmarks(const std::string& id, const UpdateRequest& req) {
    auto entry = find(id);
    if (req.changes.empty()) throw ServiceError(400, "BadRequest", "no landmarks in update");
    std::lock_guard lock(entry->m);
    Case& c = entry->c;
    if (req.expected_version && *req.expected_version != c.version) {
      throw ServiceError(409, "VersionConflict",
                         "expected version " + std::to_string(*req.expected_version) + ", case is at " +
                             std::to_string(c.version),
                         json{{"version", c.version}});
    }
    Case next = c;
    for (const auto& [role, p] : req.changes) {
      check_in_bounds(role, p, c.image_meta);
      next.current_landmarks.set(role, p);
    }
    recompute(next, opts_.thresholds);
    if (next.error) {
      throw ServiceError(409, std::string(to_string(*next.error)), next.error_message);
    }
    next.status = CaseStatus::Corrected;
    ++next.version;

    std::vector<CorrectionEvent> fresh;
    const auto now = opts_.clock();
    CaseLandmarks walk = c.current_landmarks;
    for (const auto& [role, p] : req.changes) {
      CorrectionEvent e;
      e.case_id = c.case_id;
      e.seq = entry->events.size() + fresh.size() + 1;
      e.timestamp_ms = now;
      e.role = role;
      e.old_point = walk.get(role);
      e.new_point = p;
      e.tpa_deg = next.tpa->angle_deg;
      e.actor = req.actor.empty() ? "anonymous" : req.actor;
      walk.set(role, p);
      fresh.push_back(std::move(e));
    }
    persist_case(next);
    append_events(fresh);
    c = std::move(next);
    entry->events.insert(entry->events.end(), fresh.begin(), fresh.end());
    return c;
  }

  std::optional<Case> get(const std::string& id) const {
    std::shared_ptr<Entry> entry;
    {
      std::shared_lock lock(map_mutex_);
      auto it = cases_.find(id);
      if (it == cases_.end()) return std::nullopt;
      entry = it->second;
    }
    std::lock_guard lock(entry->m);
    return entry->c;
  }

  std::size_t count() const {
    std::shared_lock lock(map_mutex_);
    return cases_.size();
  }

  std::vector<Case> list(std::size_t offset = 0, std::size_t limit = 50) const {
    std::vector<std::shared_ptr<Entry>> picked;
    {
      std::shared_lock lock(map_mutex_);
      std::size_t i = 0;
      for (const auto& [id, entry] : cases_) {
        if (i++ < offset) continue;
        if (picked.size() >= limit) break;
        picked.push_back(entry);
      }
    }
    std::vector<Case> out;
    for (const auto& e : picked) {
      std::lock_guard lock(e->m);
      out.push_back(e->c);
    }
    return out;
  }

  std::vector<CorrectionEvent> events(const std::string& id) const {
    auto entry = find(id);
    std::lock_guard lock(entry->m);
    return entry->events;
  }

  void put_image(const std::string& id, const std::string& bytes, const std::string& content_type) {
    auto entry = find(id);
    std::lock_guard lock(entry->m);
    if (!opts_.data_dir.empty()) {
      write_atomic(opts_.data_dir / "images" / (id + ".bin"), bytes);
    } else {
      entry->image = bytes;
    }
    entry->c.image_content_type = content_type.empty() ? "application/octet-stream" : content_type;
    persist_case(entry->c);
  }

  /// (bytes, content type), or empty when the case has no image.
  std::optional<std::pair<std::string, std::string>> image(const std::string& id) const {
    auto entry = find(id);
    std::lock_guard lock(entry->m);
    if (!entry->c.image_content_type) return std::nullopt;
    if (opts_.data_dir.empty()) return std::make_pair(entry->image, *entry->c.image_content_type);
    return std::make_pair(detail::read_file(opts_.data_dir / "images" / (id + ".bin")),
                          *entry->c.image_content_type);
  }

  /// Corrected cases as label files keyed by path, plus a manifest that
  /// ingest can read back.
  json export_corrections() const {
    json files = json::object();
    json manifest = json::array();
    for (const auto& c : list(0, static_cast<std::size_t>(-1))) {
      if (c.status != CaseStatus::Corrected) continue;
      const std::string path = "labels/" + c.case_id + ".txt";
      files[path] = serialize_labels(landmarks_to_records(c.current_landmarks, c.image_meta, opts_.class_map));
      manifest.push_back({{"image_id", c.case_id},
                          {"source_image_id", c.image_meta.image_id},
                          {"labels", path},
                          {"width", c.image_meta.width},
                          {"height", c.image_meta.height}});
    }
    return {{"format", "stifle-tpa-corrections/1"},
            {"class_map", opts_.class_map.to_json()},
            {"manifest", manifest},
            {"files", files}};
  }

 private:
  struct Entry {
    mutable std::mutex m;
    Case c;
    std::vector<CorrectionEvent> events;
    std::string image;  // memory-only stores
  };

  static std::string make_id(std::uint64_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "case-%06llu", static_cast<unsigned long long>(n));
    return buf;
  }

  static void check_in_bounds(LandmarkRole role, const Point2D& p, const ImageMeta& meta) {
    if (!is_finite(p) || p.x < 0.0 || p.y < 0.0 || p.x > meta.width || p.y > meta.height) {
      throw ServiceError(400, "OutOfBounds",
                         std::string(to_string(role)) + " at (" + shortest(p.x) + ", " + shortest(p.y) +
                             ") lies outside the " + std::to_string(meta.width) + "x" +
                             std::to_string(meta.height) + " image");
    }
  }

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = cases_.find(id);
    if (it == cases_.end()) throw ServiceError(404, "NotFound", "no case " + id);
    return it->second;
  }

  static void write_atomic(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << text;
      if (!out) throw Error(ErrorKind::IoError, "IoError: cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::IoError, "IoError: cannot replace " + path.string() + ": " + ec.message());
  }

  void persist_case(const Case& c) const {
    if (opts_.data_dir.empty()) return;
    write_atomic(opts_.data_dir / "cases" / (c.case_id + ".json"), c.to_json().dump(2) + "\n");
  }

  void append_events(const std::vector<CorrectionEvent>& events) {
    if (opts_.data_dir.empty()) return;
    std::lock_guard lock(log_mutex_);
    std::ofstream out(opts_.data_dir / "events.ndjson", std::ios::binary | std::ios::app);
    for (const auto& e : events) out << e.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "IoError: cannot append to events.ndjson");
  }

  [[noreturn]] static void corrupt(const std::string& what) { throw ServiceError(500, "StoreCorrupt", what); }

  static Case case_from_json(const json& j, const RangeThresholds& thresholds) {
    Case c;
    c.case_id = j.at("case_id").get<std::string>();
    c.image_meta = image_meta_from_json(j.at("image_meta"));
    c.original_landmarks = landmarks_from_json(j.at("original_landmarks"));
    c.current_landmarks = landmarks_from_json(j.at("current_landmarks"));
    auto st = status_from_string(j.at("status").get<std::string>());
    if (!st) throw std::runtime_error("bad status");
    c.status = *st;
    c.version = j.at("version").get<std::uint64_t>();
    if (j.contains("image") && j["image"].is_object()) {
      c.image_content_type = j["image"].at("content_type").get<std::string>();
    }
    recompute(c, thresholds);
    return c;
  }

  void load() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(opts_.data_dir / "cases", ec);
    if (ec) throw Error(ErrorKind::IoError, "IoError: cannot create " + opts_.data_dir.string());
    for (const auto& item : fs::directory_iterator(opts_.data_dir / "cases")) {
      if (item.path().extension() != ".json") continue;
      try {
        auto c = case_from_json(json::parse(detail::read_file(item.path())), opts_.thresholds);
        auto entry = std::make_shared<Entry>();
        entry->c = std::move(c);
        const auto digits = entry->c.case_id.substr(entry->c.case_id.find('-') + 1);
        last_id_ = std::max<std::uint64_t>(last_id_, std::stoull(digits));
        cases_.emplace(entry->c.case_id, std::move(entry));
      } catch (const std::exception& e) {
        corrupt(item.path().string() + ": " + e.what());
      }
    }
    const auto log = opts_.data_dir / "events.ndjson";
    if (fs::exists(log)) {
      std::ifstream in(log);
      std::string line;
      std::size_t n = 0;
      while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
          auto e = CorrectionEvent::from_json(json::parse(line));
          auto it = cases_.find(e.case_id);
          if (it == cases_.end()) throw std::runtime_error("event for unknown case " + e.case_id);
          it->second->events.push_back(std::move(e));
        } catch (const std::exception& ex) {
          corrupt("events.ndjson line " + std::to_string(n) + ": " + ex.what());
        }
      }
    }
    for (const auto& [id, entry] : cases_) {
      if (replay(entry->c.original_landmarks, entry->events) != entry->c.current_landmarks) {
        corrupt("case " + id + ": event log does not reproduce current landmarks");
      }
    }
  }

  StoreOptions opts_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> cases_;
  std::uint64_t last_id_ = 0;
  std::mutex log_mutex_;
};

}  // namespace stifle_tpa::service
