#pragma once

// Side-by-side TPA across detector variants run on the same images.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stifle_tpa/error.hpp"
#include "stifle_tpa/format.hpp"
#include "stifle_tpa/geometry.hpp"
#include "stifle_tpa/ingest.hpp"

namespace stifle_tpa::compare {

struct VariantPredictionSet {
  std::string name;
  CaseManifest manifest;
};

/// One variant's outcome on one image. Exactly one of angle or error is set.
struct Cell {
  std::optional<double> angle_deg;
  std::optional<RangeClass> range_class;
  std::optional<ErrorKind> error;
  std::string message;

  bool ok() const noexcept { return angle_deg.has_value(); }

  static Cell success(double angle, RangeClass rc) { return Cell{angle, rc, std::nullopt, {}}; }
  static Cell failure(ErrorKind kind, std::string message = {}) {
    return Cell{std::nullopt, std::nullopt, kind, std::move(message)};
  }
};

struct ComparisonRow {
  std::string image_id;
  std::vector<Cell> cells;  // parallel to ComparisonResult::variants

  /// Largest |a - b| over pairs of successful cells; empty below two.
  std::optional<double> max_disagreement() const {
    std::optional<double> lo, hi;
    for (const auto& c : cells) {
      if (!c.ok()) continue;
      lo = lo ? std::min(*lo, *c.angle_deg) : *c.angle_deg;
      hi = hi ? std::max(*hi, *c.angle_deg) : *c.angle_deg;
    }
    std::size_t n = std::count_if(cells.begin(), cells.end(), [](const Cell& c) { return c.ok(); });
    if (n < 2) return std::nullopt;
    return *hi - *lo;
  }
};

struct VariantStats {
  std::string name;
  std::size_t count = 0;  // successful cells
  std::size_t total = 0;  // rows
  std::optional<double> in_range_fraction;
  std::optional<double> mean;
  std::optional<double> min;
  std::optional<double> max;
};

struct SummaryStats {
  std::vector<VariantStats> variants;
};

struct ComparisonResult {
  std::vector<std::string> variants;
  std::vector<ComparisonRow> rows;  // sorted by image_id
  SummaryStats stats;
};

inline std::size_t variant_index(const ComparisonResult& result, const std::string& variant) {
  auto it = std::find(result.variants.begin(), result.variants.end(), variant);
  if (it == result.variants.end()) {
    throw Error(ErrorKind::UnknownVariant, "UnknownVariant: " + variant);
  }
  return static_cast<std::size_t>(it - result.variants.begin());
}

/// Normal cells over successful cells, reclassified with `thresholds`.
/// Empty (NoData) when the variant has no successful cell.
inline std::optional<double> in_range_fraction(const ComparisonResult& result, const RangeThresholds& thresholds,
                                               const std::string& variant) {
  thresholds.validate();
  const std::size_t col = variant_index(result, variant);
  std::size_t ok = 0, normal = 0;
  for (const auto& row : result.rows) {
    const Cell& c = row.cells.at(col);
    if (!c.ok()) continue;
    ++ok;
    if (classify(*c.angle_deg, thresholds) == RangeClass::Normal) ++normal;
  }
  if (ok == 0) return std::nullopt;
  return static_cast<double>(normal) / static_cast<double>(ok);
}

inline SummaryStats summarize(const ComparisonResult& result, const RangeThresholds& thresholds) {
  SummaryStats stats;
  for (std::size_t v = 0; v < result.variants.size(); ++v) {
    VariantStats s;
    s.name = result.variants[v];
    s.total = result.rows.size();
    double sum = 0.0;
    for (const auto& row : result.rows) {
      const Cell& c = row.cells[v];
      if (!c.ok()) continue;
      ++s.count;
      sum += *c.angle_deg;
      s.min = s.min ? std::min(*s.min, *c.angle_deg) : *c.angle_deg;
      s.max = s.max ? std::max(*s.max, *c.angle_deg) : *c.angle_deg;
    }
    if (s.count > 0) s.mean = sum / static_cast<double>(s.count);
    s.in_range_fraction = in_range_fraction(result, thresholds, s.name);
    stats.variants.push_back(std::move(s));
  }
  return stats;
}

namespace detail {

inline Cell evaluate_entry(const ManifestEntry& entry, const ClassRoleMap& map, const RangeThresholds& thresholds) {
  try {
    const auto res = load_case(entry, map);
    const auto tpa = compute_tpa(res.landmarks, thresholds, entry.meta().diagonal());
    return Cell::success(tpa.angle_deg, tpa.range_class);
  } catch (const Error& e) {
    return Cell::failure(e.kind(), e.what());
  }
}

}  // namespace detail

/// Rows cover the union of image ids. A variant that lacks an image gets a
/// MissingImage cell; per-image failures never abort the run.
inline ComparisonResult run_comparison(const std::vector<VariantPredictionSet>& variants, const ClassRoleMap& map,
                                       const RangeThresholds& thresholds = {}) {
  if (variants.empty()) throw Error(ErrorKind::EmptyComparison, "EmptyComparison: no variants given");
  thresholds.validate();
  ComparisonResult result;
  std::set<std::string> names;
  std::set<std::string> ids;
  for (const auto& v : variants) {
    if (!names.insert(v.name).second) {
      throw Error(ErrorKind::InvalidInput, "duplicate variant name " + v.name);
    }
    result.variants.push_back(v.name);
    for (const auto& e : v.manifest.entries) ids.insert(e.image_id);
  }
  std::map<std::string, std::size_t> row_of;
  for (const auto& id : ids) {
    row_of[id] = result.rows.size();
    result.rows.push_back(ComparisonRow{id, std::vector<Cell>(variants.size(), Cell::failure(ErrorKind::MissingImage))});
  }
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (const auto& entry : variants[v].manifest.entries) {
      result.rows[row_of.at(entry.image_id)].cells[v] = detail::evaluate_entry(entry, map, thresholds);
    }
  }
  result.stats = summarize(result, thresholds);
  return result;
}

inline std::string format_cell(const Cell& c) {
  if (c.ok()) return fixed(*c.angle_deg, 3);
  return "ERR:" + std::string(to_string(c.error.value_or(ErrorKind::InvalidInput)));
}

namespace detail {

inline std::string opt(const std::optional<double>& v, int decimals) {
  return v ? fixed(*v, decimals) : std::string("NoData");
}

}  // namespace detail

/// Header, one line per image, then '#' summary lines.
inline void emit_csv(const ComparisonResult& result, std::ostream& out) {
  out << "image_id";
  for (const auto& v : result.variants) out << ',' << v;
  out << '\n';
  for (const auto& row : result.rows) {
    out << row.image_id;
    for (const auto& c : row.cells) out << ',' << format_cell(c);
    out << '\n';
  }
  for (const auto& s : result.stats.variants) {
    out << "# variant=" << s.name << " count=" << s.count << " total=" << s.total
        << " in_range_fraction=" << detail::opt(s.in_range_fraction, 6) << " mean=" << detail::opt(s.mean, 3)
        << " min=" << detail::opt(s.min, 3) << " max=" << detail::opt(s.max, 3) << '\n';
  }
  for (const auto& row : result.rows) {
    if (auto d = row.max_disagreement()) {
      out << "# max_pairwise_disagreement image_id=" << row.image_id << " value=" << fixed(*d, 3) << '\n';
    }
  }
}

inline std::string to_csv(const ComparisonResult& result) {
  std::ostringstream ss;
  emit_csv(result, ss);
  return ss.str();
}

struct RunConfig {
  std::vector<std::pair<std::string, std::filesystem::path>> variants;
  std::filesystem::path class_map;
  RangeThresholds thresholds;

  /// Relative paths resolve against the config file's directory.
  static RunConfig load(const std::filesystem::path& path) {
    const auto j = stifle_tpa::detail::read_json_file(path);
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    RunConfig cfg;
    try {
      for (const auto& v : j.at("variants")) {
        cfg.variants.emplace_back(v.at("name").get<std::string>(), resolve(v.at("manifest").get<std::string>()));
      }
      cfg.class_map = resolve(j.at("class_map").get<std::string>());
      if (j.contains("thresholds")) {
        cfg.thresholds.lower = j["thresholds"].value("lower", cfg.thresholds.lower);
        cfg.thresholds.upper = j["thresholds"].value("upper", cfg.thresholds.upper);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidInput, path.string() + ": " + e.what());
    }
    cfg.thresholds.validate();
    return cfg;
  }
};

inline ComparisonResult run_from_config(const RunConfig& cfg) {
  std::vector<VariantPredictionSet> sets;
  for (const auto& [name, manifest] : cfg.variants) {
    auto m = load_manifest(manifest);
    m.variant = name;
    sets.push_back({name, std::move(m)});
  }
  return run_comparison(sets, ClassRoleMap::load(cfg.class_map), cfg.thresholds);
}

}  // namespace stifle_tpa::compare
