#pragma once

// Synthetic landmark sets with known TPA.
//
// The FTL is centred on the image: E and T sit at -/+ ftl_length/2 along the
// orientation angle (degrees, image coordinates). The plateau line passes
// through E with its direction rotated (90 - tpa) degrees from the FTL, so the
// forward construction returns exactly tpa. Stifle and tarsus markers sit a
// short distance beyond E and T along the axis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stifle_tpa/error.hpp"
#include "stifle_tpa/format.hpp"
#include "stifle_tpa/geometry.hpp"
#include "stifle_tpa/ingest.hpp"
#include "stifle_tpa/rng.hpp"

namespace stifle_tpa::synth {

struct SynthConfig {
  std::size_t n_cases = 100;
  double tpa_lo = 0.0;
  double tpa_hi = 45.0;
  double ftl_length = 400.0;
  double mtpl_halfspan = 60.0;
  double orientation_lo = 0.0;
  double orientation_hi = 360.0;
  double noise_std = 0.0;
  int width = 1024;
  int height = 1024;
  std::uint64_t seed = 42;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidInput, "synth config: " + what); };
    if (n_cases == 0) bad("n_cases must be positive");
    if (!(tpa_lo >= 0.0 && tpa_hi <= 90.0 && tpa_lo <= tpa_hi)) bad("tpa_range must satisfy 0 <= lo <= hi <= 90");
    if (!(ftl_length > 0.0) || !std::isfinite(ftl_length)) bad("ftl_length must be positive");
    if (!(mtpl_halfspan > 0.0) || !std::isfinite(mtpl_halfspan)) bad("mtpl_halfspan must be positive");
    if (!(orientation_lo >= 0.0 && orientation_hi <= 360.0 && orientation_lo <= orientation_hi)) {
      bad("ftl_orientation_range must lie in [0, 360]");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) bad("noise_std must be >= 0");
    if (width < 1 || height < 1) bad("image_size must be positive");
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    try {
      c.n_cases = j.value("n_cases", c.n_cases);
      if (j.contains("tpa_range")) {
        c.tpa_lo = j["tpa_range"].at(0).get<double>();
        c.tpa_hi = j["tpa_range"].at(1).get<double>();
      }
      c.ftl_length = j.value("ftl_length", c.ftl_length);
      c.mtpl_halfspan = j.value("mtpl_halfspan", c.mtpl_halfspan);
      if (j.contains("ftl_orientation_range")) {
        c.orientation_lo = j["ftl_orientation_range"].at(0).get<double>();
        c.orientation_hi = j["ftl_orientation_range"].at(1).get<double>();
      }
      c.noise_std = j.value("noise_std", c.noise_std);
      if (j.contains("image_size")) {
        c.width = j["image_size"].at(0).get<int>();
        c.height = j["image_size"].at(1).get<int>();
      }
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidInput, std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    return {{"n_cases", n_cases},
            {"tpa_range", {tpa_lo, tpa_hi}},
            {"ftl_length", ftl_length},
            {"mtpl_halfspan", mtpl_halfspan},
            {"ftl_orientation_range", {orientation_lo, orientation_hi}},
            {"noise_std", noise_std},
            {"image_size", {width, height}},
            {"seed", seed}};
  }

  ImageMeta meta(std::string image_id = {}) const { return ImageMeta{width, height, std::move(image_id)}; }
};

struct SynthCase {
  CaseLandmarks landmarks;
  double tpa_gt = 0.0;
  double orientation_deg = 0.0;
  double noise_std = 0.0;
  std::vector<DetectionRecord> records;
  ImageMeta image_meta;
};

inline std::string case_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%05zu", index);
  return buf;
}

namespace detail {

inline bool inside(const Point2D& p, const ImageMeta& meta) {
  return p.x >= 0.0 && p.x <= meta.width && p.y >= 0.0 && p.y <= meta.height;
}

inline CaseLandmarks ideal_landmarks(double tpa_gt, double orientation_deg, const SynthConfig& cfg) {
  const double theta = radians(orientation_deg);
  const double phi = radians(orientation_deg + 90.0 - tpa_gt);
  const Vec2 u{std::cos(theta), std::sin(theta)};
  const Vec2 v{std::cos(phi), std::sin(phi)};
  const Point2D c{cfg.width / 2.0, cfg.height / 2.0};
  const double half = cfg.ftl_length / 2.0;
  auto along = [](const Point2D& p, const Vec2& d, double t) { return Point2D{p.x + t * d.dx, p.y + t * d.dy}; };

  CaseLandmarks lm;
  lm.intercondylar_eminence = along(c, u, -half);
  lm.talus_center = along(c, u, half);
  lm.mtpl_p1 = along(lm.intercondylar_eminence, v, -cfg.mtpl_halfspan);
  lm.mtpl_p2 = along(lm.intercondylar_eminence, v, cfg.mtpl_halfspan);
  lm.stifle_joint = along(lm.intercondylar_eminence, u, -0.1 * cfg.ftl_length);
  lm.tarsus_joint = along(lm.talus_center, u, 0.05 * cfg.ftl_length);
  return lm;
}

inline SynthCase finish_case(CaseLandmarks lm, double tpa_gt, double orientation_deg, double noise_std,
                             ImageMeta meta) {
  for (LandmarkRole role : kAllRoles) {
    if (auto p = lm.get(role); p && !inside(*p, meta)) {
      throw Error(ErrorKind::GeometryOutOfBounds,
                  "GeometryOutOfBounds: " + std::string(to_string(role)) + " at (" + shortest(p->x) + ", " +
                      shortest(p->y) + ") outside " + std::to_string(meta.width) + "x" +
                      std::to_string(meta.height));
    }
  }
  SynthCase sc;
  sc.records = landmarks_to_records(lm, meta, ClassRoleMap::standard());
  sc.landmarks = std::move(lm);
  sc.tpa_gt = tpa_gt;
  sc.orientation_deg = orientation_deg;
  sc.noise_std = noise_std;
  sc.image_meta = std::move(meta);
  return sc;
}

}  // namespace detail

/// Noise-free case with the given angle and FTL orientation.
inline SynthCase generate_case(double tpa_gt, double orientation_deg, const SynthConfig& cfg,
                               std::string image_id = "synth_case") {
  if (!(tpa_gt >= 0.0 && tpa_gt <= 90.0)) {
    throw Error(ErrorKind::InvalidInput, "generate_case: tpa_gt outside [0, 90]");
  }
  return detail::finish_case(detail::ideal_landmarks(tpa_gt, orientation_deg, cfg), tpa_gt, orientation_deg,
                             0.0, cfg.meta(std::move(image_id)));
}

/// Case `index` of a batch. Draw order: tpa, orientation, then one normal
/// per coordinate (x then y) for each role in kAllRoles order.
inline SynthCase generate_indexed_case(const SynthConfig& cfg, std::size_t index) {
  CaseRng rng(cfg.seed, index);
  const double tpa = rng.uniform(cfg.tpa_lo, cfg.tpa_hi);
  const double orientation = rng.uniform(cfg.orientation_lo, cfg.orientation_hi);
  CaseLandmarks lm = detail::ideal_landmarks(tpa, orientation, cfg);
  for (LandmarkRole role : kAllRoles) {
    const double nx = rng.normal();
    const double ny = rng.normal();
    if (auto p = lm.get(role); p && cfg.noise_std > 0.0) {
      lm.set(role, Point2D{p->x + cfg.noise_std * nx, p->y + cfg.noise_std * ny});
    }
  }
  return detail::finish_case(std::move(lm), tpa, orientation, cfg.noise_std, cfg.meta(case_id(index)));
}

struct SynthBatch {
  std::vector<SynthCase> cases;
  std::size_t skipped = 0;
};

inline SynthBatch generate_batch(const SynthConfig& cfg) {
  cfg.validate();
  SynthBatch batch;
  batch.cases.reserve(cfg.n_cases);
  for (std::size_t i = 0; i < cfg.n_cases; ++i) {
    try {
      batch.cases.push_back(generate_indexed_case(cfg, i));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GeometryOutOfBounds) throw;
      ++batch.skipped;
    }
  }
  return batch;
}

inline nlohmann::json truth_json(const SynthBatch& batch) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : batch.cases) {
    arr.push_back({{"image_id", c.image_meta.image_id},
                   {"tpa_gt_deg", c.tpa_gt},
                   {"orientation_deg", c.orientation_deg},
                   {"noise_std", c.noise_std}});
  }
  return arr;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "IoError: cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "IoError: write failed for " + path.string());
}

/// Writes labels/<id>.txt, manifest.json, truth.json and class_map.json.
inline void write_batch(const SynthBatch& batch, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "labels", ec);
  if (ec) throw Error(ErrorKind::IoError, "IoError: cannot create " + out_dir.string() + ": " + ec.message());
  CaseManifest manifest;
  for (const auto& c : batch.cases) {
    const auto rel = std::filesystem::path("labels") / (c.image_meta.image_id + ".txt");
    write_text(out_dir / rel, serialize_labels(c.records));
    manifest.entries.push_back({c.image_meta.image_id, rel, c.image_meta.width, c.image_meta.height});
  }
  write_text(out_dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  write_text(out_dir / "truth.json", truth_json(batch).dump(2) + "\n");
  write_text(out_dir / "class_map.json", ClassRoleMap::standard().to_json().dump(2) + "\n");
}

/// Average ranks, ties share the mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mean_rank;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation (Pearson on average ranks).
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::InvalidInput, "spearman_rho: need two equal-length series of size >= 2");
  }
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct SweepRow {
  double std = 0.0;
  double mean_abs_err = 0.0;
  double p95_err = 0.0;
  std::size_t n = 0;
};

/// Recovered-minus-truth error for every case, read back through the label
/// records the way a detector output would be.
inline std::vector<double> recovery_errors(const SynthBatch& batch) {
  const auto map = ClassRoleMap::standard();
  std::vector<double> errs;
  errs.reserve(batch.cases.size());
  for (const auto& c : batch.cases) {
    try {
      const auto lm = resolve_landmarks(c.records, c.image_meta, map).landmarks;
      errs.push_back(std::abs(compute_tpa(lm, {}, c.image_meta.diagonal()).angle_deg - c.tpa_gt));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateGeometry) throw;
    }
  }
  return errs;
}

/// p95 uses the nearest-rank definition: sorted[ceil(0.95 n) - 1].
inline std::vector<SweepRow> noise_sweep(SynthConfig cfg, const std::vector<double>& stds) {
  if (stds.empty()) throw Error(ErrorKind::InvalidInput, "InvalidInput: noise sweep needs at least one std");
  std::vector<SweepRow> rows;
  for (double s : stds) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorKind::InvalidInput, "InvalidInput: negative noise std");
    cfg.noise_std = s;
    auto errs = recovery_errors(generate_batch(cfg));
    SweepRow row{s, 0.0, 0.0, errs.size()};
    if (!errs.empty()) {
      std::sort(errs.begin(), errs.end());
      row.mean_abs_err = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
      const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(errs.size())));
      row.p95_err = errs[std::max<std::size_t>(rank, 1) - 1];
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "std,mean_abs_err,p95_err,n\n";
  for (const auto& r : rows) {
    out += shortest(r.std) + ',' + shortest(r.mean_abs_err) + ',' + shortest(r.p95_err) + ',' +
           std::to_string(r.n) + '\n';
  }
  return out;
}

}  // namespace stifle_tpa::synth
