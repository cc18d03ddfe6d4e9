// stifle-tpa: command line entry point.
//
// Exit codes: 0 success, 1 usage error, 2 pipeline/runtime error.
// Machine-readable payloads go to stdout (or --out), diagnostics to stderr.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stifle_tpa/stifle_tpa.hpp"
#include "stifle_tpa/service/http.hpp"
#include "stifle_tpa/service/store.hpp"

namespace fs = std::filesystem;
using namespace stifle_tpa;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string class_map;
  double lower = 18.0;
  double upper = 25.0;
  std::string out = "-";

  RangeThresholds thresholds() const {
    RangeThresholds t{lower, upper};
    try {
      t.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return t;
  }

  ClassRoleMap load_class_map() const {
    if (class_map.empty()) throw UsageError("--class-map is required (or set STIFLE_TPA_CLASS_MAP)");
    return ClassRoleMap::load(class_map);
  }
};

void add_thresholds(CLI::App* cmd, Common& c) {
  cmd->add_option("--lower", c.lower, "Lower bound of the normal TPA range (degrees)")->capture_default_str();
  cmd->add_option("--upper", c.upper, "Upper bound of the normal TPA range (degrees)")->capture_default_str();
}

void add_class_map(CLI::App* cmd, Common& c) {
  cmd->add_option("--class-map", c.class_map, "Class-to-role map JSON")->envname("STIFLE_TPA_CLASS_MAP");
}

/// Writes to stdout for "-", else to the named file.
void emit(const std::string& out, const std::string& text) {
  if (out == "-" || out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, "IoError: cannot write " + out);
  f << text;
}

std::string compute_report(const std::string& image_id, const TpaResult& tpa, const CaseLandmarks& lm) {
  std::ostringstream s;
  s << "{\n";
  s << "  \"image_id\": " << nlohmann::json(image_id).dump() << ",\n";
  s << "  \"tpa_deg\": " << fixed(tpa.angle_deg, 3) << ",\n";
  s << "  \"range_class\": \"" << to_string(tpa.range_class) << "\",\n";
  s << "  \"landmarks\": {";
  bool first = true;
  for (LandmarkRole role : kAllRoles) {
    auto p = lm.get(role);
    if (!p) continue;
    s << (first ? "\n" : ",\n") << "    \"" << to_string(role) << "\": [" << shortest(p->x) << ", "
      << shortest(p->y) << "]";
    first = false;
  }
  s << "\n  }\n}\n";
  return s.str();
}

int cmd_compute(const Common& c, const std::string& labels, int width, int height, std::string image_id) {
  const auto thresholds = c.thresholds();
  const auto map = c.load_class_map();
  if (width < 1 || height < 1) throw UsageError("--width and --height must be positive");
  if (image_id.empty()) image_id = fs::path(labels).stem().string();
  ManifestEntry entry{image_id, labels, width, height};
  const auto res = load_case(entry, map);
  if (res.ignored > 0) std::cerr << "warning: ignored " << res.ignored << " detection(s) of unmapped classes\n";
  const auto tpa = compute_tpa(res.landmarks, thresholds, entry.meta().diagonal());
  if (tpa.mtpl_parallel_to_ftl) std::cerr << "warning: MTPL is parallel to the FTL\n";
  emit(c.out, compute_report(image_id, tpa, res.landmarks));
  return kOk;
}

int cmd_batch(const Common& c, const std::string& manifest_path) {
  const auto thresholds = c.thresholds();
  const auto map = c.load_class_map();
  const auto manifest = load_manifest(manifest_path);
  std::string csv = "image_id,tpa_deg,range_class,status\n";
  std::size_t ok = 0, normal = 0;
  for (const auto& entry : manifest.entries) {
    try {
      const auto res = load_case(entry, map);
      const auto tpa = compute_tpa(res.landmarks, thresholds, entry.meta().diagonal());
      csv += entry.image_id + ',' + fixed(tpa.angle_deg, 3) + ',' + std::string(to_string(tpa.range_class)) + ",ok\n";
      ++ok;
      if (tpa.range_class == RangeClass::Normal) ++normal;
    } catch (const Error& e) {
      csv += entry.image_id + ",,,ERR:" + std::string(to_string(e.kind())) + '\n';
      std::cerr << "error: " << e.what() << '\n';
    }
  }
  emit(c.out, csv);
  if (ok == 0) {
    std::cerr << "in_range_fraction=NoData (0 of " << manifest.entries.size() << " cases succeeded)\n";
    return kRuntime;
  }
  std::cerr << "in_range_fraction=" << fixed(double(normal) / double(ok), 6) << " (" << normal << "/" << ok
            << " successful, " << manifest.entries.size() << " total)\n";
  return kOk;
}

int cmd_compare(const Common& c, const std::string& config) {
  const auto result = compare::run_from_config(compare::RunConfig::load(config));
  emit(c.out, compare::to_csv(result));
  return kOk;
}

int cmd_synth(const Common& c, const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::vector<double>& stds) {
  auto cfg = synth::SynthConfig::from_json(detail::read_json_file(config_path));
  if (seed) cfg.seed = *seed;
  if (!stds.empty()) {
    emit(c.out, synth::sweep_csv(synth::noise_sweep(cfg, stds)));
    return kOk;
  }
  if (c.out == "-" || c.out.empty()) throw UsageError("synth needs --out <directory>");
  const auto batch = synth::generate_batch(cfg);
  synth::write_batch(batch, c.out);
  std::cerr << "generated " << batch.cases.size() << " case(s), skipped " << batch.skipped
            << " out of bounds, in " << c.out << '\n';
  return kOk;
}

activations::Kind kind_from(const std::string& name) {
  for (auto k : activations::kAllKinds) {
    if (activations::to_string(k) == name) return k;
  }
  throw UsageError("unknown activation '" + name + "'");
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Common& c, const std::string& host, int port, const std::string& data_dir) {
  service::StoreOptions opts;
  opts.data_dir = data_dir;
  opts.thresholds = c.thresholds();
  const fs::path stored_map = data_dir.empty() ? fs::path() : fs::path(data_dir) / "class_map.json";
  if (!c.class_map.empty()) {
    opts.class_map = ClassRoleMap::load(c.class_map);
  } else if (!stored_map.empty() && fs::exists(stored_map)) {
    opts.class_map = ClassRoleMap::load(stored_map);
  }
  service::CaseStore store(opts);
  if (!stored_map.empty()) synth::write_text(stored_map, opts.class_map.to_json().dump(2) + "\n");

  httplib::Server server;
  service::mount(server, store);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) {
    std::cerr << "error: cannot bind " << host << ":" << port << '\n';
    return kRuntime;
  }
  std::cerr << "listening on " << host << ":" << bound << " (" << store.count() << " case(s) loaded)\n";
  const bool ok = server.listen_after_bind();
  g_server = nullptr;
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tibial plateau angle from detector landmark predictions"};
  app.require_subcommand(1);
  Common common;

  auto* compute = app.add_subcommand("compute", "TPA for one label file, as JSON");
  std::string labels, image_id;
  int width = 0, height = 0;
  compute->add_option("--labels", labels, "Detector label file")->required();
  compute->add_option("--width", width, "Image width in pixels")->required();
  compute->add_option("--height", height, "Image height in pixels")->required();
  compute->add_option("--image-id", image_id, "Image id (defaults to the label file stem)");
  add_class_map(compute, common);
  add_thresholds(compute, common);
  compute->add_option("--out", common.out, "Output path, '-' for stdout");

  auto* batch = app.add_subcommand("batch", "TPA for every manifest entry, as CSV");
  std::string manifest;
  batch->add_option("--manifest", manifest, "Manifest JSON")->required();
  add_class_map(batch, common);
  add_thresholds(batch, common);
  batch->add_option("--out", common.out, "CSV path, '-' for stdout");

  auto* cmp = app.add_subcommand("compare", "Compare detector variants on the same images");
  std::string config;
  cmp->add_option("--config", config, "Run configuration JSON")->required();
  cmp->add_option("--out", common.out, "CSV path, '-' for stdout");

  auto* syn = app.add_subcommand("synth", "Generate synthetic ground-truth cases or a noise sweep");
  std::optional<std::uint64_t> seed;
  std::vector<double> stds;
  syn->add_option("--config", config, "Synthetic generator configuration JSON")->required();
  syn->add_option("--seed", seed, "Override the configured seed");
  syn->add_option("--stds", stds, "Noise sweep: comma-separated std devs in pixels")->delimiter(',');
  syn->add_option("--out", common.out, "Output directory (or sweep CSV path)");

  auto* act = app.add_subcommand("activations", "Activation function tables");
  act->require_subcommand(1);
  double lo = -6.0, hi = 6.0, step = 0.01;
  activations::Params params;
  auto* table = act->add_subcommand("table", "CSV of x and every activation on a grid");
  auto* gap = act->add_subcommand("gap", "Largest difference between two activations on a grid");
  std::string kind_a = "mish", kind_b = "swish";
  for (auto* sub : {table, gap}) {
    sub->add_option("--lo", lo)->capture_default_str();
    sub->add_option("--hi", hi)->capture_default_str();
    sub->add_option("--step", step)->capture_default_str();
    sub->add_option("--m", params.m, "Linear slope")->capture_default_str();
    sub->add_option("--a", params.a, "Leaky ReLU negative slope")->capture_default_str();
    sub->add_option("--beta", params.beta, "Swish gate")->capture_default_str();
    sub->add_option("--out", common.out, "Output path, '-' for stdout");
  }
  gap->add_option("--first", kind_a, "linear|relu|leaky|swish|mish")->capture_default_str();
  gap->add_option("--second", kind_b, "linear|relu|leaky|swish|mish")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the case review HTTP service");
  int port = 8080;
  std::string host = "127.0.0.1", data_dir;
  serve->add_option("--port", port, "TCP port, 0 picks a free one")->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--data-dir", data_dir, "Persistence directory (memory-only when omitted)");
  add_class_map(serve, common);
  add_thresholds(serve, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*compute) return cmd_compute(common, labels, width, height, image_id);
    if (*batch) return cmd_batch(common, manifest);
    if (*cmp) return cmd_compare(common, config);
    if (*syn) return cmd_synth(common, config, seed, stds);
    if (*table) {
      emit(common.out, activations::table_csv(lo, hi, step, params));
      return kOk;
    }
    if (*gap) {
      const auto g = activations::max_abs_gap(kind_from(kind_a), kind_from(kind_b), params, lo, hi, step);
      emit(common.out, "{\"gap\": " + shortest(g.gap) + ", \"at_x\": " + shortest(g.at_x) + "}\n");
      return kOk;
    }
    if (*serve) return cmd_serve(common, host, port, data_dir);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const service::ServiceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
