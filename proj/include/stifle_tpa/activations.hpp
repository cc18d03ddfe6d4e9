#pragma once

// The five detector activation functions (Linear, ReLU, Leaky ReLU, Swish,
// Mish) with overflow-safe evaluation, plus dense-grid comparison helpers.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stifle_tpa/error.hpp"
#include "stifle_tpa/format.hpp"

namespace stifle_tpa::activations {

enum class Kind { Linear, Relu, LeakyRelu, Swish, Mish };

inline constexpr std::array<Kind, 5> kAllKinds = {Kind::Linear, Kind::Relu, Kind::LeakyRelu,
                                                  Kind::Swish, Kind::Mish};

constexpr std::string_view to_string(Kind k) noexcept {
  switch (k) {
    case Kind::Linear: return "linear";
    case Kind::Relu: return "relu";
    case Kind::LeakyRelu: return "leaky";
    case Kind::Swish: return "swish";
    case Kind::Mish: return "mish";
  }
  return "unknown";
}

struct Params {
  double m = 1.0;     // linear slope
  double a = 0.01;    // leaky negative-side slope
  double beta = 1.0;  // swish gate

  void validate() const {
    if (!std::isfinite(m) || !std::isfinite(a) || !std::isfinite(beta) || a < 0.0 || beta < 0.0) {
      throw Error(ErrorKind::InvalidInput, "activation params must be finite with a >= 0, beta >= 0");
    }
  }
};

/// ln(1 + e^x). Above the threshold the exp would lose the 1 anyway and
/// eventually overflow, so the identity x + ln(1 + e^-x) is used.
inline double softplus(double x) noexcept {
  constexpr double kThreshold = 20.0;
  return x > kThreshold ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double eval(Kind kind, const Params& p, double x) {
  if (!std::isfinite(x)) throw Error(ErrorKind::InvalidInput, "activation input must be finite");
  switch (kind) {
    case Kind::Linear: return p.m * x;
    case Kind::Relu: return x > 0.0 ? x : 0.0;
    case Kind::LeakyRelu: return x > 0.0 ? x : p.a * x;
    case Kind::Swish: return x * sigmoid(p.beta * x);
    case Kind::Mish: return x * std::tanh(softplus(x));
  }
  return 0.0;
}

inline double eval(Kind kind, double x) { return eval(kind, Params{}, x); }

/// Points lo, lo+step, ... up to and including hi (within a 1e-9 step slack).
inline std::vector<double> grid(double lo, double hi, double step) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && std::isfinite(step)) || !(lo < hi) || !(step > 0.0)) {
    throw Error(ErrorKind::InvalidInterval, "InvalidInterval: need lo < hi and step > 0");
  }
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> xs;
  xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) xs.push_back(lo + static_cast<double>(i) * step);
  return xs;
}

struct Gap {
  double gap = 0.0;
  double at_x = 0.0;
};

/// Largest |f_a - f_b| on the grid; ties keep the first x.
inline Gap max_abs_gap(Kind a, Kind b, const Params& p, double lo, double hi, double step) {
  p.validate();
  Gap best{-1.0, lo};
  for (double x : grid(lo, hi, step)) {
    const double g = std::abs(eval(a, p, x) - eval(b, p, x));
    if (g > best.gap) best = {g, x};
  }
  return best;
}

struct Extremum {
  double x = 0.0;
  double value = 0.0;
};

/// Grid scan followed by golden-section refinement around the best sample.
inline Extremum find_minimum(Kind kind, const Params& p, double lo, double hi, double step = 1e-2,
                             double tol = 1e-12) {
  p.validate();
  const auto pts = grid(lo, hi, step);
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (eval(kind, p, pts[i]) < eval(kind, p, pts[best])) best = i;
  }
  double a = pts[best == 0 ? 0 : best - 1];
  double b = pts[best + 1 < pts.size() ? best + 1 : best];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  for (int iter = 0; iter < 200 && std::abs(b - a) > tol; ++iter) {
    if (eval(kind, p, c) < eval(kind, p, d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - inv_phi * (b - a);
    d = a + inv_phi * (b - a);
  }
  const double x = (a + b) / 2.0;
  return {x, eval(kind, p, x)};
}

/// CSV with columns x,linear,relu,leaky,swish,mish for plotting.
inline std::string table_csv(double lo, double hi, double step, const Params& p = {}) {
  p.validate();
  std::string out = "x,linear,relu,leaky,swish,mish\n";
  for (double x : grid(lo, hi, step)) {
    out += shortest(x);
    for (Kind k : kAllKinds) out += ',' + shortest(eval(k, p, x));
    out += '\n';
  }
  return out;
}

}  // namespace stifle_tpa::activations
