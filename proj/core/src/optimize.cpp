#include "aoi/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aoi/error.hpp"

namespace aoi {

namespace {

constexpr int kBracketSamples = 32;

// Plain golden-section narrowing of [a, b]; no bracket checks.
Minimum refine(const std::function<double(double)>& f, double a, double b, double tol) {
  Minimum m;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  m.evaluations += 2;
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
    ++m.evaluations;
  }
  m.x = 0.5 * (a + b);
  m.fx = f(m.x);
  ++m.evaluations;
  return m;
}

}  // namespace

Minimum golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                                double tol) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    std::ostringstream os;
    os << "invalid search interval [" << lo << ", " << hi << "]";
    throw BracketError(os.str());
  }
  if (!(tol > 0.0)) throw BracketError("tolerance must be positive");

  int evaluations = 2;
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi)) {
    throw BracketError("objective is not finite at the interval endpoints");
  }

  // Coarse scan: a bracket needs some interior value below both ends.
  const double h = (hi - lo) / kBracketSamples;
  const double edge = std::min(f_lo, f_hi);
  double a = lo;
  double b = hi;
  double best = edge;
  for (int i = 1; i < kBracketSamples; ++i) {
    const double x = lo + h * i;
    const double fx = f(x);
    ++evaluations;
    if (fx < best) {
      best = fx;
      a = lo + h * (i - 1);
      b = lo + h * (i + 1);
    }
  }

  Minimum result;
  if (best < edge) {
    result = refine(f, a, b, tol);
  } else {
    // A minimum inside the first or last cell escapes the scan; accept it
    // only if refining that cell lands strictly inside and below the edge.
    const bool low_side = f_lo <= f_hi;
    const double end = low_side ? lo : hi;
    result = refine(f, low_side ? lo : hi - h, low_side ? lo + h : hi, tol);
    if (!(result.fx < edge && std::abs(result.x - end) > tol)) {
      std::ostringstream os;
      os << "objective has no interior minimum on [" << lo << ", " << hi << "]";
      throw BracketError(os.str());
    }
  }
  result.evaluations += evaluations;
  return result;
}

}  // namespace aoi
