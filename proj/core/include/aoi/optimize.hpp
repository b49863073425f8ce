#pragma once

#include <functional>

namespace aoi {

struct Minimum {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
};

// Golden-section search for the minimizer of a unimodal f on [lo, hi],
// stopping once the bracketing interval is narrower than tol.
//
// Throws BracketError if the interval is empty, if f is not finite at the
// endpoints, or if no interior point is found below both endpoints.
Minimum golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                                double tol = 1e-6);

}  // namespace aoi
