#pragma once

// Age of information on an unslotted collision channel with Poisson
// (infinite-user) update arrivals and exponential transmission times.
//
// The discrete state counts active transmitters. The age vector is
// [x1, x2]: x2 is the monitor's age, x1 is what the monitor's age would become
// if the transmission in progress completed now (x1 == x2 whenever no
// collision-free update is in flight).

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aoi/shs.hpp"

namespace aoi::collision {

struct ChannelParams {
  double lambda = 0.0;  // aggregate update rate
  double mu = 1.0;      // 1 / mean transmission time
  double p_c = 1.0;     // P(collision-free update is received)

  static ChannelParams from_load(double rho, double mu = 1.0, double p_c = 1.0) {
    return {rho * mu, mu, p_c};
  }

  double rho() const { return lambda / mu; }
  double p_e() const { return 1.0 - p_c; }

  // Throws InvalidParams unless lambda > 0, mu > 0 and 0 < p_c <= 1.
  void validate() const;
};

// Ranges outside of which results are computed but less trustworthy.
inline constexpr double kMaxSupportedRho = 10.0;
inline constexpr std::size_t kMaxSupportedTruncation = 500;
inline constexpr std::size_t kMinTruncation = 3;

struct RangeWarning {
  std::string message;
};

// Empty when (rho, M) is inside the supported range. M = 0 skips the
// truncation check.
std::vector<RangeWarning> range_warnings(const ChannelParams& params, std::size_t max_collisions = 0);

struct TruncationPolicy {
  enum class Mode { Fixed, Adaptive };

  Mode mode = Mode::Adaptive;
  std::size_t max_collisions = 60;     // M for Fixed; starting point for Adaptive
  double tail_mass_bound = 1e-12;      // Poisson mass above M
  double age_convergence_tol = 1e-9;   // |D_M - D_{M+step}| / D_M
  std::size_t step = 10;

  static TruncationPolicy fixed(std::size_t m) { return {Mode::Fixed, m}; }
  static TruncationPolicy adaptive() { return {}; }
};

// Poisson(rho) tail probabilities beta_j = P{K >= j} and the normalized tails
// gamma_j = sum_{k>=0} j! rho^k / (j+k)!, for j = 0..size()-1. Index 0 is
// carried for convenience (beta_0 = 1, gamma_0 = e^rho).
struct SeriesTerms {
  double rho = 0.0;
  std::vector<double> beta;
  std::vector<double> gamma;
  std::size_t truncation = 0;  // last j with a non-negligible beta_j

  double beta_at(std::size_t j) const { return j < beta.size() ? beta[j] : 0.0; }
  double gamma_at(std::size_t j) const;
};

// Throws InvalidParams for rho <= 0 or non-finite rho.
SeriesTerms compute_series(double rho);

// The chain on states 0..M. Throws InvalidParams for bad params or M < 3.
shs::ShsModel build_chain(const ChannelParams& params, std::size_t max_collisions);

// Average system age D_M of the truncated chain via the generic SHS solver.
double system_age_truncated(const ChannelParams& params, std::size_t max_collisions,
                            const shs::SolverOptions& options = {});

struct TruncatedAge {
  double delta = 0.0;
  std::size_t max_collisions = 0;
  bool converged = false;
};

// Grows M by policy.step until the Poisson tail above M and the change in D_M
// both fall under the policy bounds, or M reaches kMaxSupportedTruncation.
TruncatedAge system_age_truncated(const ChannelParams& params, const TruncationPolicy& policy,
                                  const shs::SolverOptions& options = {});

// Limiting average system age as a convergent series.
double system_age_closed_form(const ChannelParams& params);

// Scalar age components from the forward recursion of the truncated chain.
// v[k] is the (common) component of state k for k != 1; v[1] is unused.
struct RecursionSolution {
  double v0 = 0.0;
  double v11 = 0.0;
  double v12 = 0.0;
  std::vector<double> v;
  double delta = 0.0;
};

RecursionSolution appendix_recursion(const ChannelParams& params, std::size_t max_collisions);
double appendix_recursion_age(const ChannelParams& params, std::size_t max_collisions);

// (1 + 1/rho) e^rho / (mu p_c).
double lower_bound(const ChannelParams& params);

// Infinite-user slotted Aloha with unit slots: 1/2 + e^rho / rho.
double slotted_age(double rho);

// Individual age of one of n_sources sources sharing the aggregate rate.
// params.p_c is ignored: a collision-free update belongs to the selected
// source with probability 1/n_sources and is always received.
double individual_age(const ChannelParams& params, std::size_t n_sources);

// (1 + 1/rho) e^rho.
double asymptotic_individual_age(double rho);

struct LoadObjective {
  enum class Kind { SystemAge, AsymptoticIndividual };

  Kind kind = Kind::SystemAge;
  double p_c = 1.0;
  double mu = 1.0;

  static LoadObjective system_age(double p_c = 1.0, double mu = 1.0) {
    return {Kind::SystemAge, p_c, mu};
  }
  static LoadObjective asymptotic_individual() { return {Kind::AsymptoticIndividual}; }

  double operator()(double rho) const;
};

struct LoadOptimum {
  double rho_star = 0.0;
  double value_star = 0.0;
};

inline constexpr double kDefaultBracketLo = 0.01;
inline constexpr double kDefaultBracketHi = 5.0;

LoadOptimum optimize_load(const LoadObjective& objective, double rho_lo = kDefaultBracketLo,
                          double rho_hi = kDefaultBracketHi, double tol = 1e-6);

}  // namespace aoi::collision
