#include "aoi/collision.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aoi/error.hpp"
#include "aoi/optimize.hpp"

namespace aoi::collision {

namespace {

// Relative size below which series terms are dropped.
constexpr double kSeriesEps = 1e-17;
// Extra gamma terms above the beta truncation; the seed error is damped by
// rho/(j+1) on every downward step.
constexpr std::size_t kGammaPadding = 30;

void require_load(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    std::ostringstream os;
    os << "offered load must be positive and finite, got " << rho;
    throw InvalidParams(os.str());
  }
}

void require_truncation(std::size_t m) {
  if (m < kMinTruncation) {
    std::ostringstream os;
    os << "truncation level must be at least " << kMinTruncation << ", got " << m;
    throw InvalidParams(os.str());
  }
}

// Everything in the series except the leading (1+rho)e^rho / (mu rho p) term.
double collision_period_terms(const SeriesTerms& s, double mu) {
  const double rho = s.rho;
  double total = s.beta_at(1) + (3.0 + rho) * s.beta_at(2) / 2.0 +
                 rho * (1.0 + rho) * s.beta_at(2) * s.gamma_at(3) / 6.0;
  double tail = 0.0;
  for (std::size_t j = 3; j <= s.truncation; ++j) {
    const double term = s.beta[j] * s.gamma[j] / static_cast<double>(j);
    tail += term;
    if (static_cast<double>(j) > rho && term < kSeriesEps * tail) break;
  }
  return (total + tail) / mu;
}

}  // namespace

void ChannelParams::validate() const {
  std::ostringstream os;
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    os << "arrival rate must be positive and finite, got " << lambda;
  } else if (!(mu > 0.0) || !std::isfinite(mu)) {
    os << "service rate must be positive and finite, got " << mu;
  } else if (!(p_c > 0.0 && p_c <= 1.0)) {
    os << "success probability must lie in (0, 1], got " << p_c;
  } else {
    return;
  }
  throw InvalidParams(os.str());
}

std::vector<RangeWarning> range_warnings(const ChannelParams& params, std::size_t max_collisions) {
  std::vector<RangeWarning> out;
  if (params.rho() > kMaxSupportedRho) {
    std::ostringstream os;
    os << "offered load " << params.rho() << " exceeds the supported range (0, " << kMaxSupportedRho
       << "]; series results lose accuracy";
    out.push_back({os.str()});
  }
  if (max_collisions > kMaxSupportedTruncation) {
    std::ostringstream os;
    os << "truncation level " << max_collisions << " exceeds the supported maximum "
       << kMaxSupportedTruncation;
    out.push_back({os.str()});
  }
  return out;
}

double SeriesTerms::gamma_at(std::size_t j) const {
  if (j < gamma.size()) return gamma[j];
  // Far tail: gamma_j -> 1 / (1 - rho/(j+1)).
  return 1.0 / (1.0 - rho / static_cast<double>(j + 1));
}

SeriesTerms compute_series(double rho) {
  require_load(rho);
  SeriesTerms s;
  s.rho = rho;

  // Poisson pmf by term recurrence, until well past the mode and negligible
  // against P{K >= 1}.
  const double beta1 = -std::expm1(-rho);
  std::vector<double> pmf{std::exp(-rho)};
  for (std::size_t i = 1;; ++i) {
    pmf.push_back(pmf.back() * rho / static_cast<double>(i));
    if (static_cast<double>(i) > rho + 1.0 && i >= 4 && pmf.back() < kSeriesEps * beta1) break;
  }
  const std::size_t last = pmf.size() - 1;
  s.truncation = last;

  // Tail sums accumulated from the small end.
  s.beta.assign(last + 2, 0.0);
  for (std::size_t j = last + 1; j-- > 0;) s.beta[j] = s.beta[j + 1] + pmf[j];
  s.beta[0] = 1.0;
  s.beta[1] = beta1;
  s.beta.pop_back();

  const std::size_t top = last + kGammaPadding;
  s.gamma.assign(top + 1, 0.0);
  s.gamma[top] = 1.0 / (1.0 - rho / static_cast<double>(top + 1));
  for (std::size_t j = top; j-- > 0;) {
    s.gamma[j] = 1.0 + rho * s.gamma[j + 1] / static_cast<double>(j + 1);
  }
  return s;
}

shs::ShsModel build_chain(const ChannelParams& params, std::size_t max_collisions) {
  params.validate();
  require_truncation(max_collisions);

  using shs::ResetMap;
  const ResetMap start_fresh(2, {0, 0, 0, 1});  // [x1 x2] -> [0 x2]
  const ResetMap deliver(2, {1, 1, 0, 0});      // [x1 x2] -> [x1 x1]
  const ResetMap spoil(2, {0, 0, 1, 1});        // [x1 x2] -> [x2 x2]
  const ResetMap keep = ResetMap::identity(2);

  const double lambda = params.lambda;
  const double mu = params.mu;
  shs::ShsModel model(max_collisions + 1, 2);
  model.add_transition(0, 1, lambda, start_fresh);
  model.add_transition(1, 0, params.p_c * mu, deliver);
  if (params.p_e() > 0.0) model.add_transition(1, 0, params.p_e() * mu, spoil);
  model.add_transition(1, 2, lambda, spoil);
  for (std::size_t k = 2; k < max_collisions; ++k) model.add_transition(k, k + 1, lambda, keep);
  for (std::size_t k = 2; k <= max_collisions; ++k) {
    model.add_transition(k, k - 1, static_cast<double>(k) * mu, keep);
  }
  return model;
}

double system_age_truncated(const ChannelParams& params, std::size_t max_collisions,
                            const shs::SolverOptions& options) {
  return shs::solve_age(build_chain(params, max_collisions), options).delta;
}

TruncatedAge system_age_truncated(const ChannelParams& params, const TruncationPolicy& policy,
                                  const shs::SolverOptions& options) {
  params.validate();
  if (policy.mode == TruncationPolicy::Mode::Fixed) {
    return {system_age_truncated(params, policy.max_collisions, options), policy.max_collisions, true};
  }
  if (policy.step == 0) throw InvalidParams("adaptive truncation step must be positive");

  const auto series = compute_series(params.rho());
  std::size_t m = std::max(policy.max_collisions, kMinTruncation);
  double current = system_age_truncated(params, m, options);
  while (m + policy.step <= kMaxSupportedTruncation) {
    const double next = system_age_truncated(params, m + policy.step, options);
    const bool tail_ok = series.beta_at(m + 1) < policy.tail_mass_bound;
    const bool age_ok = std::abs(current - next) < policy.age_convergence_tol * current;
    if (tail_ok && age_ok) return {current, m, true};
    m += policy.step;
    current = next;
  }
  return {current, m, false};
}

double system_age_closed_form(const ChannelParams& params) {
  params.validate();
  const double rho = params.rho();
  const auto s = compute_series(rho);
  return (1.0 + rho) * std::exp(rho) / (params.mu * params.p_c * rho) + collision_period_terms(s, params.mu);
}

RecursionSolution appendix_recursion(const ChannelParams& params, std::size_t max_collisions) {
  params.validate();
  require_truncation(max_collisions);
  const double rho = params.rho();
  const double mu = params.mu;
  const std::size_t m = max_collisions;

  // Truncated Poisson weights rho^k/k!, normalized, then tail sums
  // beta_{k|M} = sum_{i=k}^{M} pi_i.
  std::vector<double> pi(m + 1);
  pi[0] = 1.0;
  for (std::size_t k = 1; k <= m; ++k) pi[k] = pi[k - 1] * rho / static_cast<double>(k);
  double norm = 0.0;
  for (std::size_t k = m + 1; k-- > 0;) norm += pi[k];
  for (double& p : pi) p /= norm;
  std::vector<double> tail(m + 2, 0.0);
  for (std::size_t k = m + 1; k-- > 0;) tail[k] = tail[k + 1] + pi[k];

  RecursionSolution r;
  r.v0 = (1.0 + rho) / (mu * rho * params.p_c);
  r.v11 = rho * rho * r.v0 / (1.0 + rho) + tail[1] / mu;
  r.v12 = rho * r.v0 + tail[1] / mu;
  r.v.assign(m + 1, 0.0);
  r.v[0] = r.v0;
  r.v[2] = rho * rho * r.v0 / 2.0 + (tail[2] + rho * tail[1]) / (2.0 * mu);
  for (std::size_t k = 3; k <= m; ++k) {
    const double kd = static_cast<double>(k);
    r.v[k] = rho / kd * r.v[k - 1] + tail[k] / (kd * mu);
  }

  double collision_sum = 0.0;
  for (std::size_t k = m + 1; k-- > 3;) collision_sum += r.v[k];
  r.delta = r.v0 + r.v12 + r.v[2] + collision_sum;
  return r;
}

double appendix_recursion_age(const ChannelParams& params, std::size_t max_collisions) {
  return appendix_recursion(params, max_collisions).delta;
}

double lower_bound(const ChannelParams& params) {
  params.validate();
  return asymptotic_individual_age(params.rho()) / (params.mu * params.p_c);
}

double slotted_age(double rho) {
  require_load(rho);
  return 0.5 + std::exp(rho) / rho;
}

double individual_age(const ChannelParams& params, std::size_t n_sources) {
  if (n_sources == 0) throw InvalidParams("number of sources must be at least 1");
  ChannelParams selected = params;
  selected.p_c = 1.0;
  selected.validate();
  const double rho = selected.rho();
  const auto s = compute_series(rho);
  return static_cast<double>(n_sources) * (1.0 + rho) * std::exp(rho) / (selected.mu * rho) +
         collision_period_terms(s, selected.mu);
}

double asymptotic_individual_age(double rho) {
  require_load(rho);
  return (1.0 + 1.0 / rho) * std::exp(rho);
}

double LoadObjective::operator()(double rho) const {
  switch (kind) {
    case Kind::SystemAge:
      return system_age_closed_form(ChannelParams::from_load(rho, mu, p_c));
    case Kind::AsymptoticIndividual:
      return asymptotic_individual_age(rho);
  }
  return 0.0;
}

LoadOptimum optimize_load(const LoadObjective& objective, double rho_lo, double rho_hi, double tol) {
  if (objective.kind == LoadObjective::Kind::SystemAge) {
    ChannelParams::from_load(1.0, objective.mu, objective.p_c).validate();
  }
  if (!(rho_lo > 0.0)) throw BracketError("search interval must lie in rho > 0");
  const auto best = golden_section_minimize([&](double rho) { return objective(rho); }, rho_lo, rho_hi, tol);
  return {best.x, best.fx};
}

}  // namespace aoi::collision
