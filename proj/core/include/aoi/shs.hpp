#pragma once

// Finite-state stochastic hybrid system (SHS) age solver.
//
// A model is a continuous-time Markov chain on states 0..num_states-1 whose
// transitions carry binary reset maps acting on a row vector of ages x. In
// every state x grows at the per-state drift (all ones for age tracking); a
// transition l applies x' = x * A_l. The solver computes the stationary
// distribution pi of the chain and the fixed point v of the age balance
// equations
//
//   v_q * sum_{l out of q} rate_l = drift_q * pi_q + sum_{l into q} rate_l * v_{from(l)} * A_l
//
// whose sum over q is the limiting average age vector E[x].

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace aoi::shs {

// Square binary matrix applied on the right of a row vector.
class ResetMap {
 public:
  ResetMap() = default;
  // Row-major entries; size must be dim*dim and every entry 0 or 1.
  ResetMap(std::size_t dim, std::vector<std::uint8_t> entries);

  static ResetMap identity(std::size_t dim);
  static ResetMap zero(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return entries_[row * dim_ + col]; }

  // y = x * A.
  std::vector<double> apply(std::span<const double> x) const;

  bool operator==(const ResetMap&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint8_t> entries_;
};

struct Transition {
  std::size_t from_state = 0;
  std::size_t to_state = 0;
  double rate = 0.0;
  ResetMap reset;
};

class ShsModel {
 public:
  // Ages start with unit drift in every state; the monitor component is the
  // last entry of the age vector.
  ShsModel(std::size_t num_states, std::size_t age_dim);

  std::size_t num_states() const { return num_states_; }
  std::size_t age_dim() const { return age_dim_; }
  std::size_t monitor_component() const { return monitor_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  std::span<const double> drift(std::size_t state) const;

  // Self-transitions and parallel edges are allowed. Throws InvalidModel on
  // out-of-range states, non-positive or non-finite rates, or a reset map of
  // the wrong dimension.
  void add_transition(Transition t);
  void add_transition(std::size_t from, std::size_t to, double rate, ResetMap reset);

  void set_drift(std::size_t state, std::vector<double> drift);
  void set_monitor_component(std::size_t component);

  // Sum of outgoing rates per state, self-transitions included.
  std::vector<double> exit_rates() const;
  double max_rate() const;

  // Forward and backward reachability from state 0.
  bool strongly_connected() const;

  // Throws InvalidModel / NonErgodic if the model cannot be solved.
  void validate() const;

  // One line per state, transition and reset. Debugging aid only; the format
  // is not stable.
  void dump(std::ostream& os) const;

 private:
  std::size_t num_states_;
  std::size_t age_dim_;
  std::size_t monitor_;
  std::vector<Transition> transitions_;
  std::vector<double> drift_;  // num_states x age_dim, row-major
};

struct SolverOptions {
  // Normwise relative residual (backward error) of each linear solve.
  double residual_tol = 1e-10;
  // Components of v below -negative_tol are reported as NegativeSolution;
  // anything in [-negative_tol, 0) is clamped to zero.
  double negative_tol = 1e-9;
};

struct AgeSolution {
  std::vector<double> pi;
  std::vector<std::vector<double>> v;  // v[state][component]
  std::vector<double> age_vector;      // sum_q v[q]
  double delta = 0.0;                  // age_vector[monitor_component]
  double pi_residual = 0.0;
  double v_residual = 0.0;
};

// Stationary distribution of the discrete chain. Throws NonErgodic,
// SingularSystem.
std::vector<double> stationary_distribution(const ShsModel& model,
                                            const SolverOptions& options = {});

// Full age solution. Throws NonErgodic, SingularSystem, NegativeSolution.
AgeSolution solve_age(const ShsModel& model, const SolverOptions& options = {});

}  // namespace aoi::shs
