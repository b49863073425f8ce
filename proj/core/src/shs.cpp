#include "aoi/shs.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>

#include "aoi/error.hpp"

namespace aoi::shs {

ResetMap::ResetMap(std::size_t dim, std::vector<std::uint8_t> entries)
    : dim_(dim), entries_(std::move(entries)) {
  if (dim_ == 0 || entries_.size() != dim_ * dim_) {
    throw InvalidModel("reset map must be a non-empty square matrix");
  }
  for (auto e : entries_) {
    if (e > 1) throw InvalidModel("reset map entries must be 0 or 1");
  }
}

ResetMap ResetMap::identity(std::size_t dim) {
  std::vector<std::uint8_t> e(dim * dim, 0);
  for (std::size_t i = 0; i < dim; ++i) e[i * dim + i] = 1;
  return ResetMap(dim, std::move(e));
}

ResetMap ResetMap::zero(std::size_t dim) {
  return ResetMap(dim, std::vector<std::uint8_t>(dim * dim, 0));
}

std::vector<double> ResetMap::apply(std::span<const double> x) const {
  std::vector<double> y(dim_, 0.0);
  for (std::size_t r = 0; r < dim_; ++r) {
    for (std::size_t c = 0; c < dim_; ++c) {
      if (at(r, c)) y[c] += x[r];
    }
  }
  return y;
}

ShsModel::ShsModel(std::size_t num_states, std::size_t age_dim)
    : num_states_(num_states), age_dim_(age_dim), monitor_(age_dim - 1),
      drift_(num_states * age_dim, 1.0) {
  if (num_states == 0 || age_dim == 0) {
    throw InvalidModel("SHS model needs at least one state and one age component");
  }
}

std::span<const double> ShsModel::drift(std::size_t state) const {
  return std::span<const double>(drift_).subspan(state * age_dim_, age_dim_);
}

void ShsModel::add_transition(Transition t) {
  if (t.from_state >= num_states_ || t.to_state >= num_states_) {
    throw InvalidModel("transition state index out of range");
  }
  if (!(t.rate > 0.0) || !std::isfinite(t.rate)) {
    throw InvalidModel("transition rate must be positive and finite");
  }
  if (t.reset.dim() != age_dim_) {
    throw InvalidModel("reset map dimension does not match the age vector");
  }
  transitions_.push_back(std::move(t));
}

void ShsModel::add_transition(std::size_t from, std::size_t to, double rate, ResetMap reset) {
  add_transition(Transition{from, to, rate, std::move(reset)});
}

void ShsModel::set_drift(std::size_t state, std::vector<double> drift) {
  if (state >= num_states_ || drift.size() != age_dim_) {
    throw InvalidModel("drift must have one entry per age component");
  }
  std::copy(drift.begin(), drift.end(), drift_.begin() + static_cast<std::ptrdiff_t>(state * age_dim_));
}

void ShsModel::set_monitor_component(std::size_t component) {
  if (component >= age_dim_) throw InvalidModel("monitor component out of range");
  monitor_ = component;
}

std::vector<double> ShsModel::exit_rates() const {
  std::vector<double> out(num_states_, 0.0);
  for (const auto& t : transitions_) out[t.from_state] += t.rate;
  return out;
}

double ShsModel::max_rate() const {
  double m = 0.0;
  for (const auto& t : transitions_) m = std::max(m, t.rate);
  return m;
}

namespace {

std::vector<bool> reachable(std::size_t n, const std::vector<Transition>& ts, bool forward) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& t : ts) {
    if (forward) {
      adj[t.from_state].push_back(t.to_state);
    } else {
      adj[t.to_state].push_back(t.from_state);
    }
  }
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    auto s = stack.back();
    stack.pop_back();
    for (auto d : adj[s]) {
      if (!seen[d]) {
        seen[d] = true;
        stack.push_back(d);
      }
    }
  }
  return seen;
}

}  // namespace

bool ShsModel::strongly_connected() const {
  auto fwd = reachable(num_states_, transitions_, true);
  auto bwd = reachable(num_states_, transitions_, false);
  return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
         std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

void ShsModel::validate() const {
  if (num_states_ > 1 && transitions_.empty()) {
    throw NonErgodic("model has no transitions");
  }
  if (!strongly_connected()) {
    throw NonErgodic("transition graph is not strongly connected");
  }
}

void ShsModel::dump(std::ostream& os) const {
  os << "states " << num_states_ << " age_dim " << age_dim_ << " monitor " << monitor_ << '\n';
  for (std::size_t q = 0; q < num_states_; ++q) {
    os << "drift " << q;
    for (double d : drift(q)) os << ' ' << d;
    os << '\n';
  }
  for (const auto& t : transitions_) {
    os << "transition " << t.from_state << " -> " << t.to_state << " rate " << t.rate << " reset";
    for (std::size_t r = 0; r < age_dim_; ++r) {
      os << (r == 0 ? " [" : " ");
      for (std::size_t c = 0; c < age_dim_; ++c) os << int(t.reset.at(r, c));
    }
    os << "]\n";
  }
}

namespace {

Eigen::VectorXd lu_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  // rcond is an estimate; only reject the hopeless cases here and let the
  // residual check decide the rest.
  if (!(lu.rcond() > 1e-300)) {
    throw SingularSystem(std::string(what) + ": matrix is singular");
  }
  Eigen::VectorXd x = lu.solve(b);
  if (!x.allFinite()) {
    throw SingularSystem(std::string(what) + ": solution is not finite");
  }
  return x;
}

std::string format_residual(const char* what, double r, double tol) {
  std::ostringstream os;
  os << what << " residual " << r << " exceeds tolerance " << tol;
  return os.str();
}

}  // namespace

std::vector<double> stationary_distribution(const ShsModel& model, const SolverOptions& options) {
  model.validate();
  const auto n = model.num_states();
  if (n == 1) return {1.0};

  // Balance rows: column q of the generator, transposed.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& t : model.transitions()) {
    if (t.from_state == t.to_state) continue;
    const auto i = static_cast<Eigen::Index>(t.from_state);
    const auto j = static_cast<Eigen::Index>(t.to_state);
    a(j, i) += t.rate;
    a(i, i) -= t.rate;
  }

  // The balance rows are linearly dependent; the one with the largest
  // diagonal is replaced by the normalization constraint.
  Eigen::Index norm_row = 0;
  a.diagonal().cwiseAbs().maxCoeff(&norm_row);
  Eigen::MatrixXd sys = a;
  sys.row(norm_row).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  rhs(norm_row) = 1.0;

  Eigen::VectorXd x = lu_solve(sys, rhs, "stationary distribution");

  std::vector<double> pi(n);
  for (std::size_t q = 0; q < n; ++q) {
    double p = x(static_cast<Eigen::Index>(q));
    if (p < -options.negative_tol) {
      throw SingularSystem("stationary distribution has a negative entry");
    }
    pi[q] = std::max(p, 0.0);
  }
  double total = 0.0;
  for (double p : pi) total += p;
  for (double& p : pi) p /= total;

  // Residual over all balance rows, including the replaced one.
  Eigen::Map<const Eigen::VectorXd> pv(pi.data(), static_cast<Eigen::Index>(n));
  const double residual = (a * pv).cwiseAbs().maxCoeff() / model.max_rate();
  if (!(residual <= options.residual_tol)) {
    throw SingularSystem(format_residual("stationary distribution", residual, options.residual_tol));
  }
  return pi;
}

AgeSolution solve_age(const ShsModel& model, const SolverOptions& options) {
  AgeSolution sol;
  sol.pi = stationary_distribution(model, options);

  const auto n = model.num_states();
  const auto dim = model.age_dim();
  const auto unknowns = static_cast<Eigen::Index>(n * dim);
  const auto idx = [dim](std::size_t q, std::size_t c) { return static_cast<Eigen::Index>(q * dim + c); };

  const auto exit = model.exit_rates();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(unknowns, unknowns);
  Eigen::VectorXd b(unknowns);
  for (std::size_t q = 0; q < n; ++q) {
    auto drift = model.drift(q);
    for (std::size_t c = 0; c < dim; ++c) {
      a(idx(q, c), idx(q, c)) += exit[q];
      b(idx(q, c)) = drift[c] * sol.pi[q];
    }
  }
  // Incoming transition l contributes rate * (v_from * A)_c = rate * sum_d v_from,d * A[d][c].
  for (const auto& t : model.transitions()) {
    for (std::size_t c = 0; c < dim; ++c) {
      for (std::size_t d = 0; d < dim; ++d) {
        if (t.reset.at(d, c)) a(idx(t.to_state, c), idx(t.from_state, d)) -= t.rate;
      }
    }
  }

  Eigen::VectorXd x = lu_solve(a, b, "age balance");

  // Normwise backward error; rows for states with negligible mass carry
  // values near underflow and are not meaningful one by one.
  const double denom = a.cwiseAbs().rowwise().sum().maxCoeff() * x.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff();
  const double residual = denom > 0.0 ? (a * x - b).cwiseAbs().maxCoeff() / denom : 0.0;
  if (!(residual <= options.residual_tol)) {
    throw SingularSystem(format_residual("age balance", residual, options.residual_tol));
  }
  sol.v_residual = residual;

  sol.v.assign(n, std::vector<double>(dim, 0.0));
  sol.age_vector.assign(dim, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t c = 0; c < dim; ++c) {
      double value = x(idx(q, c));
      if (value < -options.negative_tol) {
        std::ostringstream os;
        os << "age solution component v[" << q << "][" << c << "] = " << value << " is negative";
        throw NegativeSolution(os.str());
      }
      value = std::max(value, 0.0);
      sol.v[q][c] = value;
      sol.age_vector[c] += value;
    }
  }
  sol.delta = sol.age_vector[model.monitor_component()];

  // pi residual is recomputed here so callers get it alongside v.
  double pres = 0.0;
  std::vector<double> balance(n, 0.0);
  for (const auto& t : model.transitions()) {
    if (t.from_state == t.to_state) continue;
    balance[t.to_state] += t.rate * sol.pi[t.from_state];
    balance[t.from_state] -= t.rate * sol.pi[t.from_state];
  }
  for (double v : balance) pres = std::max(pres, std::abs(v));
  sol.pi_residual = pres / model.max_rate();
  return sol;
}

}  // namespace aoi::shs
