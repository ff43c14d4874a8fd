#include "marca/trainer.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <random>
#include <string>

#include "marca/errors.hpp"

namespace marca {

const char* to_string(Mu0Norm norm) {
  switch (norm) {
    case Mu0Norm::Spectral:
      return "spectral";
    case Mu0Norm::Frobenius:
      return "frobenius";
    case Mu0Norm::L1:
      return "l1";
  }
  return "?";
}

Mu0Norm parse_mu0_norm(const std::string& name) {
  if (name == "spectral") return Mu0Norm::Spectral;
  if (name == "frobenius") return Mu0Norm::Frobenius;
  if (name == "l1") return Mu0Norm::L1;
  throw InvalidArgument("unknown mu0 norm '" + name + "'");
}

void SolverConfig::validate() const {
  if (lambda && !(std::isfinite(*lambda) && *lambda > 0.0))
    throw InvalidArgument("lambda must be positive");
  if (!(std::isfinite(eps) && eps > 0.0))
    throw InvalidArgument("eps must be positive");
  if (t_max < 1) throw InvalidArgument("t_max must be >= 1");
  if (!(std::isfinite(rho) && rho > 1.0))
    throw InvalidArgument("rho must be > 1");
  if (!(std::isfinite(mu_max) && mu_max > 0.0))
    throw InvalidArgument("mu_max must be positive");
  if (!(std::isfinite(mu0_scale) && mu0_scale > 0.0))
    throw InvalidArgument("mu0_scale must be positive");
}

double SolverConfig::resolved_lambda(Index features, Index samples) const {
  if (lambda) return *lambda;
  return 2.0 / std::sqrt(static_cast<double>(std::max(features, samples)));
}

double initial_mu(const Matrix& X, const SolverConfig& config) {
  double norm = 0.0;
  switch (config.mu0_norm) {
    case Mu0Norm::Spectral:
      norm = proxops::spectral_norm(X);
      break;
    case Mu0Norm::Frobenius:
      norm = X.norm();
      break;
    case Mu0Norm::L1:
      norm = X.cwiseAbs().sum();
      break;
  }
  if (norm == 0.0) norm = 1.0;
  return std::min(config.mu0_scale / norm, config.mu_max);
}

TrainState initial_state(const TrainingSet& ts, const SolverConfig& config) {
  TrainState s;
  std::mt19937_64 rng(config.seed);
  for (Index i = 0; i < ts.schema.size(); ++i)
    s.bases.push_back(proxops::random_orthonormal(
        ts.features(), ts.schema.instantiation_count(i), rng));
  s.bank = SelectorBank::zeros(ts.schema);
  s.G = Matrix::Zero(ts.features(), ts.samples());
  s.E = s.G;
  s.Lambda = s.G;
  s.mu = initial_mu(ts.X, config);
  s.mu_history.push_back(s.mu);
  return s;
}

Matrix attribute_part(const TrainState& state, const TrainingSet& ts,
                      Index attr) {
  return state.bases.at(attr) * materialize_h(state.bank, ts, attr);
}

Matrix shared_part(const TrainState& state, const TrainingSet& ts) {
  Matrix sum = Matrix::Zero(ts.features(), ts.samples());
  for (Index i = 0; i < ts.schema.size(); ++i)
    sum += attribute_part(state, ts, i);
  return sum;
}

Vector update_h(TrainState& state, const TrainingSet& ts, Index attr,
                Index inst) {
  const auto& cols = columns_of(ts, attr, inst);
  const Index J = ts.schema.size();
  Vector acc = Vector::Zero(ts.features());
  for (Index n : cols) {
    Vector r = ts.X.col(n) - state.G.col(n) - state.E.col(n) +
               state.Lambda.col(n) / state.mu;
    for (Index k = 0; k < J; ++k) {
      if (k == attr) continue;
      r -= state.bases[k] * state.bank.selector(k, ts.label_index[k][n]);
    }
    acc += r;
  }
  Vector h = state.bases[attr].transpose() * acc /
             static_cast<double>(cols.size());
  state.bank.selector(attr, inst) = h;
  return h;
}

const Matrix& update_f(TrainState& state, const TrainingSet& ts, Index attr) {
  Matrix r = ts.X - state.G - state.E + state.Lambda / state.mu;
  for (Index k = 0; k < ts.schema.size(); ++k)
    if (k != attr) r -= attribute_part(state, ts, k);
  const Matrix h = materialize_h(state.bank, ts, attr);
  state.bases[attr] = proxops::procrustes(r * h.transpose());
  return state.bases[attr];
}

const Matrix& update_g(TrainState& state, const TrainingSet& ts) {
  const Matrix r =
      ts.X - shared_part(state, ts) - state.E + state.Lambda / state.mu;
  state.G = proxops::svt(r, 1.0 / state.mu);
  return state.G;
}

Matrix error_target(const TrainState& state, const TrainingSet& ts) {
  return ts.X - shared_part(state, ts) - state.G + state.Lambda / state.mu;
}

Matrix augmented_residual(const TrainState& state, const TrainingSet& ts) {
  return error_target(state, ts) - state.E;
}

const Matrix& update_e(TrainState& state, const TrainingSet& ts,
                       double lambda) {
  const Matrix target = error_target(state, ts);
  const Matrix shrunk = proxops::shrink(target, lambda / state.mu);
  state.E = (ts.W.array() == 1.0).select(shrunk, target);
  return state.E;
}

void update_duals(TrainState& state, const TrainingSet& ts, double rho,
                  double mu_max) {
  state.Lambda +=
      state.mu * (ts.X - shared_part(state, ts) - state.G - state.E);
  state.mu = std::min(rho * state.mu, mu_max);
}

double normalized_residual(const TrainState& state, const TrainingSet& ts,
                           ResidualForm form) {
  const double xnorm = ts.X.norm();
  if (xnorm == 0.0) return 0.0;
  Matrix r = ts.X - shared_part(state, ts) - state.G;
  if (form == ResidualForm::Masked)
    r -= (ts.W.array() * state.E.array()).matrix();
  else
    r -= state.E;
  return r.norm() / xnorm;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool same_config(const SolverConfig& a, const SolverConfig& b) {
  return a.lambda.has_value() == b.lambda.has_value() &&
         (!a.lambda || same_bits(*a.lambda, *b.lambda)) &&
         same_bits(a.eps, b.eps) && a.t_max == b.t_max &&
         same_bits(a.rho, b.rho) && same_bits(a.mu_max, b.mu_max) &&
         same_bits(a.mu0_scale, b.mu0_scale) && a.seed == b.seed &&
         a.mu0_norm == b.mu0_norm && a.convergence == b.convergence;
}

}  // namespace

bool bitwise_equal(const ModelBundle& a, const ModelBundle& b) {
  if (!(a.schema == b.schema) || a.bases.size() != b.bases.size() ||
      a.bank.selectors.size() != b.bank.selectors.size())
    return false;
  for (std::size_t i = 0; i < a.bases.size(); ++i)
    if (!bitwise_equal(a.bases[i], b.bases[i])) return false;
  for (std::size_t i = 0; i < a.bank.selectors.size(); ++i)
    if (!bitwise_equal(a.bank.selectors[i], b.bank.selectors[i])) return false;
  const auto& da = a.diagnostics;
  const auto& db = b.diagnostics;
  if (a.span.has_value() != b.span.has_value() ||
      (a.span && !bitwise_equal(*a.span, *b.span)))
    return false;
  return bitwise_equal(a.G, b.G) && bitwise_equal(a.E, b.E) &&
         da.iterations == db.iterations &&
         same_bits(da.masked_residual, db.masked_residual) &&
         same_bits(da.constraint_residual, db.constraint_residual) &&
         da.converged == db.converged &&
         same_bits(da.residual_history, db.residual_history) &&
         same_bits(da.mu_history, db.mu_history) &&
         same_config(a.config, b.config);
}

namespace {

void check_problem(const TrainingSet& ts) {
  if (ts.X.rows() != ts.W.rows() || ts.X.cols() != ts.W.cols())
    throw InvalidArgument("mask shape does not match data shape");
  for (Index i = 0; i < ts.schema.size(); ++i)
    if (ts.schema.instantiation_count(i) > ts.features())
      throw InvalidArgument("attribute '" + ts.schema[i].name + "' has " +
                            std::to_string(ts.schema.instantiation_count(i)) +
                            " instantiations but data has only " +
                            std::to_string(ts.features()) + " features");
}

ModelBundle make_bundle(const TrainingSet& ts, const SolverConfig& config,
                        TrainState&& state, bool converged) {
  ModelBundle b;
  b.schema = ts.schema;
  b.diagnostics.iterations = state.t;
  b.diagnostics.masked_residual =
      normalized_residual(state, ts, ResidualForm::Masked);
  b.diagnostics.constraint_residual =
      normalized_residual(state, ts, ResidualForm::Constraint);
  b.diagnostics.converged = converged;
  b.diagnostics.residual_history = std::move(state.residual_history);
  b.diagnostics.mu_history = std::move(state.mu_history);
  b.bases = std::move(state.bases);
  b.bank = std::move(state.bank);
  b.G = std::move(state.G);
  b.E = std::move(state.E);
  b.config = config;
  b.config.lambda = config.resolved_lambda(ts.features(), ts.samples());
  return b;
}

}  // namespace

ModelBundle train(const TrainingSet& ts, const SolverConfig& config,
                  const TrainObserver& observer) {
  config.validate();
  check_problem(ts);
  const double lambda = config.resolved_lambda(ts.features(), ts.samples());

  TrainState state = initial_state(ts, config);
  if (ts.X.norm() == 0.0) return make_bundle(ts, config, std::move(state), true);

  auto notify = [&](TrainEvent::Stage stage, Index attr = -1) {
    if (observer) observer(state, ts, TrainEvent{stage, attr});
  };

  bool converged = false;
  for (int t = 0; t < config.t_max; ++t) {
    try {
      for (Index i = 0; i < ts.schema.size(); ++i) {
        for (Index j = 0; j < ts.schema.instantiation_count(i); ++j)
          update_h(state, ts, i, j);
        notify(TrainEvent::Stage::Selectors, i);
        update_f(state, ts, i);
        notify(TrainEvent::Stage::Basis, i);
      }
      update_g(state, ts);
      notify(TrainEvent::Stage::Individual);
      update_e(state, ts, lambda);
      notify(TrainEvent::Stage::Error);
    } catch (const InvalidArgument& e) {
      // Non-finite iterates surface as input validation failures inside the
      // kernels; at this point they mean the iteration blew up.
      throw DivergedError(std::string("training diverged: ") + e.what(), t);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at iteration " +
                           std::to_string(t));
    }
    update_duals(state, ts, config.rho, config.mu_max);
    state.mu_history.push_back(state.mu);
    notify(TrainEvent::Stage::Duals);
    state.t = t + 1;

    const double res = normalized_residual(state, ts, config.convergence);
    if (!std::isfinite(res))
      throw DivergedError("training residual is not finite", state.t);
    state.residual_history.push_back(res);
    if (res <= config.eps) {
      converged = true;
      break;
    }
  }
  return make_bundle(ts, config, std::move(state), converged);
}

}  // namespace marca
