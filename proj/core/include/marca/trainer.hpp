#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "marca/dataset.hpp"
#include "marca/proxops.hpp"
#include "marca/types.hpp"

namespace marca {

/// Norm of the data used in the initial penalty mu[0] = mu0_scale / ||X||.
/// L1 is the entrywise sum of absolute values.
enum class Mu0Norm { Spectral, Frobenius, L1 };

const char* to_string(Mu0Norm norm);
/// Accepts "spectral", "frobenius" and "l1".
Mu0Norm parse_mu0_norm(const std::string& name);

/// Statistic compared against eps to stop the ADMM loop.
enum class ResidualForm {
  /// ||X - sum F_i H_i - G - E||_F / ||X||_F, the equality-constraint gap.
  Constraint,
  /// ||X - sum F_i H_i - G - W .* E||_F / ||X||_F. Does not vanish when W has
  /// zeros, since E is unpenalised there and absorbs the whole gap.
  Masked,
};

struct SolverConfig {
  std::optional<double> lambda;  ///< unset: 2 / sqrt(max(F, N))
  double eps = 1e-7;
  int t_max = 1000;
  double rho = 1.2;
  double mu_max = 1e7;
  double mu0_scale = 25.0;
  std::uint64_t seed = 0;
  Mu0Norm mu0_norm = Mu0Norm::L1;
  ResidualForm convergence = ResidualForm::Constraint;

  void validate() const;
  double resolved_lambda(Index features, Index samples) const;
};

/// Iterate of the training ADMM.
struct TrainState {
  std::vector<Matrix> bases;  ///< F_i, F x M_i, orthonormal columns
  SelectorBank bank;
  Matrix G;
  Matrix E;
  Matrix Lambda;
  double mu = 0.0;
  int t = 0;
  std::vector<double> residual_history;
  std::vector<double> mu_history;  ///< mu[0], mu[1], ... one per completed step
};

struct TrainDiagnostics {
  int iterations = 0;
  double masked_residual = 0.0;
  double constraint_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;  ///< convergence statistic per iteration
  std::vector<double> mu_history;
};

struct ModelBundle {
  AttributeSchema schema;
  std::vector<Matrix> bases;
  SelectorBank bank;
  Matrix G;
  Matrix E;
  TrainDiagnostics diagnostics;
  SolverConfig config;  ///< lambda is always resolved here
  std::optional<Matrix> span;
  std::optional<proxops::RankRule> span_rule;

  Index features() const { return G.rows(); }
};

/// True when every matrix, history and config field matches bit for bit.
bool bitwise_equal(const ModelBundle& a, const ModelBundle& b);
bool bitwise_equal(const Matrix& a, const Matrix& b);

/// Which update just ran; attribute is meaningful for Selectors and Basis.
struct TrainEvent {
  enum class Stage { Selectors, Basis, Individual, Error, Duals };
  Stage stage;
  Index attribute = -1;
};

using TrainObserver =
    std::function<void(const TrainState&, const TrainingSet&, TrainEvent)>;

/// mu0_scale / ||X|| with ||X|| := 1 for a zero matrix.
double initial_mu(const Matrix& X, const SolverConfig& config);

/// Random orthonormal bases (seeded), zero selectors, G, E and Lambda.
TrainState initial_state(const TrainingSet& ts, const SolverConfig& config);

/// F_i H_i.
Matrix attribute_part(const TrainState& state, const TrainingSet& ts,
                      Index attr);

/// sum_i F_i H_i (zero when J = 0).
Matrix shared_part(const TrainState& state, const TrainingSet& ts);

/// Closed-form selector update: the mean over the instantiation's columns of
/// F_i^T applied to the residual that excludes attribute i's own term.
/// Writes into state.bank and returns the new selector.
Vector update_h(TrainState& state, const TrainingSet& ts, Index attr,
                Index inst);

/// Procrustes basis update F_i = Q[(X - sum_{k!=i} F_k H_k - G - E +
/// Lambda/mu) H_i^T].
const Matrix& update_f(TrainState& state, const TrainingSet& ts, Index attr);

/// G = SVT_{1/mu}(X - sum F_i H_i - E + Lambda/mu).
const Matrix& update_g(TrainState& state, const TrainingSet& ts);

/// X - sum F_i H_i - G + Lambda/mu: the quantity the E-update acts on.
Matrix error_target(const TrainState& state, const TrainingSet& ts);

/// error_target() - E. Zero at every masked entry right after update_e().
Matrix augmented_residual(const TrainState& state, const TrainingSet& ts);

/// E = W .* S_{lambda/mu}(target) + (1 - W) .* target.
const Matrix& update_e(TrainState& state, const TrainingSet& ts,
                       double lambda);

/// Lambda += mu (X - sum F_i H_i - G - E);  mu = min(rho mu, mu_max).
void update_duals(TrainState& state, const TrainingSet& ts, double rho,
                  double mu_max);

/// Normalised residual; 0 when ||X||_F = 0.
double normalized_residual(const TrainState& state, const TrainingSet& ts,
                           ResidualForm form = ResidualForm::Masked);

/// Runs the training ADMM until the configured residual drops to eps or
/// t_max iterations have run. Non-convergence is reported in the
/// diagnostics, not thrown.
ModelBundle train(const TrainingSet& ts, const SolverConfig& config,
                  const TrainObserver& observer = {});

}  // namespace marca
