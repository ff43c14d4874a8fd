#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "marca/proxops.hpp"
#include "marca/trainer.hpp"

namespace marca {

struct ReconConfig {
  std::optional<double> lambda;  ///< unset: the bundle's training lambda
  double eps = 1e-7;
  int t_max = 1000;
  double rho = 1.2;
  double mu_max = 1e7;
  double mu0_scale = 25.0;
  /// Vector norm in the mu0 rule; spectral and frobenius both mean ||y||_2.
  Mu0Norm mu0_norm = Mu0Norm::L1;
  proxops::RankRule rank_rule = proxops::RankRule::energy(0.99);

  void validate() const;
};

/// Per attribute: nullopt leaves the selector free, a value pins it to the
/// trained selector of that instantiation.
struct TransferSpec {
  std::vector<std::optional<Index>> fixed;

  static TransferSpec all_free(const AttributeSchema& schema);
  /// Pins the named attributes; throws InvalidArgument on unknown names.
  static TransferSpec from_targets(
      const AttributeSchema& schema,
      const std::map<std::string, std::string>& targets);
};

/// How pinned selectors enter a transfer.
enum class TransferMode {
  Joint,    ///< pinned throughout the ADMM
  PostHoc,  ///< solve all-free, then swap the pinned selectors in
};

struct ReconState {
  std::vector<Vector> h;
  Vector w;
  Vector err;
  Vector dual;
  double mu = 0.0;
  int t = 0;
};

struct ReconDiagnostics {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
  std::vector<double> mu_history;
};

struct ReconResult {
  std::vector<Vector> h_hat;
  Vector w_hat;
  Vector eps_hat;
  Vector y_hat;  ///< sum F_i h_i + K w, error term excluded
  ReconDiagnostics diagnostics;
};

struct ReconEvent {
  enum class Stage { Selector, Individual, Error, Duals };
  Stage stage;
  Index attribute = -1;
};

/// Everything the observer may need to check invariants; refers to data owned
/// by reconstruct().
struct ReconView {
  const ReconState& state;
  const Vector& y;
  const Vector& mask;
  const Matrix& span;
};

using ReconObserver = std::function<void(const ReconView&, ReconEvent)>;

/// K = rank_r_span(G) for the rule; does not touch the bundle.
Matrix compute_span(const ModelBundle& bundle, const proxops::RankRule& rule);

/// compute_span() cached on the bundle. Recomputed if the rule changed.
const Matrix& build_span(ModelBundle& bundle, const proxops::RankRule& rule);

/// ADMM for min lambda ||w_y .* e||_1 s.t. y = sum F_i h_i + K w + e, with
/// some selectors optionally pinned. `span` is K (F x r, possibly r = 0).
ReconResult reconstruct(const Vector& y, const Vector& w_y,
                        const ModelBundle& bundle, const Matrix& span,
                        const TransferSpec& spec, const ReconConfig& config,
                        const ReconObserver& observer = {});

/// Uses the bundle's cached span when it matches config.rank_rule, otherwise
/// computes one.
ReconResult reconstruct(const Vector& y, const Vector& w_y,
                        const ModelBundle& bundle, const TransferSpec& spec,
                        const ReconConfig& config);

/// All selectors free; y_hat fills in the masked entries.
ReconResult complete(const Vector& y, const Vector& w_y,
                     const ModelBundle& bundle, const ReconConfig& config);

/// Pins the targeted attributes to trained selectors and synthesises y_hat.
ReconResult transfer(const Vector& y, const Vector& w_y,
                     const ModelBundle& bundle,
                     const std::map<std::string, std::string>& targets,
                     const ReconConfig& config,
                     TransferMode mode = TransferMode::Joint);

/// y - sum F_i h_i - K w + dual/mu: the quantity the error update acts on.
Vector recon_error_target(const ModelBundle& bundle, const ReconView& view);

/// sum F_i h_i + K w.
Vector synthesize(const ModelBundle& bundle, const Matrix& span,
                  const std::vector<Vector>& h, const Vector& w);

}  // namespace marca
