#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "marca/dataset.hpp"
#include "marca/trainer.hpp"

/// Synthetic ground truth, recovery metrics and independent reference solvers
/// used to validate the trainer and reconstructor.
namespace marca::synth {

struct SynthSpec {
  AttributeSchema schema;
  Index features = 200;
  Index samples = 60;
  Index rank_g = 5;
  double sparsity = 0.05;
  double missing_frac = 0.2;
  double noise_amp = 5.0;
  std::uint64_t seed = 7;

  /// Two attributes with 3 and 4 instantiations on 200 x 60 data.
  static SynthSpec defaults();
  /// Schema with attributes "attr<i>" having counts[i] instantiations
  /// labelled "<attr>_<j>".
  static AttributeSchema make_schema(const std::vector<Index>& counts,
                                     const std::vector<std::string>& names = {});

  void validate() const;
};

struct GroundTruth {
  AttributeSchema schema;
  std::vector<Matrix> bases;
  SelectorBank bank;
  Matrix G;
  Matrix E;
  Matrix W;
  Matrix X;
  std::vector<std::vector<Index>> label_index;
  /// G = g_left * diag(g_sigma) * g_right^T.
  Matrix g_left;
  Vector g_sigma;
  Matrix g_right;
};

struct Instance {
  TrainingSet training;
  GroundTruth truth;
};

/// Draws an instance of X = sum F_i H_i + G + E with a random visibility mask.
/// Deterministic in spec.seed.
Instance generate(const SynthSpec& spec);

/// sum F*_i H*_i + G*.
Matrix clean_part(const GroundTruth& truth);

/// A fresh sample from the same model: new individual coefficients, random
/// instantiations, sparse corruption at spec.sparsity and a new mask.
struct HoldoutSample {
  Vector y;
  Vector w;
  Vector clean;
  std::vector<Index> instantiations;
  std::map<std::string, std::string> labels;
};

HoldoutSample draw_holdout(const GroundTruth& truth, const SynthSpec& spec,
                           double missing_frac, std::uint64_t seed);

struct MetricsReport {
  double clean_error_observed = 0.0;
  double clean_error_overall = 0.0;
  double sparse_precision = 0.0;
  double sparse_recall = 0.0;
  double sparse_f1 = 0.0;
  std::vector<double> subspace_angle_deg;  ///< largest principal angle per attribute
};

/// Support threshold applied to recovered E.
inline constexpr double kSupportThreshold = 1e-6;

MetricsReport recovery_metrics(const ModelBundle& bundle,
                               const GroundTruth& truth);

/// Flat "key=value" lines.
std::string to_key_value(const MetricsReport& report);

/// Minimum of ||Omega A - B||_F over n_samples random Omega with orthonormal
/// columns (rows(B) x rows(A)).
double procrustes_sampling_oracle(const Matrix& a, const Matrix& b,
                                  Index n_samples, std::uint64_t seed);

struct RpcaResult {
  Matrix low_rank;
  Matrix sparse;
  int iterations = 0;
  bool converged = false;
};

/// Inexact augmented Lagrangian low-rank plus sparse decomposition with
/// missing entries: min ||L||_* + lambda ||W .* S||_1 s.t. X = L + S.
/// Written without any of the trainer's kernels.
RpcaResult rpca_reference(const Matrix& X, const Matrix& W, double lambda,
                          double eps, int t_max);

}  // namespace marca::synth
