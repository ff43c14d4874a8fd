#include "marca/synthbench.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "marca/errors.hpp"
#include "marca/proxops.hpp"

namespace marca::synth {

namespace {

constexpr Index kMaxSpectrum = 10;

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// First k entries of a random permutation of 0..n-1.
std::vector<Index> random_support(Index n, Index k, std::mt19937_64& rng) {
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  return idx;
}

Index count_for(double fraction, Index total) {
  return static_cast<Index>(std::llround(fraction * static_cast<double>(total)));
}

/// Haar sample by modified Gram-Schmidt on a Gaussian matrix.
Matrix haar_orthonormal(Index rows, Index cols, std::mt19937_64& rng) {
  Matrix q = gaussian(rows, cols, rng);
  for (Index j = 0; j < cols; ++j) {
    for (Index k = 0; k < j; ++k) q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
    q.col(j) /= q.col(j).norm();
  }
  return q;
}

}  // namespace

AttributeSchema SynthSpec::make_schema(const std::vector<Index>& counts,
                                       const std::vector<std::string>& names) {
  std::vector<Attribute> attrs;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    Attribute a;
    a.name = i < names.size() ? names[i] : "attr" + std::to_string(i);
    for (Index j = 0; j < counts[i]; ++j)
      a.instantiations.push_back(a.name + "_" + std::to_string(j));
    attrs.push_back(std::move(a));
  }
  return AttributeSchema(std::move(attrs));
}

SynthSpec SynthSpec::defaults() {
  SynthSpec s;
  s.schema = make_schema({3, 4}, {"identity", "age"});
  return s;
}

void SynthSpec::validate() const {
  if (features < 1 || samples < 1)
    throw InvalidArgument("synth: features and samples must be >= 1");
  if (rank_g < 0 || rank_g >= std::min(features, samples))
    throw InvalidArgument("synth: rank_g must be < min(features, samples)");
  if (rank_g > kMaxSpectrum)
    throw InvalidArgument("synth: rank_g above 10 is not supported by the "
                          "10, 9, ... spectrum");
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw InvalidArgument("synth: sparsity must lie in [0, 1)");
  if (!(missing_frac >= 0.0 && missing_frac < 1.0))
    throw InvalidArgument("synth: missing_frac must lie in [0, 1)");
  if (!(std::isfinite(noise_amp) && noise_amp >= 0.0))
    throw InvalidArgument("synth: noise_amp must be >= 0");
  for (Index i = 0; i < schema.size(); ++i) {
    const Index m = schema.instantiation_count(i);
    if (m > samples)
      throw InvalidArgument("synth: attribute '" + schema[i].name +
                            "' has more instantiations than samples");
    if (m > features)
      throw InvalidArgument("synth: attribute '" + schema[i].name +
                            "' has more instantiations than features");
  }
}

Instance generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Index f = spec.features;
  const Index n = spec.samples;
  const Index J = spec.schema.size();

  GroundTruth t;
  t.schema = spec.schema;

  // Balanced labels, shuffled independently per attribute so attributes cross.
  t.label_index.resize(J);
  for (Index i = 0; i < J; ++i) {
    const Index m = spec.schema.instantiation_count(i);
    auto& labels = t.label_index[i];
    labels.resize(n);
    for (Index col = 0; col < n; ++col) labels[col] = col % m;
    std::shuffle(labels.begin(), labels.end(), rng);
  }

  t.bank = SelectorBank::zeros(spec.schema);
  for (Index i = 0; i < J; ++i) {
    const Index m = spec.schema.instantiation_count(i);
    t.bases.push_back(haar_orthonormal(f, m, rng));
    t.bank.selectors[i] = gaussian(m, m, rng);
  }

  t.g_left = haar_orthonormal(f, spec.rank_g, rng);
  t.g_right = haar_orthonormal(n, spec.rank_g, rng);
  t.g_sigma.resize(spec.rank_g);
  for (Index k = 0; k < spec.rank_g; ++k)
    t.g_sigma(k) = static_cast<double>(kMaxSpectrum - k);
  t.G = t.g_left * t.g_sigma.asDiagonal() * t.g_right.transpose();

  t.E = Matrix::Zero(f, n);
  std::bernoulli_distribution coin(0.5);
  for (Index pos : random_support(f * n, count_for(spec.sparsity, f * n), rng))
    t.E(pos % f, pos / f) = coin(rng) ? spec.noise_amp : -spec.noise_amp;

  t.W = Matrix::Ones(f, n);
  for (Index pos :
       random_support(f * n, count_for(spec.missing_frac, f * n), rng))
    t.W(pos % f, pos / f) = 0.0;

  const Matrix clean = clean_part(t);
  t.X = clean + t.E;
  // Store the error as it survives rounding so X - clean - E is exactly zero.
  t.E = t.X - clean;

  Instance inst;
  inst.training = assemble(spec.schema, t.X, t.W, t.label_index);
  inst.truth = std::move(t);
  return inst;
}

Matrix clean_part(const GroundTruth& truth) {
  Matrix sum = truth.G;
  for (Index i = 0; i < truth.schema.size(); ++i)
    for (Index col = 0; col < sum.cols(); ++col)
      sum.col(col) +=
          truth.bases[i] * truth.bank.selector(i, truth.label_index[i][col]);
  return sum;
}

HoldoutSample draw_holdout(const GroundTruth& truth, const SynthSpec& spec,
                           double missing_frac, std::uint64_t seed) {
  if (!(missing_frac >= 0.0 && missing_frac < 1.0))
    throw InvalidArgument("holdout missing_frac must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  const Index f = truth.X.rows();
  const Index n = truth.X.cols();

  HoldoutSample s;
  s.clean = Vector::Zero(f);
  for (Index i = 0; i < truth.schema.size(); ++i) {
    const Index m = truth.schema.instantiation_count(i);
    std::uniform_int_distribution<Index> pick(0, m - 1);
    const Index j = pick(rng);
    s.instantiations.push_back(j);
    s.labels[truth.schema[i].name] = truth.schema[i].instantiations[j];
    s.clean += truth.bases[i] * truth.bank.selector(i, j);
  }
  if (truth.g_sigma.size() > 0) {
    // Same scale as a row of the orthonormal right factor.
    const Vector coeff =
        gaussian(truth.g_sigma.size(), 1, rng, 1.0 / std::sqrt(double(n)));
    s.clean += truth.g_left * truth.g_sigma.asDiagonal() * coeff;
  }

  s.y = s.clean;
  std::bernoulli_distribution coin(0.5);
  for (Index pos : random_support(f, count_for(spec.sparsity, f), rng))
    s.y(pos) += coin(rng) ? spec.noise_amp : -spec.noise_amp;
  s.w = Vector::Ones(f);
  for (Index pos : random_support(f, count_for(missing_frac, f), rng))
    s.w(pos) = 0.0;
  return s;
}

MetricsReport recovery_metrics(const ModelBundle& bundle,
                               const GroundTruth& truth) {
  if (bundle.G.rows() != truth.G.rows() || bundle.G.cols() != truth.G.cols() ||
      bundle.E.rows() != truth.E.rows() || bundle.E.cols() != truth.E.cols())
    throw InvalidArgument("metrics: bundle and ground truth shapes differ");
  if (!(bundle.schema == truth.schema))
    throw InvalidArgument("metrics: bundle schema differs from ground truth");

  Matrix recovered = bundle.G;
  for (Index i = 0; i < truth.schema.size(); ++i)
    for (Index col = 0; col < recovered.cols(); ++col)
      recovered.col(col) +=
          bundle.bases[i] * bundle.bank.selector(i, truth.label_index[i][col]);
  const Matrix clean = clean_part(truth);

  MetricsReport r;
  const auto observed = truth.W.array();
  const double clean_obs = (observed * clean.array()).matrix().norm();
  const double diff_obs =
      (observed * (recovered - clean).array()).matrix().norm();
  r.clean_error_observed = clean_obs > 0.0 ? diff_obs / clean_obs : diff_obs;
  const double clean_all = clean.norm();
  r.clean_error_overall = clean_all > 0.0 ? (recovered - clean).norm() / clean_all
                                          : (recovered - clean).norm();

  Index tp = 0, fp = 0, fn = 0;
  for (Index j = 0; j < truth.E.cols(); ++j)
    for (Index i = 0; i < truth.E.rows(); ++i) {
      if (truth.W(i, j) != 1.0) continue;
      const bool predicted = std::abs(bundle.E(i, j)) > kSupportThreshold;
      const bool actual = truth.E(i, j) != 0.0;
      tp += predicted && actual;
      fp += predicted && !actual;
      fn += !predicted && actual;
    }
  if (tp + fp + fn == 0) {
    r.sparse_precision = r.sparse_recall = r.sparse_f1 = 1.0;
  } else {
    r.sparse_precision = tp + fp ? double(tp) / double(tp + fp) : 1.0;
    r.sparse_recall = tp + fn ? double(tp) / double(tp + fn) : 1.0;
    r.sparse_f1 = tp ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
  }

  for (Index i = 0; i < truth.schema.size(); ++i) {
    const Vector cosines =
        proxops::singular_values(bundle.bases[i].transpose() * truth.bases[i]);
    const double c = std::clamp(cosines.minCoeff(), 0.0, 1.0);
    r.subspace_angle_deg.push_back(std::acos(c) * 180.0 / M_PI);
  }
  return r;
}

std::string to_key_value(const MetricsReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "clean_error_observed=" << report.clean_error_observed << '\n'
      << "clean_error_overall=" << report.clean_error_overall << '\n'
      << "sparse_precision=" << report.sparse_precision << '\n'
      << "sparse_recall=" << report.sparse_recall << '\n'
      << "sparse_f1=" << report.sparse_f1 << '\n';
  for (std::size_t i = 0; i < report.subspace_angle_deg.size(); ++i)
    out << "subspace_angle_deg." << i << '=' << report.subspace_angle_deg[i]
        << '\n';
  return out.str();
}

double procrustes_sampling_oracle(const Matrix& a, const Matrix& b,
                                  Index n_samples, std::uint64_t seed) {
  if (a.cols() != b.cols())
    throw InvalidArgument("oracle: A and B need the same column count");
  if (b.rows() < a.rows())
    throw InvalidArgument("oracle: Omega needs rows(B) >= rows(A)");
  std::mt19937_64 rng(seed);
  double best = std::numeric_limits<double>::infinity();
  for (Index s = 0; s < n_samples; ++s) {
    const Matrix omega = haar_orthonormal(b.rows(), a.rows(), rng);
    best = std::min(best, (omega * a - b).norm());
  }
  return best;
}

}  // namespace marca::synth
