#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "marca/errors.hpp"
#include "marca/reconstructor.hpp"
#include "marca/synthbench.hpp"

using namespace marca;

namespace {

// One default synthetic instance and its trained bundle, shared by the tests.
struct Trained {
  synth::SynthSpec spec = synth::SynthSpec::defaults();
  synth::Instance inst = synth::generate(spec);
  ModelBundle bundle = train(inst.training, SolverConfig{});
};

const Trained& trained() {
  static const Trained t;
  return t;
}

// Hand-built single-attribute bundle with no individual component.
ModelBundle toy_bundle() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  ModelBundle b;
  b.schema = AttributeSchema({Attribute{"A", {"a0", "a1", "a2"}}});
  b.bases.push_back(proxops::random_orthonormal(20, 3, rng));
  b.bank = SelectorBank::zeros(b.schema);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) b.bank.selectors[0](i, j) = nd(rng);
  b.G = Matrix::Zero(20, 6);
  b.E = b.G;
  b.config.lambda = 0.3;
  return b;
}

double masked_error(const Vector& got, const Vector& truth, const Vector& w) {
  const Vector miss = Vector::Ones(w.size()) - w;
  return (got - truth).cwiseProduct(miss).norm() / truth.cwiseProduct(miss).norm();
}

}  // namespace

TEST(TransferSpec, FromTargets) {
  const auto schema = synth::SynthSpec::make_schema({3, 4});
  const auto s = TransferSpec::from_targets(schema, {{"attr1", "attr1_2"}});
  EXPECT_EQ(s.fixed[0], std::nullopt);
  EXPECT_EQ(s.fixed[1], 2);
  EXPECT_THROW(TransferSpec::from_targets(schema, {{"nope", "x"}}), InvalidArgument);
  EXPECT_THROW(TransferSpec::from_targets(schema, {{"attr0", "attr1_0"}}), InvalidArgument);
}

TEST(Span, KnownRankAndRules) {
  const auto& t = trained();
  ModelBundle b = t.bundle;
  const Matrix& k = build_span(b, proxops::RankRule::energy(0.99));
  EXPECT_EQ(k.cols(), 5);
  EXPECT_LE(proxops::orthonormality_defect(k), 1e-10);
  const Matrix k1 = compute_span(b, proxops::RankRule::explicit_rank(1));
  ASSERT_EQ(k1.cols(), 1);
  EXPECT_LE((k1.col(0) - k.col(0)).norm(), 1e-10);
  // cache follows the rule
  EXPECT_EQ(build_span(b, proxops::RankRule::explicit_rank(2)).cols(), 2);
  EXPECT_EQ(b.span->cols(), 2);
}

TEST(Span, DegenerateG) {
  ModelBundle b = toy_bundle();
  try {
    build_span(b, proxops::RankRule::energy(0.99));
    FAIL();
  } catch (const DegenerateInput& e) {
    EXPECT_NE(std::string(e.what()).find("explicit rank"), std::string::npos);
  }
  EXPECT_EQ(build_span(b, proxops::RankRule::explicit_rank(0)).cols(), 0);
}

TEST(Reconstruct, RecoversTrainedSelector) {
  const ModelBundle b = toy_bundle();
  const Vector y = b.bases[0] * b.bank.selector(0, 2);
  ReconConfig c;
  c.eps = 1e-12;
  const auto r = reconstruct(y, Vector::Ones(20), b, Matrix(20, 0),
                             TransferSpec::all_free(b.schema), c);
  EXPECT_TRUE(r.diagnostics.converged);
  EXPECT_LE((r.h_hat[0] - b.bank.selector(0, 2)).norm(), 1e-8);
  EXPECT_LE(r.eps_hat.norm(), 1e-8);
}

TEST(Reconstruct, ZeroInput) {
  const ModelBundle b = toy_bundle();
  const auto r = reconstruct(Vector::Zero(20), Vector::Ones(20), b, Matrix(20, 0),
                             TransferSpec::all_free(b.schema), ReconConfig{});
  EXPECT_TRUE(r.diagnostics.converged);
  EXPECT_EQ(r.diagnostics.residual, 0.0);
  EXPECT_TRUE(r.y_hat.isZero(0.0));
  EXPECT_TRUE(r.h_hat[0].isZero(0.0));
}

TEST(Reconstruct, MuScheduleFromInput) {
  const ModelBundle b = toy_bundle();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Vector y(20);
  for (auto& v : y) v = nd(rng);
  ReconConfig c;
  c.t_max = 30;
  for (Mu0Norm norm : {Mu0Norm::L1, Mu0Norm::Spectral}) {
    c.mu0_norm = norm;
    const auto r = reconstruct(y, Vector::Ones(20), b, Matrix(20, 0),
                               TransferSpec::all_free(b.schema), c);
    const auto& mu = r.diagnostics.mu_history;
    ASSERT_GE(mu.size(), 2u);
    EXPECT_EQ(mu[0], 25.0 / (norm == Mu0Norm::L1 ? y.lpNorm<1>() : y.norm()));
    for (std::size_t t = 1; t < mu.size(); ++t)
      EXPECT_EQ(mu[t], std::min(1.2 * mu[t - 1], 1e7));
  }
}

TEST(Reconstruct, InputValidation) {
  const ModelBundle b = toy_bundle();
  const auto spec = TransferSpec::all_free(b.schema);
  EXPECT_THROW(reconstruct(Vector::Ones(19), Vector::Ones(19), b, Matrix(20, 0), spec, {}),
               InvalidArgument);
  Vector w = Vector::Ones(20);
  w(3) = 0.5;
  EXPECT_THROW(reconstruct(Vector::Ones(20), w, b, Matrix(20, 0), spec, {}), InvalidArgument);
  Vector y = Vector::Ones(20);
  y(0) = std::nan("");
  EXPECT_THROW(reconstruct(y, Vector::Ones(20), b, Matrix(20, 0), spec, {}), InvalidArgument);
  EXPECT_THROW(reconstruct(Vector::Ones(20), Vector::Ones(20), b, Matrix(20, 0),
                           TransferSpec{}, {}),
               InvalidArgument);
  ReconConfig bad;
  bad.rho = 0.9;
  EXPECT_THROW(reconstruct(Vector::Ones(20), Vector::Ones(20), b, Matrix(20, 0), spec, bad),
               InvalidArgument);
}

TEST(Complete, InModelVectorReproduced) {
  const auto& t = trained();
  ModelBundle b = t.bundle;
  const Matrix& k = build_span(b, proxops::RankRule::energy(0.99));
  Vector coef(k.cols());
  for (Index c = 0; c < coef.size(); ++c) coef(c) = 0.5 - 0.2 * c;
  const Vector y = b.bases[0] * b.bank.selector(0, 1) + b.bases[1] * b.bank.selector(1, 3) + k * coef;
  const auto r = complete(y, Vector::Ones(y.size()), b, ReconConfig{});
  EXPECT_TRUE(r.diagnostics.converged);
  EXPECT_LE((r.y_hat - y).norm(), 1e-6 * y.norm());
  EXPECT_LE(r.eps_hat.norm(), 1e-6 * y.norm());
}

TEST(Complete, NothingVisible) {
  const auto& t = trained();
  const auto h = synth::draw_holdout(t.inst.truth, t.spec, 0.3, 5);
  const auto r = complete(h.y, Vector::Zero(h.y.size()), t.bundle, ReconConfig{});
  EXPECT_TRUE(r.y_hat.isZero(0.0));
  for (const auto& v : r.h_hat) EXPECT_TRUE(v.isZero(0.0));
  EXPECT_EQ(r.diagnostics.residual, 0.0);
  EXPECT_EQ(r.eps_hat, h.y);
}

TEST(Complete, HoldoutMaskedError) {
  const auto& t = trained();
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    const auto h = synth::draw_holdout(t.inst.truth, t.spec, 0.3, seed);
    const auto r = complete(h.y, h.w, t.bundle, ReconConfig{});
    EXPECT_LE(masked_error(r.y_hat, h.clean, h.w), 0.1) << "holdout seed " << seed;
  }
}

TEST(Complete, MaskedResidualZeroAfterErrorUpdate) {
  const auto& t = trained();
  const auto h = synth::draw_holdout(t.inst.truth, t.spec, 0.3, 9);
  ModelBundle b = t.bundle;
  const Matrix k = build_span(b, ReconConfig{}.rank_rule);
  int checked = 0;
  reconstruct(h.y, h.w, b, k, TransferSpec::all_free(b.schema), ReconConfig{},
              [&](const ReconView& v, ReconEvent ev) {
                if (ev.stage != ReconEvent::Stage::Error) return;
                const Vector ar = recon_error_target(b, v) - v.state.err;
                for (Index i = 0; i < ar.size(); ++i)
                  if (v.mask(i) == 0.0) ASSERT_EQ(ar(i), 0.0);
                ++checked;
              });
  EXPECT_GT(checked, 0);
}

TEST(Transfer, SelfTransferMatchesComplete) {
  const auto& t = trained();
  const auto samples = split(t.inst.training);
  ReconConfig c;
  c.eps = 1e-9;
  for (int n : {0, 13}) {
    const auto& s = samples[n];
    const auto full = complete(s.x, s.w, t.bundle, c);
    const auto self = transfer(s.x, s.w, t.bundle, s.labels, c);
    EXPECT_LE((self.y_hat - full.y_hat).norm(), 1e-6 * full.y_hat.norm());
  }
}

TEST(Transfer, PinnedSelectorsAreExact) {
  const auto& t = trained();
  const auto h = synth::draw_holdout(t.inst.truth, t.spec, 0.3, 11);
  const std::map<std::string, std::string> targets{{"identity", "identity_2"}, {"age", "age_0"}};
  for (auto mode : {TransferMode::Joint, TransferMode::PostHoc}) {
    const auto r = transfer(h.y, h.w, t.bundle, targets, ReconConfig{}, mode);
    EXPECT_TRUE(bitwise_equal(Matrix(r.h_hat[0]), Matrix(t.bundle.bank.selector(0, 2))));
    EXPECT_TRUE(bitwise_equal(Matrix(r.h_hat[1]), Matrix(t.bundle.bank.selector(1, 0))));
  }
}

TEST(Transfer, PostHocSwapIsLinear) {
  const auto& t = trained();
  const auto h = synth::draw_holdout(t.inst.truth, t.spec, 0.3, 12);
  const auto& b = t.bundle;
  const auto a = transfer(h.y, h.w, b, {{"age", "age_0"}}, ReconConfig{}, TransferMode::PostHoc);
  const auto c = transfer(h.y, h.w, b, {{"age", "age_3"}}, ReconConfig{}, TransferMode::PostHoc);
  const Vector expect = b.bases[1] * (b.bank.selector(1, 3) - b.bank.selector(1, 0));
  EXPECT_LE((c.y_hat - a.y_hat - expect).norm(), 1e-10 * expect.norm());
}

TEST(Transfer, UnknownTarget) {
  const auto& t = trained();
  const Vector y = t.inst.training.X.col(0);
  EXPECT_THROW(transfer(y, Vector::Ones(y.size()), t.bundle, {{"identity", "nope"}}, {}),
               InvalidArgument);
}
