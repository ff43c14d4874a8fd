#include <gtest/gtest.h>

#include "marca/dataset.hpp"
#include "marca/errors.hpp"
#include "marca/synthbench.hpp"

using namespace marca;

namespace {

AttributeSchema one_attr() { return AttributeSchema({{"A", {"a1", "a2"}}}); }

Sample sample(std::vector<double> x, std::map<std::string, std::string> labels) {
  Sample s;
  s.x = Eigen::Map<Vector>(x.data(), static_cast<Index>(x.size()));
  s.w = Vector::Ones(s.x.size());
  s.labels = std::move(labels);
  return s;
}

}  // namespace

TEST(Schema, Validation) {
  EXPECT_NO_THROW(AttributeSchema(std::vector<Attribute>{}));
  EXPECT_THROW(AttributeSchema({{"A", {"x"}}, {"A", {"y"}}}), InvalidArgument);
  EXPECT_THROW(AttributeSchema({{"A", {"x", "x"}}}), InvalidArgument);
  EXPECT_THROW(AttributeSchema({Attribute{"A", {}}}), InvalidArgument);
  const auto s = one_attr();
  EXPECT_EQ(s.find_attribute("A"), 0);
  EXPECT_EQ(s.find_attribute("B"), std::nullopt);
  EXPECT_EQ(s.find_instantiation(0, "a2"), 1);
  EXPECT_EQ(s.instantiation_count(0), 2);
}

TEST(Assemble, CountsTwoSamples) {
  const auto ts = assemble(one_attr(), {sample({1, 2}, {{"A", "a1"}}),
                                        sample({3, 4}, {{"A", "a2"}})});
  EXPECT_EQ(ts.counts[0][0], 1);
  EXPECT_EQ(ts.counts[0][1], 1);
  EXPECT_EQ(columns_of(ts, 0, 0), std::vector<Index>{0});
  EXPECT_EQ(columns_of(ts, 0, 1), std::vector<Index>{1});
  EXPECT_EQ(ts.X(1, 1), 4.0);
}

TEST(Assemble, UnknownInstantiation) {
  try {
    assemble(one_attr(), {sample({1}, {{"A", "a1"}}), sample({2}, {{"A", "zz"}})});
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("unknown instantiation"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos);
  }
}

TEST(Assemble, Rejections) {
  // ragged
  EXPECT_THROW(assemble(one_attr(), {sample({1, 2}, {{"A", "a1"}}),
                                     sample({3}, {{"A", "a2"}})}),
               InvalidArgument);
  // empty instantiation
  EXPECT_THROW(assemble(one_attr(), {sample({1}, {{"A", "a1"}})}), InvalidArgument);
  // missing label
  EXPECT_THROW(assemble(one_attr(), {sample({1}, {}), sample({1}, {{"A", "a2"}})}),
               InvalidArgument);
  // unknown attribute
  EXPECT_THROW(assemble(one_attr(), {sample({1}, {{"A", "a1"}, {"B", "b"}}),
                                     sample({1}, {{"A", "a2"}})}),
               InvalidArgument);
  // fractional mask
  auto s = sample({1}, {{"A", "a1"}});
  s.w(0) = 0.5;
  EXPECT_THROW(assemble(one_attr(), {s, sample({1}, {{"A", "a2"}})}), InvalidArgument);
  // no samples
  EXPECT_THROW(assemble(one_attr(), std::vector<Sample>{}), InvalidArgument);
}

TEST(Assemble, ZeroAttributes) {
  const auto ts = assemble(AttributeSchema{}, {sample({1, 2}, {}), sample({3, 4}, {})});
  EXPECT_EQ(ts.schema.size(), 0);
  EXPECT_EQ(ts.samples(), 2);
}

TEST(Assemble, SplitRoundTrip) {
  const auto inst = synth::generate(synth::SynthSpec::defaults());
  const auto& ts = inst.training;
  const auto again = assemble(ts.schema, split(ts));
  EXPECT_EQ(again.X, ts.X);
  EXPECT_EQ(again.W, ts.W);
  EXPECT_EQ(again.label_index, ts.label_index);
  EXPECT_EQ(ts.label_index, inst.truth.label_index);
}

TEST(Assemble, PartitionAndGeneratorCounts) {
  const auto inst = synth::generate(synth::SynthSpec::defaults());
  const auto& ts = inst.training;
  for (Index i = 0; i < ts.schema.size(); ++i) {
    Index total = 0;
    for (Index j = 0; j < ts.schema.instantiation_count(i); ++j) {
      Index expected = 0;
      for (Index l : inst.truth.label_index[i]) expected += l == j;
      EXPECT_EQ(static_cast<Index>(columns_of(ts, i, j).size()), expected);
      EXPECT_GE(expected, 5);
      total += ts.counts[i][j];
    }
    EXPECT_EQ(total, ts.samples());
  }
}

TEST(ColumnsOf, OutOfRange) {
  const auto ts = assemble(one_attr(), {sample({1}, {{"A", "a1"}}),
                                        sample({2}, {{"A", "a2"}})});
  EXPECT_THROW(columns_of(ts, 1, 0), InvalidArgument);
  EXPECT_THROW(columns_of(ts, 0, 2), InvalidArgument);
  EXPECT_THROW(columns_of(ts, -1, 0), InvalidArgument);
}

TEST(MaterializeH, IndicatorLayout) {
  const auto ts = assemble(one_attr(), {sample({1}, {{"A", "a1"}}),
                                        sample({2}, {{"A", "a2"}})});
  SelectorBank bank = SelectorBank::zeros(ts.schema);
  bank.selectors[0] = Matrix::Identity(2, 2);
  EXPECT_EQ(materialize_h(bank, ts, 0), Matrix::Identity(2, 2));
}

TEST(MaterializeH, SameInstantiationColumnsIdentical) {
  const AttributeSchema schema({Attribute{"A", {"a"}}});
  const auto ts = assemble(schema, {sample({1}, {{"A", "a"}}), sample({2}, {{"A", "a"}}),
                                    sample({3}, {{"A", "a"}})});
  SelectorBank bank = SelectorBank::zeros(schema);
  bank.selectors[0](0, 0) = 0.1 + 0.2;
  const Matrix h = materialize_h(bank, ts, 0);
  ASSERT_EQ(h.cols(), 3);
  EXPECT_EQ(h(0, 0), h(0, 2));
}

TEST(MaterializeH, MatchesGeneratorTruth) {
  const auto inst = synth::generate(synth::SynthSpec::defaults());
  const auto& t = inst.truth;
  for (Index i = 0; i < t.schema.size(); ++i) {
    const Matrix h = materialize_h(t.bank, inst.training, i);
    for (Index n = 0; n < h.cols(); ++n)
      EXPECT_EQ(Matrix(h.col(n)), Matrix(t.bank.selector(i, t.label_index[i][n])));
  }
}

TEST(MaterializeH, DimensionMismatch) {
  const auto ts = assemble(one_attr(), {sample({1}, {{"A", "a1"}}),
                                        sample({2}, {{"A", "a2"}})});
  SelectorBank bank;
  bank.selectors.push_back(Matrix::Zero(3, 3));
  EXPECT_THROW(materialize_h(bank, ts, 0), InvalidArgument);
}
