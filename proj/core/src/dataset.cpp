#include "marca/dataset.hpp"

#include <set>
#include <string>

#include "marca/errors.hpp"

namespace marca {

AttributeSchema::AttributeSchema(std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)) {
  std::set<std::string> names;
  for (const auto& a : attributes_) {
    if (a.name.empty()) throw InvalidArgument("attribute with empty name");
    if (!names.insert(a.name).second)
      throw InvalidArgument("duplicate attribute '" + a.name + "'");
    if (a.instantiations.empty())
      throw InvalidArgument("attribute '" + a.name +
                            "' has no instantiations");
    std::set<std::string> labels;
    for (const auto& l : a.instantiations)
      if (!labels.insert(l).second)
        throw InvalidArgument("duplicate instantiation '" + l +
                              "' in attribute '" + a.name + "'");
  }
}

Index AttributeSchema::instantiation_count(Index attr) const {
  return static_cast<Index>(attributes_.at(attr).instantiations.size());
}

std::optional<Index> AttributeSchema::find_attribute(
    const std::string& name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].name == name) return static_cast<Index>(i);
  return std::nullopt;
}

std::optional<Index> AttributeSchema::find_instantiation(
    Index attr, const std::string& label) const {
  const auto& insts = attributes_.at(attr).instantiations;
  for (std::size_t j = 0; j < insts.size(); ++j)
    if (insts[j] == label) return static_cast<Index>(j);
  return std::nullopt;
}

void require_binary(const Matrix& mask, const char* what) {
  for (Index j = 0; j < mask.cols(); ++j)
    for (Index i = 0; i < mask.rows(); ++i) {
      const double v = mask(i, j);
      if (v != 0.0 && v != 1.0)
        throw InvalidArgument(std::string(what) +
                              ": mask entries must be 0 or 1, found " +
                              std::to_string(v));
    }
}

TrainingSet assemble(const AttributeSchema& schema, Matrix X, Matrix W,
                     std::vector<std::vector<Index>> label_index) {
  if (X.cols() < 1 || X.rows() < 1)
    throw InvalidArgument("training set needs at least one sample and feature");
  if (W.rows() != X.rows() || W.cols() != X.cols())
    throw InvalidArgument("mask shape does not match data shape");
  if (!X.allFinite()) throw InvalidArgument("data contains non-finite values");
  require_binary(W, "training mask");
  if (static_cast<Index>(label_index.size()) != schema.size())
    throw InvalidArgument("label index does not cover every attribute");

  const Index n = X.cols();
  TrainingSet ts;
  ts.schema = schema;
  ts.counts.resize(schema.size());
  ts.columns.resize(schema.size());
  for (Index i = 0; i < schema.size(); ++i) {
    const Index m = schema.instantiation_count(i);
    if (static_cast<Index>(label_index[i].size()) != n)
      throw InvalidArgument("label index for attribute '" + schema[i].name +
                            "' has wrong length");
    ts.counts[i].assign(m, 0);
    ts.columns[i].resize(m);
    for (Index col = 0; col < n; ++col) {
      const Index j = label_index[i][col];
      if (j < 0 || j >= m)
        throw InvalidArgument("label index out of range for attribute '" +
                              schema[i].name + "'");
      ++ts.counts[i][j];
      ts.columns[i][j].push_back(col);
    }
    for (Index j = 0; j < m; ++j)
      if (ts.counts[i][j] == 0)
        throw InvalidArgument("instantiation '" + schema[i].instantiations[j] +
                              "' of attribute '" + schema[i].name +
                              "' has no training samples");
  }
  ts.X = std::move(X);
  ts.W = std::move(W);
  ts.label_index = std::move(label_index);
  return ts;
}

TrainingSet assemble(const AttributeSchema& schema,
                     const std::vector<Sample>& samples) {
  if (samples.empty()) throw InvalidArgument("no samples");
  const Index f = samples.front().x.size();
  const Index n = static_cast<Index>(samples.size());
  Matrix X(f, n), W(f, n);
  std::vector<std::vector<Index>> label_index(schema.size(),
                                              std::vector<Index>(n));
  for (Index col = 0; col < n; ++col) {
    const Sample& s = samples[col];
    const std::string where = "sample " + std::to_string(col);
    if (s.x.size() != f)
      throw InvalidArgument(where + ": dimension mismatch (expected " +
                            std::to_string(f) + ", got " +
                            std::to_string(s.x.size()) + ")");
    if (s.w.size() != f)
      throw InvalidArgument(where + ": mask length does not match data");
    X.col(col) = s.x;
    W.col(col) = s.w;

    for (const auto& [attr, label] : s.labels) {
      if (!schema.find_attribute(attr))
        throw InvalidArgument(where + ": unknown attribute '" + attr + "'");
    }
    for (Index i = 0; i < schema.size(); ++i) {
      const auto it = s.labels.find(schema[i].name);
      if (it == s.labels.end())
        throw InvalidArgument(where + ": missing label for attribute '" +
                              schema[i].name + "'");
      const auto j = schema.find_instantiation(i, it->second);
      if (!j)
        throw InvalidArgument(where + ": unknown instantiation '" +
                              it->second + "' for attribute '" +
                              schema[i].name + "'");
      label_index[i][col] = *j;
    }
  }
  return assemble(schema, std::move(X), std::move(W), std::move(label_index));
}

std::vector<Sample> split(const TrainingSet& ts) {
  std::vector<Sample> out(ts.samples());
  for (Index col = 0; col < ts.samples(); ++col) {
    out[col].x = ts.X.col(col);
    out[col].w = ts.W.col(col);
    for (Index i = 0; i < ts.schema.size(); ++i)
      out[col].labels[ts.schema[i].name] =
          ts.schema[i].instantiations[ts.label_index[i][col]];
  }
  return out;
}

const std::vector<Index>& columns_of(const TrainingSet& ts, Index attr,
                                     Index inst) {
  if (attr < 0 || attr >= ts.schema.size())
    throw InvalidArgument("attribute index out of range");
  if (inst < 0 || inst >= ts.schema.instantiation_count(attr))
    throw InvalidArgument("instantiation index out of range");
  return ts.columns[attr][inst];
}

SelectorBank SelectorBank::zeros(const AttributeSchema& schema) {
  SelectorBank bank;
  for (Index i = 0; i < schema.size(); ++i) {
    const Index m = schema.instantiation_count(i);
    bank.selectors.push_back(Matrix::Zero(m, m));
  }
  return bank;
}

Matrix materialize_h(const SelectorBank& bank, const TrainingSet& ts,
                     Index attr) {
  if (attr < 0 || attr >= ts.schema.size() || attr >= bank.attributes())
    throw InvalidArgument("materialize_h: attribute index out of range");
  const Matrix& sel = bank.selectors[attr];
  const Index m = ts.schema.instantiation_count(attr);
  if (sel.rows() != m || sel.cols() != m)
    throw InvalidArgument("materialize_h: selector bank does not match schema");
  Matrix h(m, ts.samples());
  for (Index col = 0; col < ts.samples(); ++col)
    h.col(col) = sel.col(ts.label_index[attr][col]);
  return h;
}

}  // namespace marca
