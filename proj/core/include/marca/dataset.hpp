#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "marca/types.hpp"

namespace marca {

struct Attribute {
  std::string name;
  std::vector<std::string> instantiations;

  bool operator==(const Attribute&) const = default;
};

/// J named attributes, each with an ordered list of instantiation labels.
/// J = 0 is allowed and reduces the model to low-rank plus sparse.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> attributes);

  Index size() const { return static_cast<Index>(attributes_.size()); }
  const Attribute& operator[](Index i) const { return attributes_.at(i); }
  const std::vector<Attribute>& attributes() const { return attributes_; }

  /// M_i.
  Index instantiation_count(Index attr) const;

  std::optional<Index> find_attribute(const std::string& name) const;
  std::optional<Index> find_instantiation(Index attr,
                                          const std::string& label) const;

  bool operator==(const AttributeSchema&) const = default;

 private:
  std::vector<Attribute> attributes_;
};

/// One vectorised datum with its visibility mask and labels.
struct Sample {
  Vector x;
  Vector w;                                   ///< 1 visible, 0 missing
  std::map<std::string, std::string> labels;  ///< attribute -> instantiation
};

/// Column-wise data matrix with masks and the column -> instantiation map.
struct TrainingSet {
  AttributeSchema schema;
  Matrix X;
  Matrix W;
  /// label_index[i][n] is the instantiation of attribute i for column n.
  std::vector<std::vector<Index>> label_index;
  /// counts[i][j] = N_{i,j}.
  std::vector<std::vector<Index>> counts;
  /// columns[i][j]: ascending column indices with instantiation j.
  std::vector<std::vector<std::vector<Index>>> columns;

  Index features() const { return X.rows(); }
  Index samples() const { return X.cols(); }
};

/// Builds a TrainingSet from samples in input order.
///
/// Rejects ragged dimensions, non-binary masks, unknown attributes or labels,
/// missing labels and instantiations that receive no column.
TrainingSet assemble(const AttributeSchema& schema,
                     const std::vector<Sample>& samples);

/// Same as assemble() with the data already in matrix form.
TrainingSet assemble(const AttributeSchema& schema, Matrix X, Matrix W,
                     std::vector<std::vector<Index>> label_index);

/// Inverse of assemble(): one Sample per column, in column order.
std::vector<Sample> split(const TrainingSet& ts);

/// Columns n with label_index[attr][n] == inst, ascending.
const std::vector<Index>& columns_of(const TrainingSet& ts, Index attr,
                                     Index inst);

/// Per attribute i, an M_i x M_i matrix whose column j is the shared selector
/// h_{i,j}.
struct SelectorBank {
  std::vector<Matrix> selectors;

  static SelectorBank zeros(const AttributeSchema& schema);

  Index attributes() const { return static_cast<Index>(selectors.size()); }
  auto selector(Index attr, Index inst) { return selectors.at(attr).col(inst); }
  auto selector(Index attr, Index inst) const {
    return selectors.at(attr).col(inst);
  }
};

/// H_i (M_i x N): column n is the selector of column n's instantiation.
Matrix materialize_h(const SelectorBank& bank, const TrainingSet& ts,
                     Index attr);

/// Throws InvalidArgument unless every entry is exactly 0 or 1.
void require_binary(const Matrix& mask, const char* what);

}  // namespace marca
