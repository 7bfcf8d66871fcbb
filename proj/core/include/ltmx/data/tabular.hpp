#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "ltmx/data/types.hpp"

namespace ltmx {

struct CategoricalField {
  std::string name;
  std::vector<std::string> vocabulary;
};

struct NumericField {
  std::string name;
  double min = 0.0;
  double max = 1.0;
};

using FieldSpec = std::variant<CategoricalField, NumericField>;

struct TabularSchema {
  std::vector<FieldSpec> fields;

  int categorical_count() const;
  int numeric_count() const;
  // Vocabulary sizes plus one reserved missing index per categorical field.
  std::vector<int> embedding_sizes() const;
  ModalityShape shape() const { return ModalityShape::tabular(embedding_sizes(), numeric_count()); }
};

using FieldValue = std::variant<std::string, double>;

// A raw metadata row. Absent keys are missing values.
struct MetadataRecord {
  std::map<std::string, FieldValue> values;
  bool operator==(const MetadataRecord&) const = default;
};

// Categorical fields map to vocabulary indices, numerics are min-max scaled
// into [0,1] (clamped). Missing categoricals take the reserved index and
// missing numerics 0.5. Throws DataError on unknown fields, out-of-vocabulary
// values and type mismatches.
TabularFeatures encode_tabular(const MetadataRecord& record, const TabularSchema& schema);

// Inverse lookup. Reserved indices decode to absent keys.
MetadataRecord decode_tabular(const TabularFeatures& features, const TabularSchema& schema);

// gender (female/male), anatomic site (6 values), age in [0, 90].
TabularSchema lesion_metadata_schema();

}  // namespace ltmx
