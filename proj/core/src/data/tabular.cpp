#include "ltmx/data/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ltmx/error.hpp"

namespace ltmx {
namespace {

const std::string& field_name(const FieldSpec& f) {
  return std::visit([](const auto& x) -> const std::string& { return x.name; }, f);
}

}  // namespace

int TabularSchema::categorical_count() const {
  return static_cast<int>(std::count_if(fields.begin(), fields.end(), [](const FieldSpec& f) {
    return std::holds_alternative<CategoricalField>(f);
  }));
}

int TabularSchema::numeric_count() const {
  return static_cast<int>(fields.size()) - categorical_count();
}

std::vector<int> TabularSchema::embedding_sizes() const {
  std::vector<int> sizes;
  for (const auto& f : fields) {
    if (const auto* c = std::get_if<CategoricalField>(&f)) {
      sizes.push_back(static_cast<int>(c->vocabulary.size()) + 1);
    }
  }
  return sizes;
}

TabularFeatures encode_tabular(const MetadataRecord& record, const TabularSchema& schema) {
  std::set<std::string> known;
  for (const auto& f : schema.fields) known.insert(field_name(f));
  for (const auto& [key, value] : record.values) {
    if (!known.count(key)) throw DataError("metadata field '" + key + "' is not in the schema");
  }

  TabularFeatures out;
  for (const auto& f : schema.fields) {
    const auto it = record.values.find(field_name(f));
    if (const auto* cat = std::get_if<CategoricalField>(&f)) {
      if (it == record.values.end()) {
        out.categorical.push_back(static_cast<int>(cat->vocabulary.size()));
        continue;
      }
      const auto* text = std::get_if<std::string>(&it->second);
      if (!text) throw DataError("field '" + cat->name + "' is categorical but got a number");
      const auto pos = std::find(cat->vocabulary.begin(), cat->vocabulary.end(), *text);
      if (pos == cat->vocabulary.end()) {
        throw DataError("field '" + cat->name + "': value '" + *text + "' is not in the vocabulary");
      }
      out.categorical.push_back(static_cast<int>(pos - cat->vocabulary.begin()));
    } else {
      const auto& num = std::get<NumericField>(f);
      if (it == record.values.end()) {
        out.numeric.push_back(0.5);
        continue;
      }
      const auto* value = std::get_if<double>(&it->second);
      if (!value) throw DataError("field '" + num.name + "' is numeric but got text");
      if (!std::isfinite(*value)) throw DataError("field '" + num.name + "' is not finite");
      const double span = num.max - num.min;
      if (!(span > 0.0)) throw ConfigError("field '" + num.name + "' has an empty range");
      out.numeric.push_back(std::clamp((*value - num.min) / span, 0.0, 1.0));
    }
  }
  return out;
}

MetadataRecord decode_tabular(const TabularFeatures& features, const TabularSchema& schema) {
  if (static_cast<int>(features.categorical.size()) != schema.categorical_count() ||
      static_cast<int>(features.numeric.size()) != schema.numeric_count()) {
    throw ShapeError("encoded features do not match the schema");
  }
  MetadataRecord out;
  std::size_t ci = 0;
  std::size_t ni = 0;
  for (const auto& f : schema.fields) {
    if (const auto* cat = std::get_if<CategoricalField>(&f)) {
      const int idx = features.categorical[ci++];
      if (idx < 0 || idx > static_cast<int>(cat->vocabulary.size())) {
        throw DataError("field '" + cat->name + "': index out of range");
      }
      if (idx < static_cast<int>(cat->vocabulary.size())) out.values[cat->name] = cat->vocabulary[idx];
    } else {
      const auto& num = std::get<NumericField>(f);
      out.values[num.name] = num.min + features.numeric[ni++] * (num.max - num.min);
    }
  }
  return out;
}

TabularSchema lesion_metadata_schema() {
  TabularSchema s;
  s.fields.push_back(CategoricalField{"gender", {"female", "male"}});
  s.fields.push_back(CategoricalField{
      "anatom_site",
      {"head/neck", "upper extremity", "lower extremity", "torso", "palms/soles", "oral/genital"}});
  s.fields.push_back(NumericField{"age", 0.0, 90.0});
  return s;
}

}  // namespace ltmx
