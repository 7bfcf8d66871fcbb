#include "ltmx/data/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "ltmx/error.hpp"

namespace ltmx {

void check_matches(const ModalityInput& input, const ModalityShape& shape, std::size_t modality) {
  const std::string where = "modality " + std::to_string(modality);
  if (kind_of(input) != shape.kind) {
    throw ShapeError(where + ": input kind does not match the configured encoder");
  }
  if (const auto* img = std::get_if<Image>(&input)) {
    if (img->channels != shape.channels || img->height != shape.height || img->width != shape.width) {
      throw ShapeError(where + ": image is " + std::to_string(img->channels) + "x" +
                       std::to_string(img->height) + "x" + std::to_string(img->width) +
                       ", encoder expects " + std::to_string(shape.channels) + "x" +
                       std::to_string(shape.height) + "x" + std::to_string(shape.width));
    }
    if (img->pixels.size() != static_cast<std::size_t>(shape.input_width())) {
      throw ShapeError(where + ": pixel buffer size mismatch");
    }
    return;
  }
  const auto& tab = std::get<TabularFeatures>(input);
  if (tab.categorical.size() != shape.vocab_sizes.size() ||
      static_cast<int>(tab.numeric.size()) != shape.numeric_fields) {
    throw ShapeError(where + ": tabular field counts do not match the schema");
  }
  for (std::size_t f = 0; f < tab.categorical.size(); ++f) {
    if (tab.categorical[f] < 0 || tab.categorical[f] >= shape.vocab_sizes[f]) {
      throw ShapeError(where + ": categorical index out of range in field " + std::to_string(f));
    }
  }
}

bool PairedDataset::all_images() const {
  return std::all_of(shapes.begin(), shapes.end(),
                     [](const ModalityShape& s) { return s.kind == ModalityKind::image; });
}

std::vector<int> PairedDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

PairedDataset PairedDataset::select_modalities(const std::vector<std::size_t>& keep) const {
  PairedDataset out;
  out.num_classes = num_classes;
  for (std::size_t m : keep) {
    if (m >= shapes.size()) throw ConfigError("modality index " + std::to_string(m) + " out of range");
    out.shapes.push_back(shapes[m]);
  }
  out.samples.reserve(samples.size());
  for (const auto& s : samples) {
    PairedSample p;
    p.label = s.label;
    p.id = s.id;
    for (std::size_t m : keep) p.modalities.push_back(s.modalities[m]);
    out.samples.push_back(std::move(p));
  }
  return out;
}

std::int64_t ClassDistribution::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ClassDistribution ClassDistribution::from_counts(std::vector<std::int64_t> counts) {
  ClassDistribution d;
  d.counts = std::move(counts);
  const auto n = d.total();
  if (n <= 0) throw DataError("class distribution of an empty dataset");
  d.priors.resize(d.counts.size());
  for (std::size_t k = 0; k < d.counts.size(); ++k) {
    if (d.counts[k] < 0) throw DataError("negative class count");
    d.priors[k] = static_cast<double>(d.counts[k]) / static_cast<double>(n);
  }
  d.reversed_priors.assign(d.priors.rbegin(), d.priors.rend());
  return d;
}

ClassDistribution class_priors(const PairedDataset& dataset) {
  if (dataset.empty()) throw DataError("class_priors: dataset is empty");
  std::vector<std::int64_t> counts(dataset.num_classes, 0);
  for (const auto& s : dataset.samples) {
    if (s.label < 0 || s.label >= dataset.num_classes) throw DataError("label out of range");
    ++counts[s.label];
  }
  return ClassDistribution::from_counts(std::move(counts));
}

std::string to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::forward: return "forward";
    case SplitKind::uniform: return "uniform";
    case SplitKind::backward: return "backward";
  }
  return "?";
}

SplitKind parse_split_kind(const std::string& s) {
  if (s == "forward") return SplitKind::forward;
  if (s == "uniform") return SplitKind::uniform;
  if (s == "backward") return SplitKind::backward;
  throw ConfigError("unknown distribution kind '" + s + "' (expected forward, uniform or backward)");
}

void DistributionSpec::validate() const {
  if (!std::isfinite(ratio) || ratio < 1.0) {
    throw ConfigError("imbalance ratio must be a finite number >= 1, got " + format_real(ratio));
  }
  if (ratio == 1.0 && kind != SplitKind::uniform) {
    throw ConfigError("ratio 1 is only valid for a uniform split; use kind=uniform");
  }
  if (kind == SplitKind::uniform && ratio != 1.0) {
    throw ConfigError("a uniform split has ratio 1, got " + format_real(ratio));
  }
}

std::string DistributionSpec::id() const {
  if (kind == SplitKind::uniform) return "uniform";
  return to_string(kind) + "-" + format_real(ratio);
}

DistributionSpec DistributionSpec::parse(const std::string& id) {
  DistributionSpec spec;
  const auto dash = id.find('-');
  spec.kind = parse_split_kind(id.substr(0, dash));
  if (dash == std::string::npos) {
    spec.ratio = 1.0;
  } else {
    const std::string r = id.substr(dash + 1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(r.data(), r.data() + r.size(), value);
    if (ec != std::errc() || ptr != r.data() + r.size()) {
      throw ConfigError("bad imbalance ratio in split id '" + id + "'");
    }
    spec.ratio = value;
  }
  spec.validate();
  return spec;
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace ltmx
