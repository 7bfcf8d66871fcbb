#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ltmx/data/source.hpp"
#include "ltmx/data/types.hpp"

namespace ltmx {

struct SourceRef {
  std::string source;
  std::int64_t index = 0;

  std::string str() const;
  static SourceRef parse(const std::string& text);
  bool operator==(const SourceRef&) const = default;
};

struct ManifestRecord {
  int label = 0;
  std::int64_t sample_id = 0;
  std::vector<SourceRef> refs;
  bool operator==(const ManifestRecord&) const = default;
};

// Which source items make up a split. Records are kept sorted by class, then
// sample id.
struct Manifest {
  std::uint64_t seed = 0;
  DistributionSpec spec;
  std::vector<ManifestRecord> records;

  std::vector<std::int64_t> class_counts(int num_classes) const;
  void sort();
  bool operator==(const Manifest&) const = default;
};

void write_manifest(std::ostream& out, const Manifest& manifest);
void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(std::istream& in);
Manifest read_manifest(const std::string& path);

// Pair items of equal label across sources. Each class yields
// min_m(count_m,k) pairs; within a class every source is shuffled with a
// seed-derived permutation and the prefixes are zipped. Leftover items are
// discarded. Throws ConfigError on label-set mismatch or an empty class.
Manifest pair_modalities(const std::vector<const LabeledSource*>& sources, std::uint64_t seed);

// N_k = round_half_up(head * ratio^(-k/(K-1))) for a forward split with class
// 0 as head, reversed for backward, constant for uniform; never below 1.
std::vector<std::int64_t> longtail_counts(int num_classes, const DistributionSpec& spec,
                                          std::int64_t head_count);

// Draw a long-tailed subset without replacement. head_count defaults to the
// smallest available class size. Throws DataError naming the class and
// shortfall if any class is too small.
Manifest subsample_longtailed(const Manifest& pool, int num_classes, const DistributionSpec& spec,
                              std::uint64_t seed,
                              std::optional<std::int64_t> head_count = std::nullopt);

// Per-class split into (first, second) with round(fraction * N_k) records in
// the first part, preserving the class ratio.
std::pair<Manifest, Manifest> split_stratified(const Manifest& manifest, int num_classes,
                                               double fraction, std::uint64_t seed);

// Remove records whose ids appear in `used`, e.g. to keep train and test
// pools disjoint.
Manifest exclude(const Manifest& manifest, const Manifest& used);

ClassDistribution class_priors(const Manifest& manifest, int num_classes);

// Resolve refs against named sources and load every modality.
PairedDataset materialize(const Manifest& manifest, const std::vector<const LabeledSource*>& sources,
                          int num_classes);

}  // namespace ltmx
