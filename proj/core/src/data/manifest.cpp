#include "ltmx/data/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ltmx/error.hpp"
#include "ltmx/rng.hpp"

namespace ltmx {

std::string SourceRef::str() const { return source + ":" + std::to_string(index); }

SourceRef SourceRef::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw DataError("bad source ref '" + text + "'");
  SourceRef ref;
  ref.source = text.substr(0, colon);
  const char* b = text.data() + colon + 1;
  const char* e = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(b, e, ref.index);
  if (ec != std::errc() || ptr != e || ref.index < 0) throw DataError("bad source index in '" + text + "'");
  return ref;
}

std::vector<std::int64_t> Manifest::class_counts(int num_classes) const {
  std::vector<std::int64_t> counts(num_classes, 0);
  for (const auto& r : records) {
    if (r.label < 0 || r.label >= num_classes) throw DataError("manifest label out of range");
    ++counts[r.label];
  }
  return counts;
}

void Manifest::sort() {
  std::sort(records.begin(), records.end(), [](const ManifestRecord& a, const ManifestRecord& b) {
    return a.label != b.label ? a.label < b.label : a.sample_id < b.sample_id;
  });
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
  out << "version=1 seed=" << manifest.seed << " kind=" << to_string(manifest.spec.kind)
      << " ratio=" << format_real(manifest.spec.ratio) << '\n';
  for (const auto& r : manifest.records) {
    out << r.label << ' ' << r.sample_id;
    for (const auto& ref : r.refs) out << ' ' << ref.str();
    out << '\n';
  }
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  write_manifest(out, manifest);
  if (!out) throw DataError("failed writing manifest '" + path + "'");
}

Manifest read_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest is empty");
  std::istringstream header(line);
  std::map<std::string, std::string> kv;
  std::string tok;
  while (header >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw DataError("bad manifest header token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  if (kv["version"] != "1") throw DataError("unsupported manifest version '" + kv["version"] + "'");
  for (const char* key : {"seed", "kind", "ratio"}) {
    if (!kv.count(key)) throw DataError(std::string("manifest header lacks '") + key + "'");
  }
  m.seed = std::stoull(kv["seed"]);
  m.spec.kind = parse_split_kind(kv["kind"]);
  m.spec.ratio = std::stod(kv["ratio"]);

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    ManifestRecord r;
    if (!(row >> r.label >> r.sample_id)) throw DataError("manifest line " + std::to_string(lineno) + " is malformed");
    std::string ref;
    while (row >> ref) r.refs.push_back(SourceRef::parse(ref));
    if (r.refs.empty()) throw DataError("manifest line " + std::to_string(lineno) + " has no source refs");
    m.records.push_back(std::move(r));
  }
  return m;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  return read_manifest(in);
}

Manifest pair_modalities(const std::vector<const LabeledSource*>& sources, std::uint64_t seed) {
  if (sources.empty()) throw ConfigError("pair_modalities needs at least one source");
  const int k = sources.front()->num_classes();
  std::vector<std::vector<std::vector<std::int64_t>>> by_class(sources.size());
  for (std::size_t m = 0; m < sources.size(); ++m) {
    const auto* src = sources[m];
    if (src->num_classes() != k) {
      throw ConfigError("label sets differ: '" + sources.front()->name() + "' has " + std::to_string(k) +
                        " classes, '" + src->name() + "' has " + std::to_string(src->num_classes()));
    }
    by_class[m].resize(k);
    for (std::size_t i = 0; i < src->size(); ++i) {
      const int y = src->label(i);
      if (y < 0 || y >= k) throw ConfigError(src->name() + ": label " + std::to_string(y) + " outside the label set");
      by_class[m][y].push_back(static_cast<std::int64_t>(i));
    }
    for (int c = 0; c < k; ++c) {
      if (by_class[m][c].empty()) {
        throw ConfigError("class " + std::to_string(c) + " is empty in source '" + src->name() + "'");
      }
    }
  }

  Manifest out;
  out.seed = seed;
  out.spec = {SplitKind::uniform, 1.0};
  std::int64_t next_id = 0;
  for (int c = 0; c < k; ++c) {
    std::size_t pairs = by_class[0][c].size();
    for (std::size_t m = 1; m < sources.size(); ++m) pairs = std::min(pairs, by_class[m][c].size());
    for (std::size_t m = 0; m < sources.size(); ++m) {
      Rng rng = make_rng(seed, "pair/" + sources[m]->name(), static_cast<std::uint64_t>(c));
      std::shuffle(by_class[m][c].begin(), by_class[m][c].end(), rng);
    }
    for (std::size_t j = 0; j < pairs; ++j) {
      ManifestRecord r;
      r.label = c;
      r.sample_id = next_id++;
      for (std::size_t m = 0; m < sources.size(); ++m) r.refs.push_back({sources[m]->name(), by_class[m][c][j]});
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<std::int64_t> longtail_counts(int num_classes, const DistributionSpec& spec, std::int64_t head_count) {
  spec.validate();
  if (num_classes < 1) throw ConfigError("need at least one class");
  if (head_count < 1) throw ConfigError("head class count must be positive");
  std::vector<std::int64_t> counts(num_classes, head_count);
  if (spec.kind == SplitKind::uniform || num_classes == 1) return counts;
  for (int k = 0; k < num_classes; ++k) {
    const double exponent = -static_cast<double>(k) / static_cast<double>(num_classes - 1);
    const double target = static_cast<double>(head_count) * std::pow(spec.ratio, exponent);
    counts[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(target + 0.5)));
  }
  if (spec.kind == SplitKind::backward) std::reverse(counts.begin(), counts.end());
  return counts;
}

namespace {

std::vector<std::vector<const ManifestRecord*>> group_by_class(const Manifest& m, int num_classes) {
  std::vector<std::vector<const ManifestRecord*>> groups(num_classes);
  for (const auto& r : m.records) {
    if (r.label < 0 || r.label >= num_classes) throw DataError("manifest label out of range");
    groups[r.label].push_back(&r);
  }
  for (auto& g : groups) {
    std::sort(g.begin(), g.end(), [](auto* a, auto* b) { return a->sample_id < b->sample_id; });
  }
  return groups;
}

}  // namespace

Manifest subsample_longtailed(const Manifest& pool, int num_classes, const DistributionSpec& spec,
                              std::uint64_t seed, std::optional<std::int64_t> head_count) {
  auto groups = group_by_class(pool, num_classes);
  std::int64_t head = 0;
  if (head_count) {
    head = *head_count;
  } else {
    head = static_cast<std::int64_t>(groups.front().size());
    for (const auto& g : groups) head = std::min<std::int64_t>(head, static_cast<std::int64_t>(g.size()));
  }
  const auto targets = longtail_counts(num_classes, spec, head);
  for (int k = 0; k < num_classes; ++k) {
    const auto have = static_cast<std::int64_t>(groups[k].size());
    if (have < targets[k]) {
      throw DataError("class " + std::to_string(k) + " needs " + std::to_string(targets[k]) + " samples but only " +
                      std::to_string(have) + " are available (short by " + std::to_string(targets[k] - have) + ")");
    }
  }
  Manifest out;
  out.seed = seed;
  out.spec = spec;
  for (int k = 0; k < num_classes; ++k) {
    auto members = groups[k];
    Rng rng = make_rng(seed, "subsample/" + spec.id(), static_cast<std::uint64_t>(k));
    std::shuffle(members.begin(), members.end(), rng);
    for (std::int64_t j = 0; j < targets[k]; ++j) out.records.push_back(*members[j]);
  }
  out.sort();
  return out;
}

std::pair<Manifest, Manifest> split_stratified(const Manifest& manifest, int num_classes, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must be in (0,1)");
  auto groups = group_by_class(manifest, num_classes);
  Manifest first;
  Manifest second;
  first.seed = second.seed = seed;
  first.spec = second.spec = manifest.spec;
  for (int k = 0; k < num_classes; ++k) {
    auto members = groups[k];
    Rng rng = make_rng(seed, "split", static_cast<std::uint64_t>(k));
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_first = static_cast<std::size_t>(std::floor(fraction * members.size() + 0.5));
    for (std::size_t j = 0; j < members.size(); ++j) (j < n_first ? first : second).records.push_back(*members[j]);
  }
  first.sort();
  second.sort();
  return {std::move(first), std::move(second)};
}

Manifest exclude(const Manifest& manifest, const Manifest& used) {
  std::set<std::int64_t> ids;
  for (const auto& r : used.records) ids.insert(r.sample_id);
  Manifest out = manifest;
  std::erase_if(out.records, [&](const ManifestRecord& r) { return ids.count(r.sample_id) > 0; });
  return out;
}

ClassDistribution class_priors(const Manifest& manifest, int num_classes) {
  if (manifest.records.empty()) throw DataError("class_priors: manifest is empty");
  return ClassDistribution::from_counts(manifest.class_counts(num_classes));
}

PairedDataset materialize(const Manifest& manifest, const std::vector<const LabeledSource*>& sources,
                          int num_classes) {
  std::unordered_map<std::string, const LabeledSource*> by_name;
  for (const auto* s : sources) by_name[s->name()] = s;

  PairedDataset ds;
  ds.num_classes = num_classes;
  if (manifest.records.empty()) return ds;
  for (const auto& ref : manifest.records.front().refs) {
    const auto it = by_name.find(ref.source);
    if (it == by_name.end()) throw DataError("manifest references unknown source '" + ref.source + "'");
    ds.shapes.push_back(it->second->shape());
  }
  ds.samples.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    if (r.refs.size() != ds.shapes.size()) throw DataError("manifest records disagree on modality count");
    if (r.label < 0 || r.label >= num_classes) throw DataError("manifest label out of range");
    PairedSample s;
    s.label = r.label;
    s.id = r.sample_id;
    for (std::size_t m = 0; m < r.refs.size(); ++m) {
      const auto it = by_name.find(r.refs[m].source);
      if (it == by_name.end()) throw DataError("manifest references unknown source '" + r.refs[m].source + "'");
      const auto* src = it->second;
      const auto idx = static_cast<std::size_t>(r.refs[m].index);
      if (idx >= src->size()) throw DataError("ref " + r.refs[m].str() + " is out of range");
      if (src->label(idx) != r.label) {
        throw DataError("ref " + r.refs[m].str() + " has label " + std::to_string(src->label(idx)) +
                        " but the record says " + std::to_string(r.label));
      }
      s.modalities.push_back(src->load(idx));
      check_matches(s.modalities.back(), ds.shapes[m], m);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ltmx
