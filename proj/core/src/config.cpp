#include "ltmx/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "ltmx/error.hpp"

namespace ltmx {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::proposed: return "proposed";
    case Variant::no_tcp: return "no_tcp";
    case Variant::single_modality: return "single_modality";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "proposed") return Variant::proposed;
  if (s == "no_tcp") return Variant::no_tcp;
  if (s == "single_modality") return Variant::single_modality;
  throw ConfigError("unknown model variant '" + s + "' (expected proposed, no_tcp or single_modality)");
}

namespace {

const char* source_type_name(SourceType t) {
  switch (t) {
    case SourceType::synthetic_digits: return "synthetic-digits";
    case SourceType::idx: return "idx";
    case SourceType::svhn_mat: return "svhn-mat";
    case SourceType::lesion_images: return "lesion-images";
    case SourceType::lesion_metadata: return "lesion-metadata";
  }
  return "?";
}

SourceType parse_source_type(const std::string& s, const std::string& where) {
  for (auto t : {SourceType::synthetic_digits, SourceType::idx, SourceType::svhn_mat, SourceType::lesion_images,
                 SourceType::lesion_metadata}) {
    if (s == source_type_name(t)) return t;
  }
  throw ConfigError(where + ": unknown source type '" + s + "'");
}

bool is_image_source(SourceType t) { return t != SourceType::lesion_metadata; }

// Wraps a YAML map, converting values with field-path error messages and
// rejecting keys nobody asked for.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_ + ": expected a mapping");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0 || !node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown field");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const YAML::Node& n = node_;
    if (!n || !n.IsMap() || !n[key] || n[key].IsNull()) return;
    try {
      out = n[key].template as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key) + ": invalid value");
    }
  }
  YAML::Node child(const std::string& key) {
    seen_.insert(key);
    const YAML::Node& n = node_;
    if (!n || !n.IsMap() || !n[key] || n[key].IsNull()) return YAML::Node();
    return n[key];
  }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

DistributionSpec parse_spec(const std::string& text, const std::string& where) {
  try {
    return DistributionSpec::parse(text);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::vector<DistributionSpec> parse_spec_list(const YAML::Node& node, const std::string& where) {
  std::vector<DistributionSpec> out;
  if (!node || node.IsNull()) return out;
  if (!node.IsSequence()) throw ConfigError(where + ": expected a list");
  for (std::size_t i = 0; i < node.size(); ++i) {
    out.push_back(parse_spec(node[i].as<std::string>(), where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

void parse_adam(Section& s, nn::AdamConfig& a) {
  s.get("lr", a.lr);
  s.get("beta1", a.beta1);
  s.get("beta2", a.beta2);
  s.get("eps", a.eps);
}

SourceConfig parse_source(const YAML::Node& node, const std::string& where) {
  SourceConfig c;
  Section s(node, where);
  s.get("name", c.name);
  std::string type = source_type_name(c.type);
  s.get("type", type);
  c.type = parse_source_type(type, s.field("type"));
  std::string style = "gray28";
  s.get("style", style);
  if (style == "gray28") c.digits.style = DigitStyle::gray28;
  else if (style == "color32") c.digits.style = DigitStyle::color32;
  else throw ConfigError(s.field("style") + ": expected gray28 or color32");
  s.get("per_class", c.digits.per_class);
  s.get("corruption", c.digits.corruption);
  s.get("noise", c.digits.noise);
  s.get("benign", c.lesion.benign);
  s.get("malignant", c.lesion.malignant);
  s.get("image_size", c.lesion.image_size);
  s.get("images", c.images);
  s.get("labels", c.labels);
  s.get("path", c.path);
  return c;
}

YAML::Node real(double v) { return YAML::Node(format_real(v)); }

YAML::Node spec_list(const std::vector<DistributionSpec>& specs) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (const auto& s : specs) n.push_back(s.id());
  return n;
}

YAML::Node adam_node(const nn::AdamConfig& a) {
  YAML::Node n;
  n["lr"] = real(a.lr);
  n["beta1"] = real(a.beta1);
  n["beta2"] = real(a.beta2);
  n["eps"] = real(a.eps);
  return n;
}

nlohmann::json to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      auto j = nlohmann::json::object();
      for (const auto& kv : node) j[kv.first.as<std::string>()] = to_json(kv.second);
      return j;
    }
    case YAML::NodeType::Sequence: {
      auto j = nlohmann::json::array();
      for (const auto& v : node) j.push_back(to_json(v));
      return j;
    }
    case YAML::NodeType::Scalar: {
      const auto text = node.Scalar();
      if (text == "true" || text == "false") return text == "true";
      try {
        std::size_t used = 0;
        const long long i = std::stoll(text, &used);
        if (used == text.size()) return i;
      } catch (const std::exception&) {
      }
      try {
        std::size_t used = 0;
        const double d = std::stod(text, &used);
        if (used == text.size()) return d;
      } catch (const std::exception&) {
      }
      return text;
    }
    default:
      return nullptr;
  }
}

YAML::Node to_yaml(const ExperimentConfig& c) {
  YAML::Node root;
  root["name"] = c.name;
  root["seed"] = c.seed;
  YAML::Node seeds(YAML::NodeType::Sequence);
  for (auto s : c.seeds) seeds.push_back(s);
  root["seeds"] = seeds;
  root["output_dir"] = c.output_dir;
  root["case"] = c.case_kind == CaseKind::case1 ? "case1" : "case2";

  YAML::Node ds;
  ds["num_classes"] = c.dataset.num_classes;
  ds["source_seed"] = c.dataset.source_seed;
  ds["split"] = c.dataset.split == SplitMode::pools ? "pools" : "stratified";
  ds["test_pool_fraction"] = real(c.dataset.test_pool_fraction);
  ds["train_fraction"] = real(c.dataset.train_fraction);
  ds["head_count"] = c.dataset.head_count;
  ds["test_head_count"] = c.dataset.test_head_count;
  YAML::Node sources(YAML::NodeType::Sequence);
  for (const auto& s : c.dataset.sources) {
    YAML::Node n;
    n["name"] = s.name;
    n["type"] = source_type_name(s.type);
    switch (s.type) {
      case SourceType::synthetic_digits:
        n["style"] = s.digits.style == DigitStyle::gray28 ? "gray28" : "color32";
        n["per_class"] = s.digits.per_class;
        n["corruption"] = real(s.digits.corruption);
        n["noise"] = real(s.digits.noise);
        break;
      case SourceType::idx:
        n["images"] = s.images;
        n["labels"] = s.labels;
        break;
      case SourceType::svhn_mat:
        n["path"] = s.path;
        break;
      case SourceType::lesion_images:
      case SourceType::lesion_metadata:
        n["benign"] = s.lesion.benign;
        n["malignant"] = s.lesion.malignant;
        n["image_size"] = s.lesion.image_size;
        break;
    }
    sources.push_back(n);
  }
  ds["sources"] = sources;
  root["dataset"] = ds;

  root["train"] = c.train.id();
  root["tests"] = spec_list(c.tests);

  YAML::Node model;
  model["variant"] = to_string(c.variant);
  model["head_width"] = c.model.head_width;
  model["init_std"] = real(c.model.init_std);
  model["separate_expert_encoders"] = c.model.separate_expert_encoders;
  model["single_modality_index"] = c.model.single_modality_index;
  YAML::Node image;
  image["conv1_channels"] = c.model.image.conv1_channels;
  image["conv2_channels"] = c.model.image.conv2_channels;
  image["kernel"] = c.model.image.kernel;
  image["fc_layers"] = c.model.image.fc_layers;
  image["fc_width"] = c.model.image.fc_width;
  model["image"] = image;
  YAML::Node tab;
  tab["embedding_dim"] = c.model.tabular.embedding_dim;
  tab["hidden"] = c.model.tabular.hidden;
  model["tabular"] = tab;
  root["model"] = model;

  YAML::Node opt = adam_node(c.optimizer.adam);
  opt["batch_size"] = c.optimizer.batch_size;
  opt["epochs"] = c.optimizer.epochs;
  opt["lambda"] = real(c.optimizer.lambda);
  root["optimizer"] = opt;

  YAML::Node ad = adam_node(c.adaptation.adam);
  ad["epochs"] = c.adaptation.epochs;
  ad["batch_size"] = c.adaptation.batch_size;
  ad["stability"] = c.adaptation.mode == StabilityMode::probs ? "probs" : "logits";
  root["adaptation"] = ad;

  YAML::Node aug;
  aug["pad"] = c.augment.pad;
  aug["horizontal_flip"] = c.augment.horizontal_flip;
  aug["flip_probability"] = real(c.augment.flip_probability);
  aug["brightness"] = real(c.augment.brightness);
  aug["contrast"] = real(c.augment.contrast);
  root["augment"] = aug;

  YAML::Node grid;
  grid["train"] = spec_list(c.grid.train);
  YAML::Node variants(YAML::NodeType::Sequence);
  for (auto v : c.grid.variants) variants.push_back(to_string(v));
  grid["variants"] = variants;
  root["grid"] = grid;
  return root;
}

}  // namespace

std::vector<std::string> ExperimentConfig::test_split_ids() const {
  if (dataset.split == SplitMode::stratified) return {"matched"};
  std::vector<std::string> ids;
  for (const auto& t : tests) ids.push_back(t.id());
  return ids;
}

std::vector<std::uint64_t> ExperimentConfig::repetition_seeds() const {
  return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  ExperimentConfig c;
  {
    Section s(root, "");
    s.get("name", c.name);
    s.get("seed", c.seed);
    s.get("seeds", c.seeds);
    s.get("output_dir", c.output_dir);
    std::string kind = "case1";
    s.get("case", kind);
    if (kind == "case1") c.case_kind = CaseKind::case1;
    else if (kind == "case2") c.case_kind = CaseKind::case2;
    else throw ConfigError("case: expected case1 or case2");

    {
      Section d(s.child("dataset"), "dataset");
      d.get("num_classes", c.dataset.num_classes);
      d.get("source_seed", c.dataset.source_seed);
      std::string split = "pools";
      d.get("split", split);
      if (split == "pools") c.dataset.split = SplitMode::pools;
      else if (split == "stratified") c.dataset.split = SplitMode::stratified;
      else throw ConfigError("dataset.split: expected pools or stratified");
      d.get("test_pool_fraction", c.dataset.test_pool_fraction);
      d.get("train_fraction", c.dataset.train_fraction);
      d.get("head_count", c.dataset.head_count);
      d.get("test_head_count", c.dataset.test_head_count);
      const auto sources = d.child("sources");
      if (sources && !sources.IsNull() && !sources.IsSequence()) throw ConfigError("dataset.sources: expected a list");
      for (std::size_t i = 0; sources && sources.IsSequence() && i < sources.size(); ++i) {
        c.dataset.sources.push_back(parse_source(sources[i], "dataset.sources[" + std::to_string(i) + "]"));
      }
    }

    std::string train = c.train.id();
    s.get("train", train);
    c.train = parse_spec(train, "train");
    c.tests = parse_spec_list(s.child("tests"), "tests");

    {
      Section m(s.child("model"), "model");
      std::string variant = to_string(c.variant);
      m.get("variant", variant);
      try {
        c.variant = parse_variant(variant);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("model.variant: ") + e.what());
      }
      m.get("head_width", c.model.head_width);
      m.get("init_std", c.model.init_std);
      m.get("separate_expert_encoders", c.model.separate_expert_encoders);
      m.get("single_modality_index", c.model.single_modality_index);
      Section im(m.child("image"), "model.image");
      im.get("conv1_channels", c.model.image.conv1_channels);
      im.get("conv2_channels", c.model.image.conv2_channels);
      im.get("kernel", c.model.image.kernel);
      im.get("fc_layers", c.model.image.fc_layers);
      im.get("fc_width", c.model.image.fc_width);
      Section tb(m.child("tabular"), "model.tabular");
      tb.get("embedding_dim", c.model.tabular.embedding_dim);
      tb.get("hidden", c.model.tabular.hidden);
    }
    {
      Section o(s.child("optimizer"), "optimizer");
      parse_adam(o, c.optimizer.adam);
      o.get("batch_size", c.optimizer.batch_size);
      o.get("epochs", c.optimizer.epochs);
      o.get("lambda", c.optimizer.lambda);
    }
    {
      Section a(s.child("adaptation"), "adaptation");
      parse_adam(a, c.adaptation.adam);
      a.get("epochs", c.adaptation.epochs);
      a.get("batch_size", c.adaptation.batch_size);
      std::string mode = "probs";
      a.get("stability", mode);
      if (mode == "probs") c.adaptation.mode = StabilityMode::probs;
      else if (mode == "logits") c.adaptation.mode = StabilityMode::logits;
      else throw ConfigError("adaptation.stability: expected probs or logits");
    }
    {
      Section a(s.child("augment"), "augment");
      a.get("pad", c.augment.pad);
      a.get("horizontal_flip", c.augment.horizontal_flip);
      a.get("flip_probability", c.augment.flip_probability);
      a.get("brightness", c.augment.brightness);
      a.get("contrast", c.augment.contrast);
    }
    {
      Section g(s.child("grid"), "grid");
      c.grid.train = parse_spec_list(g.child("train"), "grid.train");
      const auto variants = g.child("variants");
      if (variants && !variants.IsNull() && !variants.IsSequence()) throw ConfigError("grid.variants: expected a list");
      for (std::size_t i = 0; variants && variants.IsSequence() && i < variants.size(); ++i) {
        try {
          c.grid.variants.push_back(parse_variant(variants[i].as<std::string>()));
        } catch (const ConfigError& e) {
          throw ConfigError("grid.variants[" + std::to_string(i) + "]: " + e.what());
        }
      }
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  YAML::Emitter out;
  out << to_yaml(config);
  return std::string(out.c_str()) + "\n";
}

std::string config_to_json(const ExperimentConfig& config) { return to_json(to_yaml(config)).dump(2) + "\n"; }

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  const auto& d = c.dataset;
  if (d.num_classes < 2) fail("dataset.num_classes", "must be at least 2");
  if (d.sources.empty()) fail("dataset.sources", "at least one source is required");
  std::set<std::string> names;
  for (std::size_t i = 0; i < d.sources.size(); ++i) {
    const auto& s = d.sources[i];
    const std::string where = "dataset.sources[" + std::to_string(i) + "]";
    if (s.name.empty()) fail(where + ".name", "must not be empty");
    if (s.name.find_first_of(": \t") != std::string::npos) fail(where + ".name", "must not contain ':' or spaces");
    if (!names.insert(s.name).second) fail(where + ".name", "duplicate source name '" + s.name + "'");
    switch (s.type) {
      case SourceType::synthetic_digits:
        if (d.num_classes != 10) fail("dataset.num_classes", "synthetic digit sources have 10 classes");
        if (s.digits.per_class < 1) fail(where + ".per_class", "must be positive");
        if (s.digits.corruption < 0.0 || s.digits.corruption > 1.0) fail(where + ".corruption", "must be in [0,1]");
        if (s.digits.noise < 0.0) fail(where + ".noise", "must be nonnegative");
        break;
      case SourceType::idx:
        if (s.images.empty() || s.labels.empty()) fail(where, "idx sources need 'images' and 'labels' paths");
        break;
      case SourceType::svhn_mat:
        if (s.path.empty()) fail(where + ".path", "required for svhn-mat sources");
        break;
      case SourceType::lesion_images:
      case SourceType::lesion_metadata:
        if (d.num_classes != 2) fail("dataset.num_classes", "lesion sources have 2 classes");
        if (s.lesion.benign < 1 || s.lesion.malignant < 1) fail(where, "benign and malignant counts must be positive");
        if (s.lesion.image_size < 16) fail(where + ".image_size", "must be at least 16");
        break;
    }
    if (c.case_kind == CaseKind::case1 && !is_image_source(s.type)) {
      fail(where + ".type", "case1 adapts at test time through augmentation and requires image-only modalities; "
                            "use case2 for tabular sources");
    }
  }
  if (!(d.test_pool_fraction > 0.0 && d.test_pool_fraction < 1.0)) fail("dataset.test_pool_fraction", "must be in (0,1)");
  if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) fail("dataset.train_fraction", "must be in (0,1)");
  if (d.head_count < 0) fail("dataset.head_count", "must be nonnegative");
  if (d.test_head_count < 0) fail("dataset.test_head_count", "must be nonnegative");

  auto check_spec = [&](const DistributionSpec& s, const std::string& field) {
    try {
      s.validate();
    } catch (const ConfigError& e) {
      fail(field, e.what());
    }
  };
  check_spec(c.train, "train");
  for (std::size_t i = 0; i < c.tests.size(); ++i) check_spec(c.tests[i], "tests[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < c.grid.train.size(); ++i) check_spec(c.grid.train[i], "grid.train[" + std::to_string(i) + "]");
  if (d.split == SplitMode::pools && c.tests.empty()) fail("tests", "at least one test split is required");
  if (d.split == SplitMode::stratified && !c.tests.empty()) {
    fail("tests", "stratified splits test on the matched held-out part; leave the list empty");
  }

  std::set<std::uint64_t> seen;
  for (auto s : c.seeds) {
    if (!seen.insert(s).second) fail("seeds", "duplicate seed " + std::to_string(s));
  }

  const auto& m = c.model;
  if (m.head_width < 1) fail("model.head_width", "must be positive");
  if (!(m.init_std > 0.0)) fail("model.init_std", "must be positive");
  if (m.image.conv1_channels < 1 || m.image.conv2_channels < 1) fail("model.image", "channel counts must be positive");
  if (m.image.kernel < 1) fail("model.image.kernel", "must be positive");
  if (m.image.fc_layers < 0) fail("model.image.fc_layers", "must be nonnegative");
  if (m.image.fc_width < 1) fail("model.image.fc_width", "must be positive");
  if (m.tabular.embedding_dim < 1 || m.tabular.hidden < 1) fail("model.tabular", "sizes must be positive");
  if (m.single_modality_index < 0 || m.single_modality_index >= static_cast<int>(d.sources.size())) {
    fail("model.single_modality_index", "out of range for " + std::to_string(d.sources.size()) + " sources");
  }

  auto check_adam = [&](const nn::AdamConfig& a, const std::string& where) {
    if (!(a.lr > 0.0)) fail(where + ".lr", "must be positive");
    if (!(a.beta1 >= 0.0 && a.beta1 < 1.0)) fail(where + ".beta1", "must be in [0,1)");
    if (!(a.beta2 >= 0.0 && a.beta2 < 1.0)) fail(where + ".beta2", "must be in [0,1)");
    if (!(a.eps > 0.0)) fail(where + ".eps", "must be positive");
  };
  check_adam(c.optimizer.adam, "optimizer");
  if (c.optimizer.batch_size < 1) fail("optimizer.batch_size", "must be positive");
  if (c.optimizer.epochs < 0) fail("optimizer.epochs", "must be nonnegative");
  if (c.optimizer.lambda < 0.0) fail("optimizer.lambda", "must be nonnegative");
  check_adam(c.adaptation.adam, "adaptation");
  if (c.adaptation.batch_size < 1) fail("adaptation.batch_size", "must be positive");
  if (c.adaptation.epochs < 0) fail("adaptation.epochs", "must be nonnegative");

  const auto& a = c.augment;
  if (a.pad < 0) fail("augment.pad", "must be nonnegative");
  if (a.flip_probability < 0.0 || a.flip_probability > 1.0) fail("augment.flip_probability", "must be in [0,1]");
  if (a.brightness < 0.0) fail("augment.brightness", "must be nonnegative");
  if (a.contrast < 0.0 || a.contrast >= 1.0) fail("augment.contrast", "must be in [0,1)");
}

std::vector<std::unique_ptr<LabeledSource>> build_sources(const DatasetConfig& config) {
  std::vector<std::unique_ptr<LabeledSource>> out;
  for (const auto& s : config.sources) {
    switch (s.type) {
      case SourceType::synthetic_digits:
        out.push_back(std::make_unique<SyntheticDigitSource>(s.name, s.digits, config.source_seed));
        break;
      case SourceType::idx:
        out.push_back(read_idx_source(s.name, s.images, s.labels));
        break;
      case SourceType::svhn_mat:
        out.push_back(read_svhn_mat_source(s.name, s.path));
        break;
      case SourceType::lesion_images:
        out.push_back(std::make_unique<LesionImageSource>(s.name, s.lesion, config.source_seed));
        break;
      case SourceType::lesion_metadata:
        out.push_back(make_lesion_metadata_source(s.name, s.lesion, config.source_seed));
        break;
    }
    if (out.back()->num_classes() != config.num_classes) {
      throw ConfigError("dataset.sources: '" + s.name + "' has " + std::to_string(out.back()->num_classes()) +
                        " classes, config declares " + std::to_string(config.num_classes));
    }
  }
  return out;
}

std::vector<std::size_t> variant_modalities(const ExperimentConfig& config, std::size_t num_modalities,
                                            Variant variant) {
  if (variant == Variant::single_modality) {
    return {static_cast<std::size_t>(config.model.single_modality_index)};
  }
  std::vector<std::size_t> all(num_modalities);
  for (std::size_t i = 0; i < num_modalities; ++i) all[i] = i;
  return all;
}

ModelConfig model_config_for(const ExperimentConfig& config, const std::vector<ModalityShape>& shapes, Variant variant) {
  ModelConfig m;
  m.num_classes = config.dataset.num_classes;
  for (std::size_t i : variant_modalities(config, shapes.size(), variant)) m.modalities.push_back(shapes.at(i));
  m.image = config.model.image;
  m.tabular = config.model.tabular;
  m.head_width = config.model.head_width;
  m.init_std = config.model.init_std;
  m.fusion = variant == Variant::no_tcp ? FusionWeighting::none : FusionWeighting::tcp;
  m.separate_expert_encoders = config.model.separate_expert_encoders;
  return m;
}

}  // namespace ltmx
