#include "ltmx/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ltmx/error.hpp"

namespace ltmx {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;

json shape_to_json(const ModalityShape& s) {
  json j;
  j["kind"] = s.kind == ModalityKind::image ? "image" : "tabular";
  if (s.kind == ModalityKind::image) {
    j["shape"] = {s.channels, s.height, s.width};
  } else {
    j["vocab_sizes"] = s.vocab_sizes;
    j["numeric_fields"] = s.numeric_fields;
  }
  return j;
}

ModalityShape shape_from_json(const json& j) {
  if (j.at("kind") == "image") {
    const auto& s = j.at("shape");
    return ModalityShape::image(s.at(0), s.at(1), s.at(2));
  }
  return ModalityShape::tabular(j.at("vocab_sizes").get<std::vector<int>>(), j.at("numeric_fields"));
}

json model_to_json(const ModelConfig& c) {
  json j;
  j["num_classes"] = c.num_classes;
  j["modalities"] = json::array();
  for (const auto& s : c.modalities) j["modalities"].push_back(shape_to_json(s));
  j["image"] = {{"conv1_channels", c.image.conv1_channels}, {"conv2_channels", c.image.conv2_channels},
                {"kernel", c.image.kernel}, {"fc_layers", c.image.fc_layers}, {"fc_width", c.image.fc_width}};
  j["tabular"] = {{"embedding_dim", c.tabular.embedding_dim}, {"hidden", c.tabular.hidden}};
  j["head_width"] = c.head_width;
  j["init_std"] = c.init_std;
  j["fusion"] = c.fusion == FusionWeighting::tcp ? "tcp" : "none";
  j["separate_expert_encoders"] = c.separate_expert_encoders;
  j["tie_expert_init"] = c.tie_expert_init;
  return j;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.num_classes = j.at("num_classes");
  for (const auto& s : j.at("modalities")) c.modalities.push_back(shape_from_json(s));
  const auto& im = j.at("image");
  c.image = {im.at("conv1_channels"), im.at("conv2_channels"), im.at("kernel"), im.at("fc_layers"), im.at("fc_width")};
  const auto& tb = j.at("tabular");
  c.tabular = {tb.at("embedding_dim"), tb.at("hidden")};
  c.head_width = j.at("head_width");
  c.init_std = j.at("init_std");
  c.fusion = j.at("fusion") == "tcp" ? FusionWeighting::tcp : FusionWeighting::none;
  c.separate_expert_encoders = j.at("separate_expert_encoders");
  c.tie_expert_init = j.at("tie_expert_init");
  return c;
}

json train_to_json(const TrainConfig& t) {
  return {{"lr", t.adam.lr}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps},
          {"batch_size", t.batch_size}, {"epochs", t.epochs}, {"lambda", t.lambda}, {"seed", t.seed}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.adam = {j.at("lr"), j.at("beta1"), j.at("beta2"), j.at("eps")};
  t.batch_size = j.at("batch_size");
  t.epochs = j.at("epochs");
  t.lambda = j.at("lambda");
  t.seed = j.at("seed");
  return t;
}

struct TensorWriter {
  json index = json::array();
  std::vector<const Mat*> blobs;
  std::size_t offset = 0;

  void add(const std::string& name, const Mat& m) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    blobs.push_back(&m);
    offset += static_cast<std::size_t>(m.size());
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ExpertBundle& bundle, const TrainConfig& train,
                     const TrainState& state, const CheckpointMetadata& metadata) {
  TensorWriter tensors;
  const auto params = bundle.parameters();
  for (const auto* p : params) tensors.add(p->name, p->value);
  const auto& m1 = state.optimizer.first_moments();
  const auto& m2 = state.optimizer.second_moments();
  if (!m1.empty()) {
    if (m1.size() != params.size() || m2.size() != params.size()) {
      throw ShapeError("optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) tensors.add("adam.m/" + params[i]->name, m1[i]);
    for (std::size_t i = 0; i < params.size(); ++i) tensors.add("adam.v/" + params[i]->name, m2[i]);
  }

  json header;
  header["model"] = model_to_json(bundle.config());
  header["train"] = train_to_json(train);
  header["optimizer"] = {{"steps", state.optimizer.steps()}, {"has_moments", !m1.empty()}};
  header["epochs_done"] = state.epochs_done;
  header["priors"] = std::vector<double>(state.priors.data(), state.priors.data() + state.priors.size());
  header["metadata"] = metadata;
  header["tensors"] = tensors.index;
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp);
    out << kCheckpointMagic << '\n' << text.size() << '\n' << text;
    for (const Mat* m : tensors.blobs) {
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
    }
    if (!out) throw Error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw Error(path + ": not an " + std::string(kCheckpointMagic) + " checkpoint");
  std::string len_line;
  std::getline(in, len_line);
  std::size_t len = 0;
  try {
    len = std::stoull(len_line);
  } catch (const std::exception&) {
    throw Error(path + ": malformed header length");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(path + ": truncated header");

  LoadedCheckpoint ck;
  json header;
  try {
    header = json::parse(text);
    ck.train = train_from_json(header.at("train"));
    ck.bundle = ExpertBundle(model_from_json(header.at("model")), ck.train.seed);
    ck.metadata = header.at("metadata").get<CheckpointMetadata>();
    ck.state.epochs_done = header.at("epochs_done");
    const auto priors = header.at("priors").get<std::vector<double>>();
    ck.state.priors = Eigen::Map<const Vector>(priors.data(), static_cast<Eigen::Index>(priors.size()));
  } catch (const json::exception& e) {
    throw Error(path + ": bad checkpoint header: " + e.what());
  }

  std::vector<double> blob;
  {
    const auto start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg() - start);
    in.seekg(start);
    if (bytes % sizeof(double) != 0) throw Error(path + ": tensor payload is not a whole number of doubles");
    blob.resize(bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw Error(path + ": truncated tensor payload");
  }

  std::map<std::string, const json*> index;
  for (const auto& t : header.at("tensors")) index[t.at("name").get<std::string>()] = &t;
  auto fill = [&](const std::string& name, Mat& dst) {
    auto it = index.find(name);
    if (it == index.end()) throw Error(path + ": missing tensor " + name);
    const json& t = *it->second;
    const Eigen::Index rows = t.at("rows");
    const Eigen::Index cols = t.at("cols");
    const std::size_t off = t.at("offset");
    if (dst.size() != 0 && (rows != dst.rows() || cols != dst.cols())) {
      throw ShapeError(path + ": tensor " + name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", model expects " + std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()));
    }
    if (off + static_cast<std::size_t>(rows * cols) > blob.size()) throw Error(path + ": tensor " + name + " out of range");
    dst = Eigen::Map<const Mat>(blob.data() + off, rows, cols);
  };

  auto params = ck.bundle.parameters();
  for (auto* p : params) fill(p->name, p->value);
  ck.bundle.zero_grad();

  ck.state.optimizer = nn::Adam(ck.train.adam);
  ck.state.optimizer.set_steps(header.at("optimizer").at("steps"));
  if (header.at("optimizer").at("has_moments").get<bool>()) {
    auto& m1 = ck.state.optimizer.first_moments();
    auto& m2 = ck.state.optimizer.second_moments();
    m1.resize(params.size());
    m2.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      fill("adam.m/" + params[i]->name, m1[i]);
      fill("adam.v/" + params[i]->name, m2[i]);
    }
  }
  return ck;
}

}  // namespace ltmx
