#include "ltmx/model.hpp"

#include "ltmx/error.hpp"
#include "ltmx/hash.hpp"

namespace ltmx {

// --- batching ---------------------------------------------------------------

Batch make_batch(std::span<const PairedSample* const> samples, const std::vector<ModalityShape>& shapes) {
  Batch batch;
  const auto n = static_cast<Eigen::Index>(samples.size());
  batch.labels.reserve(samples.size());
  for (std::size_t m = 0; m < shapes.size(); ++m) {
    const auto& shape = shapes[m];
    ModalityBatch mb;
    if (shape.kind == ModalityKind::image) {
      mb.dense.resize(n, shape.input_width());
    } else {
      mb.categorical.resize(n, static_cast<Eigen::Index>(shape.vocab_sizes.size()));
      mb.dense.resize(n, shape.numeric_fields);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = *samples[i];
      if (s.modalities.size() != shapes.size()) {
        throw ShapeError("sample has " + std::to_string(s.modalities.size()) + " modalities, model expects " +
                         std::to_string(shapes.size()));
      }
      check_matches(s.modalities[m], shape, m);
      if (const auto* img = std::get_if<Image>(&s.modalities[m])) {
        mb.dense.row(i) = Eigen::Map<const RowVec>(img->pixels.data(), static_cast<Eigen::Index>(img->pixels.size()));
      } else {
        const auto& tab = std::get<TabularFeatures>(s.modalities[m]);
        for (std::size_t f = 0; f < tab.categorical.size(); ++f) mb.categorical(i, f) = tab.categorical[f];
        for (std::size_t f = 0; f < tab.numeric.size(); ++f) mb.dense(i, f) = tab.numeric[f];
      }
    }
    batch.modalities.push_back(std::move(mb));
  }
  for (Eigen::Index i = 0; i < n; ++i) batch.labels.push_back(samples[i]->label);
  return batch;
}

Batch make_batch(const PairedDataset& dataset, std::span<const std::size_t> indices) {
  std::vector<const PairedSample*> ptrs;
  ptrs.reserve(indices.size());
  for (std::size_t i : indices) ptrs.push_back(&dataset.samples.at(i));
  return make_batch(ptrs, dataset.shapes);
}

// --- encoders ---------------------------------------------------------------

ImageEncoder::ImageEncoder(const std::string& name, const ModalityShape& shape, const ImageEncoderConfig& config) {
  if (shape.kind != ModalityKind::image) throw ConfigError(name + ": image encoder needs an image modality");
  conv1_ = nn::Conv2d(name + ".conv1", shape.channels, config.conv1_channels, config.kernel, shape.height, shape.width);
  pool1_ = {config.conv1_channels, conv1_.out_height(), conv1_.out_width()};
  if (pool1_.out_height() < config.kernel || pool1_.out_width() < config.kernel) {
    throw ConfigError(name + ": input too small for two conv/pool stages with kernel " + std::to_string(config.kernel));
  }
  conv2_ = nn::Conv2d(name + ".conv2", config.conv1_channels, config.conv2_channels, config.kernel,
                      pool1_.out_height(), pool1_.out_width());
  pool2_ = {config.conv2_channels, conv2_.out_height(), conv2_.out_width()};
  out_width_ = config.conv2_channels * pool2_.out_height() * pool2_.out_width();
  if (out_width_ <= 0) throw ConfigError(name + ": encoder output is empty");
  for (int i = 0; i < config.fc_layers; ++i) {
    fcs_.emplace_back(name + ".fc" + std::to_string(i + 1), out_width_, config.fc_width);
    out_width_ = config.fc_width;
  }
}

void ImageEncoder::init(Rng& rng) {
  nn::init_fan_in_uniform(conv1_.weight, conv1_.fan_in(), rng);
  nn::init_fan_in_uniform(conv1_.bias, conv1_.fan_in(), rng);
  nn::init_fan_in_uniform(conv2_.weight, conv2_.fan_in(), rng);
  nn::init_fan_in_uniform(conv2_.bias, conv2_.fan_in(), rng);
  for (auto& fc : fcs_) {
    nn::init_fan_in_uniform(fc.weight, fc.in_features(), rng);
    nn::init_fan_in_uniform(fc.bias, fc.in_features(), rng);
  }
}

Mat ImageEncoder::forward(const ModalityBatch& x, EncoderCache* cache) const {
  Mat z1 = conv1_.forward(x.dense);
  IndexMat arg1;
  IndexMat arg2;
  Mat q1 = pool1_.forward(nn::relu(z1), cache ? &arg1 : nullptr);
  Mat z2 = conv2_.forward(q1);
  Mat h = pool2_.forward(nn::relu(z2), cache ? &arg2 : nullptr);
  if (cache) {
    cache->acts = {std::move(z1), std::move(q1), std::move(z2)};
    cache->pools = {std::move(arg1), std::move(arg2)};
  }
  for (const auto& fc : fcs_) {
    Mat z = fc.forward(h);
    if (cache) {
      cache->acts.push_back(std::move(h));
      cache->acts.push_back(z);
    }
    h = nn::relu(z);
  }
  return h;
}

void ImageEncoder::backward(const ModalityBatch& x, const EncoderCache& cache, const Mat& dh) {
  Mat g = dh;
  for (std::size_t i = fcs_.size(); i-- > 0;) {
    const Mat& in = cache.acts[3 + 2 * i];
    const Mat& pre = cache.acts[4 + 2 * i];
    g = fcs_[i].backward(in, nn::relu_backward(pre, g));
  }
  Mat da2 = pool2_.backward(g, cache.pools[1]);
  Mat dq1 = conv2_.backward(cache.acts[1], nn::relu_backward(cache.acts[2], da2));
  Mat da1 = pool1_.backward(dq1, cache.pools[0]);
  conv1_.backward(x.dense, nn::relu_backward(cache.acts[0], da1), false);
}

void ImageEncoder::collect(std::vector<nn::Param*>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  for (auto& fc : fcs_) fc.collect(out);
}

void ImageEncoder::collect(std::vector<const nn::Param*>& out) const {
  conv1_.collect(out);
  conv2_.collect(out);
  for (const auto& fc : fcs_) fc.collect(out);
}

TabularEncoder::TabularEncoder(const std::string& name, const ModalityShape& shape, const TabularEncoderConfig& config)
    : numeric_(shape.numeric_fields) {
  if (shape.kind != ModalityKind::tabular) throw ConfigError(name + ": tabular encoder needs a tabular modality");
  int width = numeric_;
  for (std::size_t f = 0; f < shape.vocab_sizes.size(); ++f) {
    embeddings_.emplace_back(name + ".embed" + std::to_string(f), shape.vocab_sizes[f], config.embedding_dim);
    width += config.embedding_dim;
  }
  if (width == 0) throw ConfigError(name + ": tabular modality has no fields");
  proj_ = nn::Linear(name + ".proj", width, config.hidden);
}

void TabularEncoder::init(Rng& rng) {
  for (auto& e : embeddings_) nn::init_normal(e.table, 1.0, rng);
  nn::init_fan_in_uniform(proj_.weight, proj_.in_features(), rng);
  nn::init_fan_in_uniform(proj_.bias, proj_.in_features(), rng);
}

Mat TabularEncoder::forward(const ModalityBatch& x, EncoderCache* cache) const {
  const Eigen::Index n = x.dense.rows();
  Mat u(n, proj_.in_features());
  Eigen::Index off = 0;
  for (std::size_t f = 0; f < embeddings_.size(); ++f) {
    const auto& e = embeddings_[f];
    u.middleCols(off, e.dim()) = e.forward(x.categorical.col(static_cast<Eigen::Index>(f)));
    off += e.dim();
  }
  if (numeric_ > 0) u.middleCols(off, numeric_) = x.dense;
  Mat z = proj_.forward(u);
  Mat h = nn::relu(z);
  if (cache) cache->acts = {std::move(u), std::move(z)};
  return h;
}

void TabularEncoder::backward(const ModalityBatch& x, const EncoderCache& cache, const Mat& dh) {
  Mat du = proj_.backward(cache.acts[0], nn::relu_backward(cache.acts[1], dh));
  Eigen::Index off = 0;
  for (std::size_t f = 0; f < embeddings_.size(); ++f) {
    auto& e = embeddings_[f];
    e.backward(x.categorical.col(static_cast<Eigen::Index>(f)), du.middleCols(off, e.dim()));
    off += e.dim();
  }
}

void TabularEncoder::collect(std::vector<nn::Param*>& out) {
  for (auto& e : embeddings_) e.collect(out);
  proj_.collect(out);
}

void TabularEncoder::collect(std::vector<const nn::Param*>& out) const {
  for (const auto& e : embeddings_) e.collect(out);
  proj_.collect(out);
}

namespace {

ModalityEncoder make_encoder(const std::string& name, const ModelConfig& cfg, const ModalityShape& shape) {
  if (shape.kind == ModalityKind::image) return ImageEncoder(name, shape, cfg.image);
  return TabularEncoder(name, shape, cfg.tabular);
}

int encoder_width(const ModalityEncoder& e) {
  return std::visit([](const auto& enc) { return enc.out_width(); }, e);
}

Mat encoder_forward(const ModalityEncoder& e, const ModalityBatch& x, EncoderCache* cache) {
  return std::visit([&](const auto& enc) { return enc.forward(x, cache); }, e);
}

void encoder_backward(ModalityEncoder& e, const ModalityBatch& x, const EncoderCache& cache, const Mat& dh) {
  std::visit([&](auto& enc) { enc.backward(x, cache, dh); }, e);
}

// Scale each row of `block` by the matching entry of `w`.
Mat scale_rows(const Mat& block, const Eigen::VectorXd& w) { return w.asDiagonal() * block; }

}  // namespace

// --- bundle -----------------------------------------------------------------

ExpertBundle::ExpertBundle(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.num_classes < 2) throw ConfigError("model needs at least two classes");
  if (config_.modalities.empty()) throw ConfigError("model needs at least one modality");
  if (config_.head_width < 1) throw ConfigError("head_width must be positive");
  if (!(config_.init_std > 0.0)) throw ConfigError("init_std must be positive");

  const int k = config_.num_classes;
  for (std::size_t m = 0; m < config_.modalities.size(); ++m) {
    const std::string name = "m" + std::to_string(m);
    encoders_.push_back(make_encoder(name + ".encoder", config_, config_.modalities[m]));
    const int width = encoder_width(encoders_.back());
    heads_.push_back({nn::Linear(name + ".classify", width, k), nn::Linear(name + ".confidence", width, 1)});
  }
  if (config_.separate_expert_encoders) {
    for (int j = 0; j < kNumExperts; ++j) {
      expert_encoders_.emplace_back();
      for (std::size_t m = 0; m < config_.modalities.size(); ++m) {
        expert_encoders_.back().push_back(make_encoder(
            "expert" + std::to_string(j + 1) + ".m" + std::to_string(m) + ".encoder", config_, config_.modalities[m]));
      }
    }
  }
  const int fused = fused_width();
  for (int j = 0; j < kNumExperts; ++j) {
    const std::string name = "expert" + std::to_string(j + 1);
    experts_[j] = {nn::Linear(name + ".hidden", fused, config_.head_width),
                   nn::Linear(name + ".output", config_.head_width, k)};
  }

  Rng rng = make_rng(seed, "init");
  for (auto& e : encoders_) std::visit([&](auto& enc) { enc.init(rng); }, e);
  for (auto& set : expert_encoders_) {
    for (auto& e : set) std::visit([&](auto& enc) { enc.init(rng); }, e);
  }
  const double s = config_.init_std;
  for (auto& h : heads_) {
    nn::init_normal(h.classify.weight, s, rng);
    nn::init_normal(h.confidence.weight, s, rng);
    h.classify.bias.zero_grad();
    h.confidence.bias.zero_grad();
  }
  for (int j = 0; j < kNumExperts; ++j) {
    Rng head_rng = config_.tie_expert_init ? make_rng(seed, "expert-head") : make_rng(seed, "expert-head", j + 1);
    nn::init_normal(experts_[j].hidden.weight, s, head_rng);
    nn::init_normal(experts_[j].output.weight, s, head_rng);
  }
  zero_grad();
}

std::vector<int> ExpertBundle::feature_widths() const {
  std::vector<int> w;
  for (const auto& e : encoders_) w.push_back(encoder_width(e));
  return w;
}

int ExpertBundle::fused_width() const {
  int total = 0;
  for (int w : feature_widths()) total += w;
  return total;
}

ForwardResult ExpertBundle::forward(const Batch& batch, ForwardCache* cache) const {
  const std::size_t nm = encoders_.size();
  if (batch.modalities.size() != nm) {
    throw ShapeError("batch has " + std::to_string(batch.modalities.size()) + " modalities, model expects " +
                     std::to_string(nm));
  }
  ForwardResult out;
  if (cache) {
    cache->encoders.assign(nm, {});
    cache->expert_encoders.clear();
    cache->expert_features.clear();
    cache->fused.clear();
  }
  for (std::size_t m = 0; m < nm; ++m) {
    out.features.push_back(encoder_forward(encoders_[m], batch.modalities[m], cache ? &cache->encoders[m] : nullptr));
    out.modality_logits.push_back(heads_[m].classify.forward(out.features[m]));
    Mat raw = heads_[m].confidence.forward(out.features[m]);
    Eigen::VectorXd t(raw.rows());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) t[i] = nn::sigmoid(raw(i, 0));
    out.tcp_hat.push_back(std::move(t));
  }

  std::vector<Eigen::VectorXd> weights = out.tcp_hat;
  if (config_.fusion == FusionWeighting::none) {
    for (auto& w : weights) w.setOnes();
  }

  std::vector<Mat> fused_per_expert;
  if (expert_encoders_.empty()) {
    fused_per_expert.push_back(fuse(out.features, weights));
  } else {
    for (int j = 0; j < kNumExperts; ++j) {
      std::vector<Mat> feats;
      std::vector<EncoderCache> caches(nm);
      for (std::size_t m = 0; m < nm; ++m) {
        feats.push_back(encoder_forward(expert_encoders_[j][m], batch.modalities[m], cache ? &caches[m] : nullptr));
      }
      fused_per_expert.push_back(fuse(feats, weights));
      if (cache) {
        cache->expert_encoders.push_back(std::move(caches));
        cache->expert_features.push_back(std::move(feats));
      }
    }
  }

  for (int j = 0; j < kNumExperts; ++j) {
    const Mat& fused = fused_per_expert[expert_encoders_.empty() ? 0 : j];
    Mat pre = experts_[j].hidden.forward(fused);
    out.expert_logits[j] = experts_[j].output.forward(nn::relu(pre));
    if (cache) cache->hidden_pre[j] = std::move(pre);
  }
  if (cache) cache->fused = std::move(fused_per_expert);
  return out;
}

void ExpertBundle::backward(const Batch& batch, const ForwardCache& cache, const ForwardResult& out,
                            const OutputGrads& grads) {
  const std::size_t nm = encoders_.size();
  const auto widths = feature_widths();
  const bool weighted = config_.fusion == FusionWeighting::tcp;
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());

  std::vector<Mat> dfeat(nm);
  std::vector<Eigen::VectorXd> dtcp(nm);
  for (std::size_t m = 0; m < nm; ++m) {
    dfeat[m] = Mat::Zero(n, widths[m]);
    dtcp[m] = grads.tcp_hat.size() == nm && grads.tcp_hat[m].size() == n ? grads.tcp_hat[m] : Eigen::VectorXd::Zero(n);
  }

  for (int j = 0; j < kNumExperts; ++j) {
    const Mat& dv = grads.expert_logits[j];
    if (dv.size() == 0) continue;
    const Mat& fused = cache.fused[expert_encoders_.empty() ? 0 : j];
    Mat act = nn::relu(cache.hidden_pre[j]);
    Mat dact = experts_[j].output.backward(act, dv);
    Mat dfused = experts_[j].hidden.backward(fused, nn::relu_backward(cache.hidden_pre[j], dact));

    Eigen::Index off = 0;
    for (std::size_t m = 0; m < nm; ++m) {
      const auto block = dfused.middleCols(off, widths[m]);
      const Mat& h = expert_encoders_.empty() ? out.features[m] : cache.expert_features[j][m];
      if (weighted) {
        dtcp[m] += (h.array() * block.array()).rowwise().sum().matrix();
      }
      Mat dh = weighted ? scale_rows(block, out.tcp_hat[m]) : Mat(block);
      if (expert_encoders_.empty()) {
        dfeat[m] += dh;
      } else {
        encoder_backward(expert_encoders_[j][m], batch.modalities[m], cache.expert_encoders[j][m], dh);
      }
      off += widths[m];
    }
  }

  for (std::size_t m = 0; m < nm; ++m) {
    const Mat& h = out.features[m];
    if (grads.modality_logits.size() == nm && grads.modality_logits[m].size() > 0) {
      dfeat[m] += heads_[m].classify.backward(h, grads.modality_logits[m]);
    }
    const Eigen::VectorXd& t = out.tcp_hat[m];
    Mat draw = (dtcp[m].array() * t.array() * (1.0 - t.array())).matrix();
    dfeat[m] += heads_[m].confidence.backward(h, draw);
    encoder_backward(encoders_[m], batch.modalities[m], cache.encoders[m], dfeat[m]);
  }
}

void ExpertBundle::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::vector<nn::Param*> ExpertBundle::parameters() {
  std::vector<nn::Param*> out;
  for (std::size_t m = 0; m < encoders_.size(); ++m) {
    std::visit([&](auto& enc) { enc.collect(out); }, encoders_[m]);
    heads_[m].classify.collect(out);
    heads_[m].confidence.collect(out);
  }
  for (auto& set : expert_encoders_) {
    for (auto& e : set) std::visit([&](auto& enc) { enc.collect(out); }, e);
  }
  for (auto& e : experts_) {
    e.hidden.collect(out);
    e.output.collect(out);
  }
  return out;
}

std::vector<const nn::Param*> ExpertBundle::parameters() const {
  std::vector<const nn::Param*> out;
  for (std::size_t m = 0; m < encoders_.size(); ++m) {
    std::visit([&](const auto& enc) { enc.collect(out); }, encoders_[m]);
    heads_[m].classify.collect(out);
    heads_[m].confidence.collect(out);
  }
  for (const auto& set : expert_encoders_) {
    for (const auto& e : set) std::visit([&](const auto& enc) { enc.collect(out); }, e);
  }
  for (const auto& e : experts_) {
    e.hidden.collect(out);
    e.output.collect(out);
  }
  return out;
}

std::string ExpertBundle::parameter_hash() const {
  Digest d;
  for (const auto* p : parameters()) {
    d.update_values(std::span<const double>(p->value.data(), static_cast<std::size_t>(p->value.size())));
  }
  return d.hex();
}

std::vector<const nn::Param*> ExpertBundle::expert_parameters(int expert) const {
  std::vector<const nn::Param*> out;
  experts_.at(expert).hidden.collect(out);
  experts_.at(expert).output.collect(out);
  return out;
}

std::vector<const nn::Param*> ExpertBundle::confidence_parameters(int modality) const {
  std::vector<const nn::Param*> out;
  heads_.at(modality).confidence.collect(out);
  return out;
}

// --- single-sample API --------------------------------------------------------

Vector fuse(const std::vector<Vector>& features, const std::vector<double>& tcp_hats) {
  if (features.size() != tcp_hats.size()) throw ShapeError("fuse: features and TCP lists differ in length");
  Eigen::Index width = 0;
  for (const auto& f : features) width += f.size();
  Vector out(width);
  Eigen::Index off = 0;
  for (std::size_t m = 0; m < features.size(); ++m) {
    out.segment(off, features[m].size()) = tcp_hats[m] * features[m];
    off += features[m].size();
  }
  return out;
}

Mat fuse(const std::vector<Mat>& features, const std::vector<Eigen::VectorXd>& tcp_hats) {
  if (features.size() != tcp_hats.size()) throw ShapeError("fuse: features and TCP lists differ in length");
  if (features.empty()) return {};
  const Eigen::Index n = features.front().rows();
  Eigen::Index width = 0;
  for (std::size_t m = 0; m < features.size(); ++m) {
    if (features[m].rows() != n || tcp_hats[m].size() != n) throw ShapeError("fuse: batch sizes differ");
    width += features[m].cols();
  }
  Mat out(n, width);
  Eigen::Index off = 0;
  for (std::size_t m = 0; m < features.size(); ++m) {
    out.middleCols(off, features[m].cols()) = scale_rows(features[m], tcp_hats[m]);
    off += features[m].cols();
  }
  return out;
}

ConfidenceOutputs confidence_forward(const PairedSample& sample, const ExpertBundle& bundle) {
  const PairedSample* ptr = &sample;
  const auto batch = make_batch(std::span<const PairedSample* const>(&ptr, 1), bundle.config().modalities);
  const auto out = bundle.forward(batch);
  ConfidenceOutputs c;
  for (std::size_t m = 0; m < out.modality_logits.size(); ++m) {
    c.probs.push_back(softmax(out.modality_logits[m].row(0).transpose()));
    c.tcp_hat.push_back(out.tcp_hat[m][0]);
  }
  return c;
}

ExpertOutputs expert_forward(const PairedSample& sample, const ExpertBundle& bundle) {
  const PairedSample* ptr = &sample;
  const auto batch = make_batch(std::span<const PairedSample* const>(&ptr, 1), bundle.config().modalities);
  const auto out = bundle.forward(batch);
  ExpertOutputs e;
  for (int j = 0; j < kNumExperts; ++j) e.logits[j] = out.expert_logits[j].row(0).transpose();
  for (std::size_t m = 0; m < out.modality_logits.size(); ++m) {
    e.confidence.probs.push_back(softmax(out.modality_logits[m].row(0).transpose()));
    e.confidence.tcp_hat.push_back(out.tcp_hat[m][0]);
  }
  return e;
}

}  // namespace ltmx
