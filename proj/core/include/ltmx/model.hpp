#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ltmx/data/types.hpp"
#include "ltmx/losses.hpp"
#include "ltmx/nn/layers.hpp"

namespace ltmx {

inline constexpr int kNumExperts = 3;

struct ImageEncoderConfig {
  int conv1_channels = 4;
  int conv2_channels = 8;
  int kernel = 5;
  // Fully connected layers after the conv stack (width fc_width each).
  int fc_layers = 0;
  int fc_width = 64;
  bool operator==(const ImageEncoderConfig&) const = default;
};

struct TabularEncoderConfig {
  int embedding_dim = 4;
  int hidden = 16;
  bool operator==(const TabularEncoderConfig&) const = default;
};

// How encoder features are scaled before concatenation.
enum class FusionWeighting {
  tcp,   // by the estimated true-class probability of each modality
  none,  // unit weights (plain concatenation)
};

struct ModelConfig {
  int num_classes = 10;
  std::vector<ModalityShape> modalities;
  ImageEncoderConfig image;
  TabularEncoderConfig tabular;
  int head_width = 128;
  // Std of the N(0, s^2) init used by every head; biases start at zero.
  double init_std = 1e-3;
  FusionWeighting fusion = FusionWeighting::tcp;
  // Give each expert its own encoder stack. TCP still comes from the
  // classifier module's encoders.
  bool separate_expert_encoders = false;
  // Initialize the three expert heads with identical parameters.
  bool tie_expert_init = false;
  bool operator==(const ModelConfig&) const = default;
};

// Packed inputs for one modality: pixels (rows x CHW) for images; categorical
// indices plus numeric columns for tabular data.
struct ModalityBatch {
  Mat dense;
  IndexMat categorical;
};

struct Batch {
  std::vector<ModalityBatch> modalities;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const PairedDataset& dataset, std::span<const std::size_t> indices);
Batch make_batch(std::span<const PairedSample* const> samples, const std::vector<ModalityShape>& shapes);

struct EncoderCache {
  std::vector<Mat> acts;
  std::vector<IndexMat> pools;
};

// conv+relu+pool, twice, then optional fully connected layers.
class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(const std::string& name, const ModalityShape& shape, const ImageEncoderConfig& config);

  int out_width() const { return out_width_; }
  Mat forward(const ModalityBatch& x, EncoderCache* cache) const;
  void backward(const ModalityBatch& x, const EncoderCache& cache, const Mat& dh);
  void init(Rng& rng);
  void collect(std::vector<nn::Param*>& out);
  void collect(std::vector<const nn::Param*>& out) const;

 private:
  nn::Conv2d conv1_, conv2_;
  nn::MaxPool2 pool1_, pool2_;
  std::vector<nn::Linear> fcs_;
  int out_width_ = 0;
};

// Per-field embeddings concatenated with numerics, then affine + relu.
class TabularEncoder {
 public:
  TabularEncoder() = default;
  TabularEncoder(const std::string& name, const ModalityShape& shape, const TabularEncoderConfig& config);

  int out_width() const { return proj_.out_features(); }
  Mat forward(const ModalityBatch& x, EncoderCache* cache) const;
  void backward(const ModalityBatch& x, const EncoderCache& cache, const Mat& dh);
  void init(Rng& rng);
  void collect(std::vector<nn::Param*>& out);
  void collect(std::vector<const nn::Param*>& out) const;

 private:
  std::vector<nn::Embedding> embeddings_;
  nn::Linear proj_;
  int numeric_ = 0;
};

using ModalityEncoder = std::variant<ImageEncoder, TabularEncoder>;

// Classification head f^m and confidence head g^m on a shared encoder.
struct ModalityHeads {
  nn::Linear classify;
  nn::Linear confidence;
};

// Two affine layers with a relu between.
struct ExpertHead {
  nn::Linear hidden;
  nn::Linear output;
};

struct ForwardResult {
  std::array<Mat, kNumExperts> expert_logits;
  std::vector<Mat> modality_logits;
  std::vector<Eigen::VectorXd> tcp_hat;
  std::vector<Mat> features;
};

// Upstream gradients w.r.t. the forward outputs.
struct OutputGrads {
  std::array<Mat, kNumExperts> expert_logits;
  std::vector<Mat> modality_logits;
  std::vector<Eigen::VectorXd> tcp_hat;
};

struct ForwardCache {
  std::vector<EncoderCache> encoders;
  std::vector<std::vector<EncoderCache>> expert_encoders;
  std::vector<std::vector<Mat>> expert_features;
  std::vector<Mat> fused;
  std::array<Mat, kNumExperts> hidden_pre;
};

// Per-modality encoders, the shared classifier module and three expert heads
// reading the TCP-weighted fused representation.
class ExpertBundle {
 public:
  ExpertBundle() = default;
  ExpertBundle(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  int num_modalities() const { return static_cast<int>(config_.modalities.size()); }
  int fused_width() const;
  std::vector<int> feature_widths() const;

  ForwardResult forward(const Batch& batch, ForwardCache* cache = nullptr) const;
  // Accumulates into parameter gradients.
  void backward(const Batch& batch, const ForwardCache& cache, const ForwardResult& out, const OutputGrads& grads);

  void zero_grad();
  std::vector<nn::Param*> parameters();
  std::vector<const nn::Param*> parameters() const;
  // Digest of every parameter value, in parameter order.
  std::string parameter_hash() const;

  // Parameter groups, for tests and diagnostics.
  std::vector<const nn::Param*> expert_parameters(int expert) const;
  std::vector<const nn::Param*> confidence_parameters(int modality) const;

 private:
  ModelConfig config_;
  std::vector<ModalityEncoder> encoders_;
  std::vector<std::vector<ModalityEncoder>> expert_encoders_;
  std::vector<ModalityHeads> heads_;
  std::array<ExpertHead, kNumExperts> experts_;
};

struct ConfidenceOutputs {
  std::vector<Vector> probs;
  std::vector<double> tcp_hat;
};

struct ExpertOutputs {
  std::array<Vector, kNumExperts> logits;
  ConfidenceOutputs confidence;
};

// Per-modality class probabilities and estimated TCP for one sample.
ConfidenceOutputs confidence_forward(const PairedSample& sample, const ExpertBundle& bundle);

// [t_1 h_1, ..., t_M h_M]. Throws ShapeError on a length mismatch.
Vector fuse(const std::vector<Vector>& features, const std::vector<double>& tcp_hats);
Mat fuse(const std::vector<Mat>& features, const std::vector<Eigen::VectorXd>& tcp_hats);

ExpertOutputs expert_forward(const PairedSample& sample, const ExpertBundle& bundle);

}  // namespace ltmx
