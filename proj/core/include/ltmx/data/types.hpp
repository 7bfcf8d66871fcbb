#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace ltmx {

enum class ModalityKind { image, tabular };

// Pixel intensities in [0,1], stored channel-major (CHW).
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  double& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

// Encoded metadata: vocabulary indices for categorical fields (index ==
// vocabulary size marks a missing value) and min-max normalized numerics.
struct TabularFeatures {
  std::vector<int> categorical;
  std::vector<double> numeric;
  bool operator==(const TabularFeatures&) const = default;
};

using ModalityInput = std::variant<Image, TabularFeatures>;

inline ModalityKind kind_of(const ModalityInput& m) {
  return std::holds_alternative<Image>(m) ? ModalityKind::image : ModalityKind::tabular;
}

// Static description of one modality; drives encoder construction and input
// validation.
struct ModalityShape {
  ModalityKind kind = ModalityKind::image;
  int channels = 0;
  int height = 0;
  int width = 0;
  // Embedding table sizes per categorical field, including the missing slot.
  std::vector<int> vocab_sizes;
  int numeric_fields = 0;

  static ModalityShape image(int c, int h, int w) {
    ModalityShape s;
    s.kind = ModalityKind::image;
    s.channels = c;
    s.height = h;
    s.width = w;
    return s;
  }
  static ModalityShape tabular(std::vector<int> vocab, int numeric) {
    ModalityShape s;
    s.kind = ModalityKind::tabular;
    s.vocab_sizes = std::move(vocab);
    s.numeric_fields = numeric;
    return s;
  }
  int input_width() const {
    return kind == ModalityKind::image ? channels * height * width
                                       : static_cast<int>(vocab_sizes.size()) + numeric_fields;
  }
  bool operator==(const ModalityShape&) const = default;
};

// Check that an input matches its declared shape; throws ShapeError.
void check_matches(const ModalityInput& input, const ModalityShape& shape, std::size_t modality);

// One multi-modal instance. Labels are zero-based class indices.
struct PairedSample {
  std::vector<ModalityInput> modalities;
  int label = 0;
  std::int64_t id = -1;
};

struct PairedDataset {
  int num_classes = 0;
  std::vector<ModalityShape> shapes;
  std::vector<PairedSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t num_modalities() const noexcept { return shapes.size(); }
  bool all_images() const;
  std::vector<int> labels() const;
  // Keep only the listed modalities, in the given order.
  PairedDataset select_modalities(const std::vector<std::size_t>& keep) const;
};

// Per-class counts with the derived label-frequency vector and its reversal.
struct ClassDistribution {
  std::vector<std::int64_t> counts;
  std::vector<double> priors;
  std::vector<double> reversed_priors;

  std::int64_t total() const;
  static ClassDistribution from_counts(std::vector<std::int64_t> counts);
};

ClassDistribution class_priors(const PairedDataset& dataset);

enum class SplitKind { forward, uniform, backward };

std::string to_string(SplitKind kind);
SplitKind parse_split_kind(const std::string& s);

// Target class distribution of a split. ratio is N_head / N_tail.
struct DistributionSpec {
  SplitKind kind = SplitKind::uniform;
  double ratio = 1.0;

  // Throws ConfigError when ratio < 1 or ratio == 1 with a skewed kind.
  void validate() const;
  // "forward-50", "uniform", "backward-10".
  std::string id() const;
  static DistributionSpec parse(const std::string& id);
  bool operator==(const DistributionSpec&) const = default;
};

// Shortest decimal text that round-trips the value.
std::string format_real(double value);

}  // namespace ltmx
