#pragma once

#include <cstdint>
#include <string>

#include "ltmx/data/source.hpp"

namespace ltmx {

// Procedural stand-ins for the benchmark pools. Every item is a pure
// function of (seed, name, index), so pools of any size cost no memory.

enum class DigitStyle {
  gray28,   // light seven-segment glyph on dark background, 28x28x1
  color32,  // colored glyph on colored background with neighbor clutter, 32x32x3
};

struct DigitSourceConfig {
  DigitStyle style = DigitStyle::gray28;
  int per_class = 600;
  // Probability that an item is heavily corrupted (occlusion plus noise),
  // which makes the modality unreliable for that sample.
  double corruption = 0.25;
  double noise = 0.08;
  bool operator==(const DigitSourceConfig&) const = default;
};

class SyntheticDigitSource final : public LabeledSource {
 public:
  SyntheticDigitSource(std::string name, DigitSourceConfig config, std::uint64_t seed);

  const std::string& name() const override { return name_; }
  ModalityShape shape() const override;
  int num_classes() const override { return 10; }
  std::size_t size() const override { return static_cast<std::size_t>(config_.per_class) * 10; }
  int label(std::size_t index) const override { return static_cast<int>(index % 10); }
  ModalityInput load(std::size_t index) const override;
  bool corrupted(std::size_t index) const;

 private:
  std::string name_;
  DigitSourceConfig config_;
  std::uint64_t seed_;
};

// Binary lesion task: class 0 benign, class 1 malignant.
struct LesionSourceConfig {
  int benign = 1250;
  int malignant = 100;
  int image_size = 32;
  bool operator==(const LesionSourceConfig&) const = default;
};

// Dermoscopy-like blobs: benign lesions are round and evenly pigmented,
// malignant ones are larger, irregular and variegated; classes overlap.
class LesionImageSource final : public LabeledSource {
 public:
  LesionImageSource(std::string name, LesionSourceConfig config, std::uint64_t seed);

  const std::string& name() const override { return name_; }
  ModalityShape shape() const override;
  int num_classes() const override { return 2; }
  std::size_t size() const override;
  int label(std::size_t index) const override;
  ModalityInput load(std::size_t index) const override;

 private:
  std::string name_;
  LesionSourceConfig config_;
  std::uint64_t seed_;
};

// Patient metadata with class-conditional field distributions over
// lesion_metadata_schema().
std::unique_ptr<TabularSource> make_lesion_metadata_source(const std::string& name,
                                                           LesionSourceConfig config,
                                                           std::uint64_t seed);

}  // namespace ltmx
