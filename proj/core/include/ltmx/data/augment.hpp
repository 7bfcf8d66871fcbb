#pragma once

#include <utility>

#include "ltmx/data/types.hpp"
#include "ltmx/rng.hpp"

namespace ltmx {

struct AugmentConfig {
  // Random translation by up to `pad` pixels with edge-replicated padding.
  int pad = 2;
  bool horizontal_flip = false;
  double flip_probability = 0.5;
  // Additive brightness offset drawn from [-brightness, brightness].
  double brightness = 0.1;
  // Contrast factor drawn from [1 - contrast, 1 + contrast], applied around
  // the image mean.
  double contrast = 0.1;

  static AugmentConfig identity() { return {0, false, 0.0, 0.0, 0.0}; }
  bool is_identity() const {
    return pad == 0 && !horizontal_flip && brightness == 0.0 && contrast == 0.0;
  }
  bool operator==(const AugmentConfig&) const = default;
};

Image augment_image(const Image& image, const AugmentConfig& config, Rng& rng);

// Two independently augmented views. Throws UnsupportedModalityError if any
// modality is tabular.
std::pair<PairedSample, PairedSample> stochastic_augment(const PairedSample& sample,
                                                         const AugmentConfig& config, Rng& rng);

}  // namespace ltmx
