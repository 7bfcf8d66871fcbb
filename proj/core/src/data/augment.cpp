#include "ltmx/data/augment.hpp"

#include <algorithm>

#include "ltmx/error.hpp"

namespace ltmx {

Image augment_image(const Image& image, const AugmentConfig& config, Rng& rng) {
  if (config.is_identity()) return image;
  Image out(image.channels, image.height, image.width);

  int dx = 0;
  int dy = 0;
  if (config.pad > 0) {
    std::uniform_int_distribution<int> shift(-config.pad, config.pad);
    dx = shift(rng);
    dy = shift(rng);
  }
  bool flip = false;
  if (config.horizontal_flip) {
    flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.flip_probability;
  }
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      const int sy = std::clamp(y + dy, 0, image.height - 1);
      for (int x = 0; x < image.width; ++x) {
        const int tx = flip ? image.width - 1 - x : x;
        const int sx = std::clamp(tx + dx, 0, image.width - 1);
        out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  }

  if (config.brightness > 0.0 || config.contrast > 0.0) {
    double factor = 1.0;
    double offset = 0.0;
    if (config.contrast > 0.0) {
      factor = std::uniform_real_distribution<double>(1.0 - config.contrast, 1.0 + config.contrast)(rng);
    }
    if (config.brightness > 0.0) {
      offset = std::uniform_real_distribution<double>(-config.brightness, config.brightness)(rng);
    }
    double mean = 0.0;
    for (double p : out.pixels) mean += p;
    mean /= static_cast<double>(out.pixels.size());
    for (double& p : out.pixels) p = std::clamp((p - mean) * factor + mean + offset, 0.0, 1.0);
  }
  return out;
}

std::pair<PairedSample, PairedSample> stochastic_augment(const PairedSample& sample,
                                                         const AugmentConfig& config, Rng& rng) {
  for (const auto& m : sample.modalities) {
    if (kind_of(m) != ModalityKind::image) {
      throw UnsupportedModalityError(
          "stochastic augmentation requires image modalities; tabular inputs must use the "
          "two-phase (case2) aggregation fit");
    }
  }
  PairedSample a{{}, sample.label, sample.id};
  PairedSample b{{}, sample.label, sample.id};
  for (const auto& m : sample.modalities) a.modalities.emplace_back(augment_image(std::get<Image>(m), config, rng));
  for (const auto& m : sample.modalities) b.modalities.emplace_back(augment_image(std::get<Image>(m), config, rng));
  return {std::move(a), std::move(b)};
}

}  // namespace ltmx
