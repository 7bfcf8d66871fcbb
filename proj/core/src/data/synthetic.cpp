#include "ltmx/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ltmx/error.hpp"
#include "ltmx/rng.hpp"

namespace ltmx {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Segments a..g of a seven-segment display in a unit box (x right, y down).
struct Segment {
  double x0, y0, x1, y1;
};
constexpr std::array<Segment, 7> kSegments{{
    {0, 0, 1, 0},      // a
    {1, 0, 1, 0.5},    // b
    {1, 0.5, 1, 1},    // c
    {0, 1, 1, 1},      // d
    {0, 0.5, 0, 1},    // e
    {0, 0, 0, 0.5},    // f
    {0, 0.5, 1, 0.5},  // g
}};
// Bit s set when segment s is lit; digits 0..9.
constexpr std::array<unsigned, 10> kDigitMasks{0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
                                               0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111};

struct GlyphPlacement {
  double cx, cy, width, height, shear, thickness;
  std::array<Segment, 7> segments;
};

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx);
  const double dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

GlyphPlacement random_placement(Rng& rng, int size, double scale) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GlyphPlacement g{};
  g.width = (0.28 + 0.14 * u(rng)) * size * scale;
  g.height = (0.48 + 0.2 * u(rng)) * size * scale;
  g.cx = size / 2.0 + (u(rng) - 0.5) * 4.0;
  g.cy = size / 2.0 + (u(rng) - 0.5) * 4.0;
  g.shear = (u(rng) - 0.5) * 0.5;
  g.thickness = (1.4 + 1.4 * u(rng)) * size / 28.0;
  for (std::size_t s = 0; s < kSegments.size(); ++s) {
    auto seg = kSegments[s];
    seg.x0 += (u(rng) - 0.5) * 0.14;
    seg.y0 += (u(rng) - 0.5) * 0.1;
    seg.x1 += (u(rng) - 0.5) * 0.14;
    seg.y1 += (u(rng) - 0.5) * 0.1;
    g.segments[s] = seg;
  }
  return g;
}

// Coverage in [0,1] of the glyph at pixel center (x, y).
double glyph_coverage(const GlyphPlacement& g, unsigned mask, double x, double y) {
  double best = 1e9;
  for (std::size_t s = 0; s < g.segments.size(); ++s) {
    if (!(mask & (1u << s))) continue;
    const auto& seg = g.segments[s];
    auto map_x = [&](double u, double v) { return g.cx + (u - 0.5) * g.width + g.shear * (0.5 - v) * g.height; };
    auto map_y = [&](double v) { return g.cy + (v - 0.5) * g.height; };
    best = std::min(best, segment_distance(x, y, map_x(seg.x0, seg.y0), map_y(seg.y0), map_x(seg.x1, seg.y1),
                                           map_y(seg.y1)));
  }
  return std::clamp(g.thickness / 2.0 + 0.5 - best, 0.0, 1.0);
}

void corrupt(Image& img, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Large occluding patch of noise, then a strong blend toward noise.
  const int ph = static_cast<int>(img.height * (0.55 + 0.3 * u(rng)));
  const int pw = static_cast<int>(img.width * (0.55 + 0.3 * u(rng)));
  const int y0 = static_cast<int>(u(rng) * (img.height - ph + 1));
  const int x0 = static_cast<int>(u(rng) * (img.width - pw + 1));
  const double level = u(rng);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = y0; y < y0 + ph; ++y) {
      for (int x = x0; x < x0 + pw; ++x) img.at(c, y, x) = std::clamp(level + (u(rng) - 0.5) * 0.6, 0.0, 1.0);
    }
  }
  const double alpha = 0.6 + 0.3 * u(rng);
  for (double& p : img.pixels) p = (1.0 - alpha) * p + alpha * u(rng);
}

void add_noise(Image& img, double sigma, Rng& rng) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> n(0.0, sigma);
  for (double& p : img.pixels) p = std::clamp(p + n(rng), 0.0, 1.0);
}

}  // namespace

SyntheticDigitSource::SyntheticDigitSource(std::string name, DigitSourceConfig config, std::uint64_t seed)
    : name_(std::move(name)), config_(config), seed_(seed) {
  if (config_.per_class <= 0) throw ConfigError(name_ + ": per_class must be positive");
  if (config_.corruption < 0.0 || config_.corruption > 1.0) throw ConfigError(name_ + ": corruption must be in [0,1]");
}

ModalityShape SyntheticDigitSource::shape() const {
  return config_.style == DigitStyle::gray28 ? ModalityShape::image(1, 28, 28) : ModalityShape::image(3, 32, 32);
}

bool SyntheticDigitSource::corrupted(std::size_t index) const {
  Rng rng = make_rng(seed_, name_ + "/corrupt", index);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config_.corruption;
}

ModalityInput SyntheticDigitSource::load(std::size_t index) const {
  if (index >= size()) throw DataError(name_ + ": index out of range");
  Rng rng = make_rng(seed_, name_, index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const unsigned mask = kDigitMasks[label(index)];

  if (config_.style == DigitStyle::gray28) {
    Image img(1, 28, 28);
    const auto g = random_placement(rng, 28, 1.0);
    const double bg = 0.1 * u(rng);
    const double fg = 0.7 + 0.3 * u(rng);
    for (int y = 0; y < 28; ++y) {
      for (int x = 0; x < 28; ++x) {
        const double cov = glyph_coverage(g, mask, x + 0.5, y + 0.5);
        img.at(0, y, x) = bg + (fg - bg) * cov;
      }
    }
    add_noise(img, config_.noise, rng);
    if (corrupted(index)) corrupt(img, rng);
    return img;
  }

  Image img(3, 32, 32);
  std::array<double, 3> bg{};
  std::array<double, 3> fg{};
  for (auto& c : bg) c = 0.1 + 0.8 * u(rng);
  double dist = 0.0;
  do {
    for (auto& c : fg) c = u(rng);
    dist = std::abs(fg[0] - bg[0]) + std::abs(fg[1] - bg[1]) + std::abs(fg[2] - bg[2]);
  } while (dist < 0.9);

  const auto g = random_placement(rng, 32, 0.9);
  // Partial neighbor digits at either side, as in cropped house numbers.
  auto left = random_placement(rng, 32, 0.9);
  auto right = random_placement(rng, 32, 0.9);
  left.cx = g.cx - g.width - 4.0 - 2.0 * u(rng);
  right.cx = g.cx + g.width + 4.0 + 2.0 * u(rng);
  left.cy = right.cy = g.cy;
  const unsigned left_mask = kDigitMasks[static_cast<int>(u(rng) * 10) % 10];
  const unsigned right_mask = kDigitMasks[static_cast<int>(u(rng) * 10) % 10];
  const bool show_left = u(rng) < 0.6;
  const bool show_right = u(rng) < 0.6;

  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      double cov = glyph_coverage(g, mask, x + 0.5, y + 0.5);
      if (show_left) cov = std::max(cov, glyph_coverage(left, left_mask, x + 0.5, y + 0.5));
      if (show_right) cov = std::max(cov, glyph_coverage(right, right_mask, x + 0.5, y + 0.5));
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = bg[c] + (fg[c] - bg[c]) * cov;
    }
  }
  // Soft illumination gradient.
  const double gx = (u(rng) - 0.5) * 0.3;
  const double gy = (u(rng) - 0.5) * 0.3;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        img.at(c, y, x) = std::clamp(img.at(c, y, x) + gx * (x / 31.0 - 0.5) + gy * (y / 31.0 - 0.5), 0.0, 1.0);
      }
    }
  }
  add_noise(img, config_.noise, rng);
  if (corrupted(index)) corrupt(img, rng);
  return img;
}

// --- lesion stand-ins ------------------------------------------------------

LesionImageSource::LesionImageSource(std::string name, LesionSourceConfig config, std::uint64_t seed)
    : name_(std::move(name)), config_(config), seed_(seed) {
  if (config_.benign <= 0 || config_.malignant <= 0) throw ConfigError(name_ + ": class pools must be nonempty");
  if (config_.image_size < 16) throw ConfigError(name_ + ": image_size must be at least 16");
}

ModalityShape LesionImageSource::shape() const {
  return ModalityShape::image(3, config_.image_size, config_.image_size);
}

std::size_t LesionImageSource::size() const {
  return static_cast<std::size_t>(config_.benign) + static_cast<std::size_t>(config_.malignant);
}

int LesionImageSource::label(std::size_t index) const {
  return index < static_cast<std::size_t>(config_.benign) ? 0 : 1;
}

ModalityInput LesionImageSource::load(std::size_t index) const {
  if (index >= size()) throw DataError(name_ + ": index out of range");
  Rng rng = make_rng(seed_, name_, index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const bool malignant = label(index) == 1;
  const int s = config_.image_size;
  const double scale = s / 32.0;

  // Latent irregularity overlaps between classes.
  const double irregular = std::clamp((malignant ? 0.55 : 0.2) + 0.18 * n(rng), 0.0, 1.0);
  const double radius = ((malignant ? 7.5 : 5.5) + 1.5 * n(rng)) * scale;
  const double cx = s / 2.0 + (u(rng) - 0.5) * 6.0 * scale;
  const double cy = s / 2.0 + (u(rng) - 0.5) * 6.0 * scale;
  const double elong = 1.0 + 0.3 * u(rng);
  const double angle = u(rng) * kPi;
  std::array<double, 3> amp{};
  std::array<double, 3> phase{};
  for (int h = 0; h < 3; ++h) {
    amp[h] = irregular * 0.35 * u(rng);
    phase[h] = u(rng) * 2.0 * kPi;
  }
  const std::array<double, 3> skin{0.85 + 0.06 * n(rng), 0.65 + 0.06 * n(rng), 0.55 + 0.06 * n(rng)};
  const std::array<double, 3> base{0.45 + 0.05 * n(rng), 0.28 + 0.05 * n(rng), 0.18 + 0.04 * n(rng)};
  const std::array<double, 3> patch{0.25 + 0.1 * u(rng), 0.22 + 0.1 * u(rng), 0.35 + 0.15 * u(rng)};
  const double px = cx + (u(rng) - 0.5) * radius;
  const double py = cy + (u(rng) - 0.5) * radius;
  const double patch_r = radius * (0.3 + 0.4 * irregular);

  Image img(3, s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double rx = dx * std::cos(angle) + dy * std::sin(angle);
      const double ry = (-dx * std::sin(angle) + dy * std::cos(angle)) * elong;
      const double theta = std::atan2(ry, rx);
      double boundary = radius;
      for (int h = 0; h < 3; ++h) boundary *= 1.0 + amp[h] * std::sin((h + 2) * theta + phase[h]);
      const double r = std::sqrt(rx * rx + ry * ry);
      const double inside = std::clamp(boundary - r + 0.5, 0.0, 1.0);
      const double pd = std::hypot(x + 0.5 - px, y + 0.5 - py);
      const double variegation = irregular * std::clamp(patch_r - pd + 0.5, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double lesion = (1.0 - variegation) * base[c] + variegation * patch[c];
        img.at(c, y, x) = std::clamp((1.0 - inside) * skin[c] + inside * lesion, 0.0, 1.0);
      }
    }
  }
  add_noise(img, 0.05, rng);
  return img;
}

std::unique_ptr<TabularSource> make_lesion_metadata_source(const std::string& name, LesionSourceConfig config,
                                                           std::uint64_t seed) {
  if (config.benign <= 0 || config.malignant <= 0) throw ConfigError(name + ": class pools must be nonempty");
  const auto schema = lesion_metadata_schema();
  const std::array<std::string, 6> sites{"head/neck",  "upper extremity", "lower extremity",
                                         "torso",      "palms/soles",     "oral/genital"};
  const std::array<double, 6> benign_site{0.08, 0.14, 0.26, 0.46, 0.03, 0.03};
  const std::array<double, 6> malignant_site{0.24, 0.24, 0.18, 0.30, 0.02, 0.02};

  const std::size_t n = static_cast<std::size_t>(config.benign) + static_cast<std::size_t>(config.malignant);
  std::vector<MetadataRecord> records;
  std::vector<int> labels;
  records.reserve(n);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i < static_cast<std::size_t>(config.benign) ? 0 : 1;
    Rng rng = make_rng(seed, name, i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    MetadataRecord rec;
    if (u(rng) > 0.02) rec.values["gender"] = std::string(u(rng) < (y ? 0.62 : 0.48) ? "male" : "female");
    if (u(rng) > 0.02) {
      const auto& probs = y ? malignant_site : benign_site;
      std::discrete_distribution<int> site(probs.begin(), probs.end());
      rec.values["anatom_site"] = sites[site(rng)];
    }
    if (u(rng) > 0.02) {
      const double age = std::clamp((y ? 63.0 : 45.0) + (y ? 12.0 : 14.0) * g(rng), 0.0, 90.0);
      rec.values["age"] = 5.0 * std::round(age / 5.0);
    }
    records.push_back(std::move(rec));
    labels.push_back(y);
  }
  return std::make_unique<TabularSource>(name, schema, 2, std::move(records), std::move(labels));
}

}  // namespace ltmx
