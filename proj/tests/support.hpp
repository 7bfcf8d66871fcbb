#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ltmx/data/source.hpp"
#include "ltmx/losses.hpp"
#include "ltmx/model.hpp"

namespace ltmx::test {

// Tiny in-memory source: every item is a 2x2 single-channel image whose
// first pixel encodes the item index.
class VectorSource final : public LabeledSource {
 public:
  VectorSource(std::string name, int k, std::vector<int> labels) : name_(std::move(name)), k_(k), labels_(std::move(labels)) {}
  const std::string& name() const override { return name_; }
  ModalityShape shape() const override { return ModalityShape::image(1, 2, 2); }
  int num_classes() const override { return k_; }
  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t i) const override { return labels_.at(i); }
  ModalityInput load(std::size_t i) const override {
    Image im(1, 2, 2, 0.0);
    im.pixels[0] = static_cast<double>(i) / static_cast<double>(labels_.size());
    return im;
  }

 private:
  std::string name_;
  int k_;
  std::vector<int> labels_;
};

inline std::vector<int> labels_with_counts(const std::vector<int>& counts) {
  std::vector<int> out;
  for (std::size_t k = 0; k < counts.size(); ++k) out.insert(out.end(), counts[k], static_cast<int>(k));
  return out;
}

inline Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

inline Vector random_priors(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v / v.sum();
}

// Extended precision cross-entropy: -log(exp(z_y) / sum exp(z_k)), summed
// directly without max subtraction.
inline long double ce_oracle(const Vector& z, int y) {
  long double s = 0.0L;
  for (int k = 0; k < z.size(); ++k) s += std::exp(static_cast<long double>(z[k]));
  return std::log(s) - static_cast<long double>(z[y]);
}

inline double rel_err(double a, double b) {
  const double d = std::abs(a - b);
  const double m = std::max(std::abs(a), std::abs(b));
  return m < 1e-12 ? d : d / m;
}

// Central finite difference of f at x along coordinate i.
template <typename F>
double central_diff(F&& f, Vector x, int i, double h = 1e-4) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

// Two modalities, image and tabular, with tiny encoders.
inline ModelConfig small_config(int k = 3) {
  ModelConfig c;
  c.num_classes = k;
  c.modalities = {ModalityShape::image(2, 12, 12), ModalityShape::tabular({3, 4}, 2)};
  c.image = {3, 4, 3, 1, 5};
  c.tabular = {2, 6};
  c.head_width = 7;
  c.init_std = 0.3;
  return c;
}

inline PairedDataset random_dataset(const ModelConfig& c, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PairedDataset ds;
  ds.num_classes = c.num_classes;
  ds.shapes = c.modalities;
  for (int i = 0; i < n; ++i) {
    PairedSample s;
    s.label = i % c.num_classes;
    s.id = i;
    for (const auto& shape : c.modalities) {
      if (shape.kind == ModalityKind::image) {
        Image im(shape.channels, shape.height, shape.width);
        for (auto& x : im.pixels) x = u(rng);
        s.modalities.push_back(im);
      } else {
        TabularFeatures f;
        for (int v : shape.vocab_sizes) f.categorical.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(v)));
        for (int j = 0; j < shape.numeric_fields; ++j) f.numeric.push_back(u(rng));
        s.modalities.push_back(f);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace ltmx::test
