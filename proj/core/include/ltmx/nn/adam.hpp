#pragma once

#include <cstdint>
#include <vector>

#include "ltmx/nn/layers.hpp"

namespace ltmx::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

// Adam with bias correction. Moment buffers are matched to parameters by
// position, so the parameter list must be stable across steps.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(const std::vector<Param*>& params);

  const AdamConfig& config() const { return config_; }
  void set_config(const AdamConfig& c) { config_ = c; }
  std::int64_t steps() const { return t_; }

  // Exposed for checkpointing.
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

}  // namespace ltmx::nn
