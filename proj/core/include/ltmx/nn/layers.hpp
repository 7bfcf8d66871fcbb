#pragma once

#include <string>
#include <vector>

#include "ltmx/nn/tensor.hpp"
#include "ltmx/rng.hpp"

namespace ltmx::nn {

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

void init_normal(Param& p, double stddev, Rng& rng);
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fan_in_uniform(Param& p, int fan_in, Rng& rng);

// y = x W + b with W stored in x out.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);

  Mat forward(const Mat& x) const;
  // Accumulates parameter gradients and returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy);
  void backward_params(const Mat& x, const Mat& dy);

  int in_features() const { return static_cast<int>(weight.value.rows()); }
  int out_features() const { return static_cast<int>(weight.value.cols()); }
  void collect(std::vector<Param*>& out) { out.push_back(&weight); out.push_back(&bias); }
  void collect(std::vector<const Param*>& out) const { out.push_back(&weight); out.push_back(&bias); }

  Param weight;
  Param bias;
};

// Valid (unpadded) stride-1 convolution over CHW rows, via im2col + GEMM.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int height, int width);

  Mat forward(const Mat& x) const;
  // Returns dL/dx, or an empty matrix when input_grad is false.
  Mat backward(const Mat& x, const Mat& dy, bool input_grad = true);

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int kernel() const { return k_; }
  int out_height() const { return h_ - k_ + 1; }
  int out_width() const { return w_ - k_ + 1; }
  int fan_in() const { return in_c_ * k_ * k_; }
  void collect(std::vector<Param*>& out) { out.push_back(&weight); out.push_back(&bias); }
  void collect(std::vector<const Param*>& out) const { out.push_back(&weight); out.push_back(&bias); }

  Param weight;  // out_channels x (in_channels * k * k)
  Param bias;    // 1 x out_channels

 private:
  void im2col(const double* in, Mat& col) const;
  void col2im(const Mat& col, double* out) const;

  int in_c_ = 0, out_c_ = 0, k_ = 0, h_ = 0, w_ = 0;
};

// 2x2 max pooling with stride 2 over CHW rows (odd trailing rows/cols drop).
struct MaxPool2 {
  int channels = 0, height = 0, width = 0;

  int out_height() const { return height / 2; }
  int out_width() const { return width / 2; }
  Mat forward(const Mat& x, IndexMat* argmax = nullptr) const;
  Mat backward(const Mat& dy, const IndexMat& argmax) const;
};

Mat relu(const Mat& x);
// dy masked by (pre-activation > 0).
Mat relu_backward(const Mat& pre, const Mat& dy);
double sigmoid(double x);

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, int vocab, int dim);

  Mat forward(const Eigen::Ref<const Eigen::VectorXi>& indices) const;
  void backward(const Eigen::Ref<const Eigen::VectorXi>& indices, const Mat& dy);

  int vocab() const { return static_cast<int>(table.value.rows()); }
  int dim() const { return static_cast<int>(table.value.cols()); }
  void collect(std::vector<Param*>& out) { out.push_back(&table); }
  void collect(std::vector<const Param*>& out) const { out.push_back(&table); }

  Param table;
};

}  // namespace ltmx::nn
