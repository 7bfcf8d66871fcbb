#include "ltmx/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "ltmx/error.hpp"

namespace ltmx::nn {

void init_normal(Param& p, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = n(rng);
  p.zero_grad();
}

void init_fan_in_uniform(Param& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
  p.zero_grad();
}

Linear::Linear(const std::string& name, int in, int out) {
  weight = {name + ".weight", Mat::Zero(in, out), Mat::Zero(in, out)};
  bias = {name + ".bias", Mat::Zero(1, out), Mat::Zero(1, out)};
}

Mat Linear::forward(const Mat& x) const {
  if (x.cols() != weight.value.rows()) {
    throw ShapeError(weight.name + ": input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(weight.value.rows()));
  }
  Mat y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

void Linear::backward_params(const Mat& x, const Mat& dy) {
  weight.grad.noalias() += x.transpose() * dy;
  bias.grad.row(0) += dy.colwise().sum();
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  backward_params(x, dy);
  return dy * weight.value.transpose();
}

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int height, int width)
    : in_c_(in_channels), out_c_(out_channels), k_(kernel), h_(height), w_(width) {
  if (kernel < 1 || kernel > height || kernel > width) {
    throw ConfigError(name + ": kernel " + std::to_string(kernel) + " does not fit a " + std::to_string(height) +
                      "x" + std::to_string(width) + " input");
  }
  weight = {name + ".weight", Mat::Zero(out_channels, fan_in()), Mat::Zero(out_channels, fan_in())};
  bias = {name + ".bias", Mat::Zero(1, out_channels), Mat::Zero(1, out_channels)};
}

void Conv2d::im2col(const double* in, Mat& col) const {
  const int ho = out_height();
  const int wo = out_width();
  col.resize(fan_in(), static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < in_c_; ++c) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        double* dst = col.row((c * k_ + ky) * k_ + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const double* src = in + (static_cast<std::size_t>(c) * h_ + oy + ky) * w_ + kx;
          std::copy(src, src + wo, dst + static_cast<std::size_t>(oy) * wo);
        }
      }
    }
  }
}

void Conv2d::col2im(const Mat& col, double* out) const {
  const int ho = out_height();
  const int wo = out_width();
  for (int c = 0; c < in_c_; ++c) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const double* src = col.row((c * k_ + ky) * k_ + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          double* dst = out + (static_cast<std::size_t>(c) * h_ + oy + ky) * w_ + kx;
          const double* s = src + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) dst[ox] += s[ox];
        }
      }
    }
  }
}

Mat Conv2d::forward(const Mat& x) const {
  if (x.cols() != static_cast<Eigen::Index>(in_c_) * h_ * w_) throw ShapeError(weight.name + ": input width mismatch");
  const Eigen::Index out_size = static_cast<Eigen::Index>(out_height()) * out_width();
  Mat y(x.rows(), out_c_ * out_size);
  Mat col;
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    im2col(x.row(b).data(), col);
    Eigen::Map<Mat> out(y.row(b).data(), out_c_, out_size);
    out.noalias() = weight.value * col;
    out.colwise() += bias.value.row(0).transpose();
  }
  return y;
}

Mat Conv2d::backward(const Mat& x, const Mat& dy, bool input_grad) {
  const Eigen::Index out_size = static_cast<Eigen::Index>(out_height()) * out_width();
  Mat dx;
  if (input_grad) dx = Mat::Zero(x.rows(), x.cols());
  Mat col;
  Mat dcol;
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    im2col(x.row(b).data(), col);
    Eigen::Map<const Mat> g(dy.row(b).data(), out_c_, out_size);
    weight.grad.noalias() += g * col.transpose();
    bias.grad.row(0) += g.rowwise().sum().transpose();
    if (!input_grad) continue;
    dcol.noalias() = weight.value.transpose() * g;
    col2im(dcol, dx.row(b).data());
  }
  return dx;
}

Mat MaxPool2::forward(const Mat& x, IndexMat* argmax) const {
  const int ho = out_height();
  const int wo = out_width();
  const Eigen::Index out_cols = static_cast<Eigen::Index>(channels) * ho * wo;
  Mat y(x.rows(), out_cols);
  if (argmax) argmax->resize(x.rows(), out_cols);
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double* in = x.row(b).data();
    for (int c = 0; c < channels; ++c) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          int best = -1;
          double value = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = (c * height + 2 * oy + dy) * width + 2 * ox + dx;
              if (in[idx] > value) {
                value = in[idx];
                best = idx;
              }
            }
          }
          const Eigen::Index o = (static_cast<Eigen::Index>(c) * ho + oy) * wo + ox;
          y(b, o) = value;
          if (argmax) (*argmax)(b, o) = best;
        }
      }
    }
  }
  return y;
}

Mat MaxPool2::backward(const Mat& dy, const IndexMat& argmax) const {
  Mat dx = Mat::Zero(dy.rows(), static_cast<Eigen::Index>(channels) * height * width);
  for (Eigen::Index b = 0; b < dy.rows(); ++b) {
    for (Eigen::Index o = 0; o < dy.cols(); ++o) dx(b, argmax(b, o)) += dy(b, o);
  }
  return dx;
}

Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

Mat relu_backward(const Mat& pre, const Mat& dy) {
  return (pre.array() > 0.0).select(dy, 0.0);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Embedding::Embedding(const std::string& name, int vocab, int dim) {
  table = {name + ".table", Mat::Zero(vocab, dim), Mat::Zero(vocab, dim)};
}

Mat Embedding::forward(const Eigen::Ref<const Eigen::VectorXi>& indices) const {
  Mat y(indices.size(), dim());
  for (Eigen::Index i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= vocab()) throw ShapeError(table.name + ": index out of range");
    y.row(i) = table.value.row(indices[i]);
  }
  return y;
}

void Embedding::backward(const Eigen::Ref<const Eigen::VectorXi>& indices, const Mat& dy) {
  for (Eigen::Index i = 0; i < indices.size(); ++i) table.grad.row(indices[i]) += dy.row(i);
}

}  // namespace ltmx::nn
