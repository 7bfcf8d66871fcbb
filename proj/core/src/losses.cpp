#include "ltmx/losses.hpp"

#include <cmath>
#include <string>

#include "ltmx/error.hpp"

namespace ltmx {
namespace {

void check_label(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw ShapeError("label " + std::to_string(label) + " outside [0," + std::to_string(logits.size()) + ")");
  }
}

void check_positive(const Vector& p, const char* what) {
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (!(p[k] > 0.0)) {
      throw NumericError(std::string(what) + "[" + std::to_string(k) + "] is not positive; smooth priors first");
    }
  }
}

}  // namespace

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

Vector log_softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Vector smooth_priors(const Vector& priors, double floor) {
  Vector p = priors.cwiseMax(floor);
  return p / p.sum();
}

Vector reversed(const Vector& v) { return v.reverse(); }

double loss_ce(const Vector& logits, int label, Vector* grad) {
  check_label(logits, label);
  const Vector logp = log_softmax(logits);
  if (grad) {
    *grad = logp.array().exp();
    (*grad)[label] -= 1.0;
  }
  return -logp[label];
}

double loss_bal(const Vector& logits, int label, const Vector& priors, Vector* grad) {
  if (priors.size() != logits.size()) throw ShapeError("priors and logits differ in length");
  check_positive(priors, "prior");
  return loss_ce(logits + priors.array().log().matrix(), label, grad);
}

double loss_inv(const Vector& logits, int label, const Vector& priors, const Vector& reversed_priors, Vector* grad) {
  if (priors.size() != logits.size() || reversed_priors.size() != logits.size()) {
    throw ShapeError("priors and logits differ in length");
  }
  check_positive(priors, "prior");
  check_positive(reversed_priors, "reversed prior");
  const Vector shift = priors.array().log() - reversed_priors.array().log();
  return loss_ce(logits + shift, label, grad);
}

CompositeLoss loss_experts_composite(const Vector& v1, const Vector& v2, const Vector& v3, int label,
                                     const Vector& priors, ExpertLogitGrads* grads) {
  CompositeLoss out;
  out.ce = loss_ce(v1, label, grads ? &grads->ce : nullptr);
  out.bal = loss_bal(v2, label, priors, grads ? &grads->bal : nullptr);
  out.inv = loss_inv(v3, label, priors, reversed(priors), grads ? &grads->inv : nullptr);
  return out;
}

double tcp(const Vector& probs, int label) {
  check_label(probs, label);
  return probs[label];
}

double loss_confidence(double tcp_hat, double tcp_true, double* grad_hat) {
  const double d = tcp_hat - tcp_true;
  if (grad_hat) *grad_hat = 2.0 * d;
  return d * d;
}

double loss_confidence(std::span<const double> tcp_hat, std::span<const double> tcp_true) {
  if (tcp_hat.size() != tcp_true.size()) throw ShapeError("confidence loss: length mismatch");
  if (tcp_hat.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < tcp_hat.size(); ++i) sum += loss_confidence(tcp_hat[i], tcp_true[i]);
  return sum / static_cast<double>(tcp_hat.size());
}

double loss_unified(double fusion_loss, std::span<const double> modality_cls_losses,
                    std::span<const double> modality_conf_losses, LossWeights weights) {
  if (modality_cls_losses.size() != modality_conf_losses.size()) {
    throw ShapeError("unified loss: " + std::to_string(modality_cls_losses.size()) + " classification losses vs " +
                     std::to_string(modality_conf_losses.size()) + " confidence losses");
  }
  if (!(weights.lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  double aux = 0.0;
  for (std::size_t m = 0; m < modality_cls_losses.size(); ++m) aux += modality_cls_losses[m] + modality_conf_losses[m];
  return fusion_loss + weights.lambda * aux;
}

double loss_ce_batch(const Mat& logits, std::span<const int> labels, const Vector& shift, Mat* grad) {
  const auto n = logits.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("batch CE: logits and labels differ in length");
  if (shift.size() != 0 && shift.size() != logits.cols()) throw ShapeError("batch CE: shift has wrong length");
  if (grad) grad->resize(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    RowVec z = logits.row(i);
    if (shift.size() != 0) z += shift.transpose();
    const int y = labels[i];
    if (y < 0 || y >= z.size()) throw ShapeError("batch CE: label out of range");
    const double m = z.maxCoeff();
    RowVec e = (z.array() - m).exp();
    const double s = e.sum();
    total += -(z[y] - m - std::log(s));
    if (grad) {
      grad->row(i) = e / s;
      (*grad)(i, y) -= 1.0;
    }
  }
  if (n == 0) return 0.0;
  if (grad) *grad /= static_cast<double>(n);
  return total / static_cast<double>(n);
}

Vector balanced_shift(const Vector& priors) {
  check_positive(priors, "prior");
  return priors.array().log();
}

Vector inverse_shift(const Vector& priors) {
  check_positive(priors, "prior");
  return priors.array().log() - reversed(priors).array().log();
}

}  // namespace ltmx
