#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "ltmx/nn/tensor.hpp"

namespace ltmx {

using Vector = Eigen::VectorXd;

// Max-subtracted softmax and log-softmax.
Vector softmax(const Vector& logits);
Vector log_softmax(const Vector& logits);
Mat softmax_rows(const Mat& logits);

// Floor every prior at `floor` and renormalize, so that log(prior) is finite.
Vector smooth_priors(const Vector& priors, double floor = 1e-8);
Vector reversed(const Vector& v);

// -log softmax(logits)[label]. If grad is set, it receives d/d logits.
double loss_ce(const Vector& logits, int label, Vector* grad = nullptr);

// Balanced softmax: cross-entropy on logits + log(priors). All priors must be
// positive (throws NumericError otherwise).
double loss_bal(const Vector& logits, int label, const Vector& priors, Vector* grad = nullptr);

// Inverse softmax: cross-entropy on logits + log(priors) - log(reversed).
double loss_inv(const Vector& logits, int label, const Vector& priors, const Vector& reversed_priors,
                Vector* grad = nullptr);

struct CompositeLoss {
  double ce = 0.0;
  double bal = 0.0;
  double inv = 0.0;
  double total() const { return ce + bal + inv; }
};

// Expert E1 gets plain CE, E2 balanced softmax, E3 inverse softmax.
struct ExpertLogitGrads {
  Vector ce, bal, inv;
};
CompositeLoss loss_experts_composite(const Vector& v1, const Vector& v2, const Vector& v3, int label,
                                     const Vector& priors, ExpertLogitGrads* grads = nullptr);

// True class probability.
double tcp(const Vector& probs, int label);

// Squared error between estimated and true TCP.
double loss_confidence(double tcp_hat, double tcp_true, double* grad_hat = nullptr);
// Mean over pairs; throws ShapeError on a length mismatch.
double loss_confidence(std::span<const double> tcp_hat, std::span<const double> tcp_true);

struct LossWeights {
  double lambda = 1.0;
};

// fusion + lambda * sum_m (cls_m + conf_m). Throws ShapeError when the lists
// differ in length and ConfigError for negative lambda.
double loss_unified(double fusion_loss, std::span<const double> modality_cls_losses,
                    std::span<const double> modality_conf_losses, LossWeights weights);

// Batch forms: mean over rows, with the gradient of the mean written to grad.
// `shift` is added to every row before the softmax (log priors for the
// balanced and inverse losses); pass an empty vector for plain CE.
double loss_ce_batch(const Mat& logits, std::span<const int> labels, const Vector& shift, Mat* grad = nullptr);

// Log-prior shifts used by the balanced and inverse expert losses.
Vector balanced_shift(const Vector& priors);
Vector inverse_shift(const Vector& priors);

}  // namespace ltmx
