#include "ltmx/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ltmx/error.hpp"
#include "ltmx/rng.hpp"

namespace ltmx {

std::vector<Eigen::VectorXd> tcp_targets(const ForwardResult& out, std::span<const int> labels) {
  std::vector<Eigen::VectorXd> t;
  for (const auto& logits : out.modality_logits) {
    const Mat probs = softmax_rows(logits);
    Eigen::VectorXd v(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) v[i] = probs(i, labels[i]);
    t.push_back(std::move(v));
  }
  return t;
}

BatchLoss unified_batch_loss(const ForwardResult& out, std::span<const int> labels, const Vector& priors,
                             double lambda, OutputGrads* grads, const std::vector<Eigen::VectorXd>* targets) {
  if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
  const auto n = static_cast<Eigen::Index>(labels.size());
  BatchLoss loss;
  Mat* g[kNumExperts] = {nullptr, nullptr, nullptr};
  if (grads) {
    for (int j = 0; j < kNumExperts; ++j) g[j] = &grads->expert_logits[j];
  }
  loss.composite.ce = loss_ce_batch(out.expert_logits[0], labels, Vector(), g[0]);
  loss.composite.bal = loss_ce_batch(out.expert_logits[1], labels, balanced_shift(priors), g[1]);
  loss.composite.inv = loss_ce_batch(out.expert_logits[2], labels, inverse_shift(priors), g[2]);

  const std::size_t nm = out.modality_logits.size();
  if (grads) {
    grads->modality_logits.assign(nm, Mat());
    grads->tcp_hat.assign(nm, Eigen::VectorXd());
  }
  const auto computed = targets ? std::vector<Eigen::VectorXd>() : tcp_targets(out, labels);
  const auto& target = targets ? *targets : computed;
  if (target.size() != nm) throw ShapeError("one TCP target vector per modality is required");
  double aux = 0.0;
  for (std::size_t m = 0; m < nm; ++m) {
    Mat gm;
    const double cls = loss_ce_batch(out.modality_logits[m], labels, Vector(), grads ? &gm : nullptr);
    const Eigen::VectorXd& t_hat = out.tcp_hat[m];
    double conf = 0.0;
    Eigen::VectorXd dt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = t_hat[i] - target[m][i];
      conf += d * d;
      dt[i] = 2.0 * d / static_cast<double>(n);
    }
    conf /= static_cast<double>(n);
    loss.cls.push_back(cls);
    loss.conf.push_back(conf);
    aux += cls + conf;
    if (grads) {
      grads->modality_logits[m] = lambda * gm;
      grads->tcp_hat[m] = lambda * dt;
    }
  }
  loss.unified = loss.composite.total() + lambda * aux;
  return loss;
}

TrainState make_train_state(const PairedDataset& train, const TrainConfig& config) {
  if (train.empty()) throw DataError("training set is empty");
  const auto dist = class_priors(train);
  TrainState state;
  state.optimizer = nn::Adam(config.adam);
  state.priors = smooth_priors(Eigen::Map<const Vector>(dist.priors.data(), static_cast<Eigen::Index>(dist.priors.size())));
  return state;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "epoch", static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<EpochLoss> train_experts(const PairedDataset& train, ExpertBundle& bundle, const TrainConfig& config,
                                     TrainState& state, const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("training set is empty");
  if (config.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (train.shapes != bundle.config().modalities) throw ShapeError("training data does not match model modalities");
  if (state.priors.size() != train.num_classes) throw ConfigError("train state priors do not match class count");
  state.optimizer.set_config(config.adam);

  std::vector<EpochLoss> trace;
  auto params = bundle.parameters();
  const std::size_t n = train.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t nm = static_cast<std::size_t>(bundle.num_modalities());

  for (int epoch = state.epochs_done; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(n, config.seed, epoch);
    EpochLoss acc;
    acc.epoch = epoch + 1;
    int batch_index = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batch_index) {
      const std::size_t stop = std::min(n, start + bs);
      const auto batch = make_batch(train, std::span<const std::size_t>(order.data() + start, stop - start));
      ForwardCache cache;
      const auto out = bundle.forward(batch, &cache);
      OutputGrads grads;
      const auto loss = unified_batch_loss(out, batch.labels, state.priors, config.lambda, &grads);
      if (!std::isfinite(loss.unified)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << " batch " << batch_index + 1 << ": ce=" << loss.composite.ce
            << " bal=" << loss.composite.bal << " inv=" << loss.composite.inv;
        for (std::size_t m = 0; m < nm; ++m) msg << " cls" << m + 1 << "=" << loss.cls[m] << " conf" << m + 1 << "=" << loss.conf[m];
        throw NumericError(msg.str());
      }
      bundle.zero_grad();
      bundle.backward(batch, cache, out, grads);
      state.optimizer.step(params);

      const double w = static_cast<double>(stop - start) / static_cast<double>(n);
      acc.ce += w * loss.composite.ce;
      acc.bal += w * loss.composite.bal;
      acc.inv += w * loss.composite.inv;
      for (std::size_t m = 0; m < nm; ++m) {
        acc.cls_sum += w * loss.cls[m];
        acc.conf_sum += w * loss.conf[m];
      }
    }
    acc.unified = acc.composite() + config.lambda * (acc.cls_sum + acc.conf_sum);
    state.epochs_done = epoch + 1;
    trace.push_back(acc);
    if (on_epoch) on_epoch(acc, state);
  }
  return trace;
}

}  // namespace ltmx
