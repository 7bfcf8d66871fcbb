#include "ltmx/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ltmx/error.hpp"
#include "ltmx/rng.hpp"

namespace ltmx {

std::array<double, kNumExperts> AggregationWeights::w() const {
  const double mx = theta.maxCoeff();
  std::array<double, kNumExperts> out{};
  double sum = 0.0;
  for (int j = 0; j < kNumExperts; ++j) {
    out[j] = std::exp(theta[j] - mx);
    sum += out[j];
  }
  for (auto& x : out) x /= sum;
  return out;
}

int AggregationWeights::argmax() const {
  const auto ws = w();
  int best = 0;
  for (int j = 1; j < kNumExperts; ++j) {
    if (ws[j] > ws[best]) best = j;
  }
  return best;
}

AggregationWeights AggregationWeights::from_weights(const std::array<double, kNumExperts>& w) {
  AggregationWeights a;
  for (int j = 0; j < kNumExperts; ++j) {
    if (!(w[j] > 0.0)) throw NumericError("aggregation weights must be positive to recover theta");
    a.theta[j] = std::log(w[j]);
  }
  return a;
}

void check_simplex(const std::array<double, kNumExperts>& w) {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw NumericError("aggregation weight left the simplex (negative or NaN entry)");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw NumericError("aggregation weights sum to " + std::to_string(sum));
}

AggregatedPrediction aggregate(const Vector& v1, const Vector& v2, const Vector& v3, const AggregationWeights& weights) {
  if (v1.size() != v2.size() || v1.size() != v3.size()) throw ShapeError("aggregate: expert logits differ in length");
  const auto w = weights.w();
  AggregatedPrediction p;
  p.combined = w[0] * v1 + w[1] * v2 + w[2] * v3;
  p.probs = softmax(p.combined);
  return p;
}

double stability_objective(const AggregatedPrediction& a, const AggregatedPrediction& b) {
  if (a.probs.size() != b.probs.size()) throw ShapeError("stability_objective: class counts differ");
  return a.probs.dot(b.probs);
}

ExpertLogits ExpertLogits::slice(std::span<const std::size_t> rows) const {
  ExpertLogits out;
  for (int j = 0; j < kNumExperts; ++j) {
    out.v[j].resize(static_cast<Eigen::Index>(rows.size()), v[j].cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.v[j].row(static_cast<Eigen::Index>(i)) = v[j].row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

ExpertLogits compute_expert_logits(const ExpertBundle& bundle, const PairedDataset& data, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  const auto n = static_cast<Eigen::Index>(data.size());
  const int k = bundle.config().num_classes;
  ExpertLogits out;
  for (auto& m : out.v) m.resize(n, k);
  std::vector<std::size_t> idx;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index stop = std::min<Eigen::Index>(n, start + batch_size);
    idx.resize(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), static_cast<std::size_t>(start));
    const auto res = bundle.forward(make_batch(data, idx));
    for (int j = 0; j < kNumExperts; ++j) out.v[j].middleRows(start, stop - start) = res.expert_logits[j];
  }
  return out;
}

Mat combine(const ExpertLogits& logits, const AggregationWeights& weights) {
  const auto w = weights.w();
  return w[0] * logits.v[0] + w[1] * logits.v[1] + w[2] * logits.v[2];
}

std::vector<int> predict(const ExpertLogits& logits, const AggregationWeights& weights) {
  const Mat z = combine(logits, weights);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

namespace {

// Chain rule from d/dw to d/dtheta through w = softmax(theta).
Theta theta_grad(const std::array<double, kNumExperts>& w, const Theta& dw) {
  double dot = 0.0;
  for (int j = 0; j < kNumExperts; ++j) dot += w[j] * dw[j];
  Theta g;
  for (int j = 0; j < kNumExperts; ++j) g[j] = w[j] * (dw[j] - dot);
  return g;
}

// Row-wise softmax Jacobian-vector product: p * (g - <p, g>).
Mat softmax_vjp(const Mat& p, const Mat& g) {
  const Eigen::VectorXd dots = (p.array() * g.array()).rowwise().sum();
  return (p.array() * (g.colwise() - dots).array()).matrix();
}

}  // namespace

double batch_stability(const ExpertLogits& a, const ExpertLogits& b, const Theta& theta, StabilityMode mode,
                       Theta* grad) {
  if (a.rows() != b.rows() || a.v[0].cols() != b.v[0].cols()) throw ShapeError("batch_stability: view shapes differ");
  if (a.rows() == 0) throw DataError("batch_stability: empty batch");
  const double n = static_cast<double>(a.rows());
  AggregationWeights weights{theta};
  const auto w = weights.w();
  const Mat za = combine(a, weights);
  const Mat zb = combine(b, weights);
  Mat pa, pb;
  if (mode == StabilityMode::probs) {
    pa = softmax_rows(za);
    pb = softmax_rows(zb);
  } else {
    pa = za;
    pb = zb;
  }
  const double value = (pa.array() * pb.array()).sum() / n;
  if (grad) {
    Mat dza, dzb;
    if (mode == StabilityMode::probs) {
      dza = softmax_vjp(pa, pb / n);
      dzb = softmax_vjp(pb, pa / n);
    } else {
      dza = pb / n;
      dzb = pa / n;
    }
    Theta dw;
    for (int j = 0; j < kNumExperts; ++j) {
      dw[j] = (dza.array() * a.v[j].array()).sum() + (dzb.array() * b.v[j].array()).sum();
    }
    *grad = theta_grad(w, dw);
  }
  return value;
}

double batch_aggregate_ce(const ExpertLogits& logits, std::span<const int> labels, const Theta& theta, Theta* grad) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ShapeError("batch_aggregate_ce: label count differs");
  if (labels.empty()) throw DataError("batch_aggregate_ce: empty batch");
  AggregationWeights weights{theta};
  const auto w = weights.w();
  const Mat z = combine(logits, weights);
  Mat dz;
  const double loss = loss_ce_batch(z, labels, Vector(), grad ? &dz : nullptr);
  if (grad) {
    Theta dw;
    for (int j = 0; j < kNumExperts; ++j) dw[j] = (dz.array() * logits.v[j].array()).sum();
    *grad = theta_grad(w, dw);
  }
  return loss;
}

namespace {

// Adam over the three entries of theta.
class ThetaOptimizer {
 public:
  explicit ThetaOptimizer(const nn::AdamConfig& c) : adam_(c) {
    param_.name = "theta";
    param_.value = Mat::Zero(1, kNumExperts);
    param_.grad = Mat::Zero(1, kNumExperts);
  }

  // Descent step along `grad`; the simplex is checked after every update.
  void descend(const Theta& grad) {
    param_.grad = grad.transpose();
    adam_.step({&param_});
    check_simplex(weights().w());
  }
  AggregationWeights weights() const { return {param_.value.row(0).transpose()}; }
  std::int64_t steps() const { return adam_.steps(); }

 private:
  nn::Adam adam_;
  nn::Param param_;
};

void check_steps(int steps) {
  if (steps < 0) throw ConfigError("step count must be nonnegative");
}

PairedDataset augmented_views(const PairedDataset& data, const AugmentConfig& augment, Rng& rng, PairedDataset& second) {
  PairedDataset first;
  first.num_classes = second.num_classes = data.num_classes;
  first.shapes = second.shapes = data.shapes;
  first.samples.reserve(data.size());
  second.samples.reserve(data.size());
  for (const auto& s : data.samples) {
    auto views = stochastic_augment(s, augment, rng);
    first.samples.push_back(std::move(views.first));
    second.samples.push_back(std::move(views.second));
  }
  return first;
}

}  // namespace

AdaptResult maximize_stability(const ExpertLogits& a, const ExpertLogits& b, const nn::AdamConfig& adam, int steps,
                               StabilityMode mode) {
  check_steps(steps);
  ThetaOptimizer opt(adam);
  AdaptResult r;
  Theta g;
  r.trace.push_back(batch_stability(a, b, opt.weights().theta, mode));
  for (int s = 0; s < steps; ++s) {
    batch_stability(a, b, opt.weights().theta, mode, &g);
    opt.descend(-g);
  }
  r.weights = opt.weights();
  r.trace.push_back(batch_stability(a, b, r.weights.theta, mode));
  r.steps = opt.steps();
  return r;
}

AdaptResult minimize_aggregate_ce(const ExpertLogits& logits, std::span<const int> labels, const nn::AdamConfig& adam,
                                  int steps) {
  check_steps(steps);
  ThetaOptimizer opt(adam);
  AdaptResult r;
  Theta g;
  r.trace.push_back(batch_aggregate_ce(logits, labels, opt.weights().theta));
  for (int s = 0; s < steps; ++s) {
    batch_aggregate_ce(logits, labels, opt.weights().theta, &g);
    opt.descend(g);
  }
  r.weights = opt.weights();
  r.trace.push_back(batch_aggregate_ce(logits, labels, r.weights.theta));
  r.steps = opt.steps();
  return r;
}

AdaptResult adapt_test_time(const PairedDataset& test, const ExpertBundle& bundle, const AugmentConfig& augment,
                            const AdaptConfig& config) {
  if (!test.all_images()) {
    throw UnsupportedModalityError(
        "test-time adaptation needs every modality to be augmentable; use the supervised phase-2 fit for tabular data");
  }
  if (test.empty()) throw DataError("test-time adaptation: test set is empty");
  if (config.epochs < 0 || config.batch_size < 1) throw ConfigError("adaptation needs epochs >= 0 and batch_size >= 1");

  AdaptResult r;
  r.parameter_hash_before = bundle.parameter_hash();

  PairedDataset eval_b;
  Rng eval_rng = make_rng(config.seed, "adapt/eval");
  const auto eval_a = augmented_views(test, augment, eval_rng, eval_b);
  const auto la = compute_expert_logits(bundle, eval_a);
  const auto lb = compute_expert_logits(bundle, eval_b);

  ThetaOptimizer opt(config.adam);
  r.trace.push_back(batch_stability(la, lb, opt.weights().theta, config.mode));
  const std::size_t n = test.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  Theta g;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    PairedDataset view_b;
    Rng rng = make_rng(config.seed, "adapt/views", static_cast<std::uint64_t>(epoch));
    const auto view_a = augmented_views(test, augment, rng, view_b);
    const auto ea = compute_expert_logits(bundle, view_a);
    const auto eb = compute_expert_logits(bundle, view_b);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(config.seed, "adapt/order", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(n, start + bs) - start);
      batch_stability(ea.slice(rows), eb.slice(rows), opt.weights().theta, config.mode, &g);
      opt.descend(-g);
    }
    r.trace.push_back(batch_stability(la, lb, opt.weights().theta, config.mode));
  }
  r.weights = opt.weights();
  r.steps = opt.steps();
  r.parameter_hash_after = bundle.parameter_hash();
  if (r.parameter_hash_after != r.parameter_hash_before) throw Error("expert parameters changed during adaptation");
  return r;
}

AdaptResult phase2_fit(const PairedDataset& train, const ExpertBundle& bundle, const AdaptConfig& config) {
  if (train.empty()) throw DataError("phase-2 fit: training set is empty");
  if (config.epochs < 0 || config.batch_size < 1) throw ConfigError("phase-2 fit needs epochs >= 0 and batch_size >= 1");
  AdaptResult r;
  r.parameter_hash_before = bundle.parameter_hash();
  const auto logits = compute_expert_logits(bundle, train);
  const auto labels = train.labels();

  ThetaOptimizer opt(config.adam);
  r.trace.push_back(batch_aggregate_ce(logits, labels, opt.weights().theta));
  const std::size_t n = train.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  Theta g;
  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(config.seed, "phase2/order", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(n, start + bs) - start);
      batch_labels.clear();
      for (std::size_t i : rows) batch_labels.push_back(labels[i]);
      batch_aggregate_ce(logits.slice(rows), batch_labels, opt.weights().theta, &g);
      opt.descend(g);
    }
    r.trace.push_back(batch_aggregate_ce(logits, labels, opt.weights().theta));
  }
  r.weights = opt.weights();
  r.steps = opt.steps();
  r.parameter_hash_after = bundle.parameter_hash();
  if (r.parameter_hash_after != r.parameter_hash_before) throw Error("expert parameters changed during phase-2 fit");
  return r;
}

void write_weights(const std::string& path, const WeightsFile& file) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write weights file " + path);
  const auto w = file.weights.w();
  out << "# checkpoint=" << file.checkpoint_hash << '\n'
      << "# split=" << file.split << '\n'
      << "# method=" << file.method << '\n'
      << "# seed=" << file.seed << '\n';
  for (int j = 0; j < kNumExperts; ++j) out << 'w' << j + 1 << '=' << format_real(w[j]) << '\n';
  if (!out) throw Error("failed writing weights file " + path);
}

WeightsFile read_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open weights file " + path);
  WeightsFile f;
  std::array<double, kNumExperts> w{};
  std::array<bool, kNumExperts> seen{};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const bool header = line.rfind("# ", 0) == 0;
    const std::string body = header ? line.substr(2) : line;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(path + ": malformed line '" + line + "'");
    const std::string key = body.substr(0, eq);
    const std::string value = body.substr(eq + 1);
    if (header) {
      if (key == "checkpoint") f.checkpoint_hash = value;
      else if (key == "split") f.split = value;
      else if (key == "method") f.method = value;
      else if (key == "seed") f.seed = std::stoull(value);
      continue;
    }
    if (key.size() != 2 || key[0] != 'w' || key[1] < '1' || key[1] > '3') throw Error(path + ": unknown key " + key);
    const int j = key[1] - '1';
    w[j] = std::stod(value);
    seen[j] = true;
  }
  for (int j = 0; j < kNumExperts; ++j) {
    if (!seen[j]) throw Error(path + ": missing w" + std::to_string(j + 1));
  }
  f.weights = AggregationWeights::from_weights(w);
  return f;
}

std::optional<std::string> distribution_mismatch(const DistributionSpec& train, const DistributionSpec& test) {
  const bool kinds_match = train.kind == test.kind;
  const double rel = std::abs(train.ratio - test.ratio) / std::max(train.ratio, test.ratio);
  if (kinds_match && rel <= 0.2) return std::nullopt;
  std::ostringstream msg;
  msg << "train split " << train.id() << " and target split " << test.id()
      << " differ; supervised weight fitting assumes they share a distribution";
  return msg.str();
}

}  // namespace ltmx
