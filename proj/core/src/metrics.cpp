#include "ltmx/metrics.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "ltmx/data/types.hpp"
#include "ltmx/error.hpp"

namespace ltmx {

namespace {

void check_pairs(std::span<const int> preds, std::span<const int> labels) {
  if (preds.empty()) throw DataError("metrics need at least one prediction");
  if (preds.size() != labels.size()) throw DataError("prediction and label counts differ");
}

struct Counts {
  std::vector<std::int64_t> tp, fp, fn;
};

Counts tally(std::span<const int> preds, std::span<const int> labels, int k) {
  Counts c{std::vector<std::int64_t>(k), std::vector<std::int64_t>(k), std::vector<std::int64_t>(k)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int y = labels[i];
    if (y < 0 || y >= k || p < 0 || p >= k) throw DataError("class index out of range");
    if (p == y) {
      ++c.tp[y];
    } else {
      ++c.fp[p];
      ++c.fn[y];
    }
  }
  return c;
}

double f1_from(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  check_pairs(preds, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::vector<double> per_class_f1(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  check_pairs(preds, labels);
  const auto c = tally(preds, labels, num_classes);
  std::vector<double> f1(num_classes);
  for (int k = 0; k < num_classes; ++k) f1[k] = f1_from(c.tp[k], c.fp[k], c.fn[k]);
  return f1;
}

double macro_f1(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  check_pairs(preds, labels);
  const auto c = tally(preds, labels, num_classes);
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < num_classes; ++k) {
    if (c.tp[k] + c.fp[k] + c.fn[k] == 0) continue;
    sum += f1_from(c.tp[k], c.fp[k], c.fn[k]);
    ++used;
  }
  return sum / used;
}

double binary_f1(std::span<const int> preds, std::span<const int> labels, int positive) {
  check_pairs(preds, labels);
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive;
    const bool y = labels[i] == positive;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
  }
  return f1_from(tp, fp, fn);
}

Summary summarize(std::span<const double> values) {
  if (values.size() < 2) throw DataError("standard errors need at least two repetitions");
  Summary s;
  s.n = static_cast<int>(values.size());
  // Shifted by the first value so identical repetitions give exactly zero spread.
  const double ref = values[0];
  double shift = 0.0;
  for (double v : values) shift += v - ref;
  shift /= s.n;
  s.mean = ref + shift;
  double ss = 0.0;
  for (double v : values) ss += (v - ref - shift) * (v - ref - shift);
  s.std_err = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  return s;
}

namespace {

// Like summarize, but a single value yields an undefined (NaN) std error.
Summary summarize_any(std::span<const double> values) {
  if (values.size() == 1) return {values[0], std::numeric_limits<double>::quiet_NaN(), 1};
  return summarize(values);
}

std::string csv_real(double v) { return std::isnan(v) ? std::string() : format_real(v); }

}  // namespace

EvalReport summarize_records(std::vector<EvalRecord> records) {
  if (records.empty()) throw DataError("no records to summarize");
  EvalReport r;
  r.variant = records.front().variant;
  r.train_ir = records.front().train_ir;
  r.test_spec = records.front().test_spec;
  std::vector<double> acc, f1, bin;
  const std::size_t k = records.front().per_class_f1.size();
  r.per_class_f1.assign(k, 0.0);
  for (const auto& rec : records) {
    acc.push_back(rec.accuracy);
    f1.push_back(rec.macro_f1);
    bin.push_back(rec.binary_f1);
    r.seeds.push_back(rec.seed);
    for (std::size_t c = 0; c < k && c < rec.per_class_f1.size(); ++c) r.per_class_f1[c] += rec.per_class_f1[c];
    for (int j = 0; j < 3; ++j) r.weights[j] += rec.weights[j];
  }
  const double n = static_cast<double>(records.size());
  for (auto& v : r.per_class_f1) v /= n;
  for (auto& w : r.weights) w /= n;
  r.accuracy = summarize_any(acc);
  r.macro_f1 = summarize_any(f1);
  r.binary_f1 = summarize_any(bin);
  r.records = std::move(records);
  return r;
}

EvalReport repeat_and_summarize(const RepRunner& run, std::span<const std::uint64_t> seeds, int parallel) {
  if (seeds.size() < 2) throw DataError("standard errors need at least two repetitions");
  const std::size_t n = seeds.size();
  std::vector<EvalRecord> results(n);
  std::vector<std::string> errors(n);
  std::vector<char> ok(n, 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = run(seeds[i]);
        ok[i] = 1;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(parallel, static_cast<int>(n)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<EvalRecord> good;
  std::vector<std::uint64_t> failed;
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) {
      good.push_back(std::move(results[i]));
    } else {
      failed.push_back(seeds[i]);
      failures.push_back("seed " + std::to_string(seeds[i]) + ": " + errors[i]);
    }
  }
  if (good.size() < 2) {
    std::string msg = "fewer than two repetitions succeeded";
    for (const auto& f : failures) msg += "; " + f;
    throw Error(msg);
  }
  auto report = summarize_records(std::move(good));
  report.failed_seeds = std::move(failed);
  report.failures = std::move(failures);
  report.partial = !report.failed_seeds.empty();
  return report;
}

void write_results_csv(const std::string& path, std::span<const EvalRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << "model_variant,train_ir,test_spec,seed,accuracy,macro_f1,w1,w2,w3\n";
  for (const auto& r : records) {
    out << r.variant << ',' << r.train_ir << ',' << r.test_spec << ',' << r.seed << ',' << csv_real(r.accuracy) << ','
        << csv_real(r.macro_f1) << ',' << csv_real(r.weights[0]) << ',' << csv_real(r.weights[1]) << ','
        << csv_real(r.weights[2]) << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

void write_summary_csv(const std::string& path, std::span<const EvalReport> reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << "model_variant,train_ir,test_spec,n,accuracy_mean,accuracy_se,macro_f1_mean,macro_f1_se,"
         "binary_f1_mean,binary_f1_se,w1_mean,w2_mean,w3_mean,partial\n";
  for (const auto& r : reports) {
    out << r.variant << ',' << r.train_ir << ',' << r.test_spec << ',' << r.accuracy.n << ','
        << csv_real(r.accuracy.mean) << ',' << csv_real(r.accuracy.std_err) << ',' << csv_real(r.macro_f1.mean)
        << ',' << csv_real(r.macro_f1.std_err) << ',' << csv_real(r.binary_f1.mean) << ','
        << csv_real(r.binary_f1.std_err) << ',' << csv_real(r.weights[0]) << ',' << csv_real(r.weights[1])
        << ',' << csv_real(r.weights[2]) << ',' << (r.partial ? "true" : "false") << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

}  // namespace ltmx
