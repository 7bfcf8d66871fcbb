#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ltmx {

// Percentage of matching entries. Throws DataError on empty or mismatched input.
double accuracy(std::span<const int> preds, std::span<const int> labels);

// F1 per class; a class with precision + recall == 0 scores 0.
std::vector<double> per_class_f1(std::span<const int> preds, std::span<const int> labels, int num_classes);

// Unweighted mean of per-class F1 over classes that occur in preds or labels.
double macro_f1(std::span<const int> preds, std::span<const int> labels, int num_classes);

// F1 of a single positive class.
double binary_f1(std::span<const int> preds, std::span<const int> labels, int positive = 1);

struct Summary {
  double mean = 0.0;
  double std_err = 0.0;
  int n = 0;
};

// Mean and sample-std / sqrt(n). Needs at least two values.
Summary summarize(std::span<const double> values);

// One evaluated (variant, train split, test split, seed) cell.
struct EvalRecord {
  std::string variant;
  std::string train_ir;
  std::string test_spec;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  // Positive-class F1 for two-class tasks; NaN otherwise.
  double binary_f1 = 0.0;
  std::array<double, 3> weights{};
  std::vector<double> per_class_f1;
};

struct EvalReport {
  std::string variant;
  std::string train_ir;
  std::string test_spec;
  Summary accuracy;
  Summary macro_f1;
  Summary binary_f1;
  std::vector<double> per_class_f1;
  std::array<double, 3> weights{};
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<std::string> failures;
  bool partial = false;
  std::vector<EvalRecord> records;
};

using RepRunner = std::function<EvalRecord(std::uint64_t seed)>;

// Runs one repetition per seed, up to `parallel` at once, and summarizes the
// successful ones. Failed repetitions are excluded and mark the report
// partial; fewer than two successes is an error.
EvalReport repeat_and_summarize(const RepRunner& run, std::span<const std::uint64_t> seeds, int parallel = 1);

// Summary of already computed records (all from the same grid cell). A
// single record gives NaN standard errors, written as empty CSV cells.
EvalReport summarize_records(std::vector<EvalRecord> records);

void write_results_csv(const std::string& path, std::span<const EvalRecord> records);
void write_summary_csv(const std::string& path, std::span<const EvalReport> reports);

}  // namespace ltmx
