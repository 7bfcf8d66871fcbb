#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "ltmx/error.hpp"
#include "ltmx/metrics.hpp"

using namespace ltmx;

namespace {

// Confusion-matrix macro F1; classes absent from both preds and labels are skipped.
double brute_macro_f1(const std::vector<int>& p, const std::vector<int>& y, int k) {
  std::vector<std::vector<int>> cm(k, std::vector<int>(k, 0));
  for (std::size_t i = 0; i < p.size(); ++i) cm[y[i]][p[i]]++;
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < k; ++c) {
    int tp = cm[c][c], row = 0, col = 0;
    for (int d = 0; d < k; ++d) {
      row += cm[c][d];
      col += cm[d][c];
    }
    if (row == 0 && col == 0) continue;
    ++used;
    const double prec = col ? static_cast<double>(tp) / col : 0.0;
    const double rec = row ? static_cast<double>(tp) / row : 0.0;
    sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  }
  return sum / used;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

EvalRecord record(std::uint64_t seed, double acc, double f1) {
  EvalRecord r;
  r.variant = "proposed";
  r.train_ir = "forward-10";
  r.test_spec = "uniform";
  r.seed = seed;
  r.accuracy = acc;
  r.macro_f1 = f1;
  r.binary_f1 = std::nan("");
  r.weights = {0.5, 0.3, 0.2};
  r.per_class_f1 = {f1, f1};
  return r;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("accuracy examples") {
    const std::vector<int> p{1, 1, 2, 2}, y{1, 2, 2, 2};
    CHECK(accuracy(p, y) == 75.0);
    CHECK(accuracy(y, y) == 100.0);
    CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
    CHECK_THROWS_AS(accuracy(p, std::vector<int>{1}), DataError);
  }

  TEST_CASE("macro F1 examples") {
    const std::vector<int> y{1, 1, 1, 2}, p{1, 1, 1, 1};
    CHECK(std::abs(macro_f1(p, y, 3) - 3.0 / 7.0) < 1e-12);
    const auto per = per_class_f1(p, y, 3);
    CHECK(std::abs(per[1] - 6.0 / 7.0) < 1e-12);
    CHECK(per[2] == 0.0);
    CHECK(macro_f1(y, y, 3) == 1.0);
    CHECK_THROWS_AS(macro_f1(std::vector<int>{}, std::vector<int>{}, 3), DataError);
    CHECK(std::abs(binary_f1(std::vector<int>{1, 0, 1, 1}, std::vector<int>{1, 1, 0, 1}) - 2.0 / 3.0) < 1e-12);
  }

  TEST_CASE("macro F1 matches a brute-force confusion matrix") {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 1000; ++t) {
      const int k = 2 + static_cast<int>(rng() % 9);
      const int n = 1 + static_cast<int>(rng() % 50);
      std::vector<int> p(n), y(n);
      for (int i = 0; i < n; ++i) {
        y[i] = static_cast<int>(rng() % k);
        p[i] = rng() % 3 == 0 ? y[i] : static_cast<int>(rng() % k);
      }
      const double m = macro_f1(p, y, k);
      CHECK(std::abs(m - brute_macro_f1(p, y, k)) < 1e-12);
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
      const double a = accuracy(p, y);
      CHECK(a >= 0.0);
      CHECK(a <= 100.0);

      std::vector<int> perm(k);
      for (int c = 0; c < k; ++c) perm[c] = c;
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<int> pp(n), yy(n);
      for (int i = 0; i < n; ++i) {
        pp[i] = perm[p[i]];
        yy[i] = perm[y[i]];
      }
      CHECK(accuracy(pp, yy) == a);
    }
  }

  TEST_CASE("summary statistics") {
    const std::vector<double> v{0.9, 1.1};
    const auto s = summarize(v);
    CHECK(std::abs(s.mean - 1.0) < 1e-12);
    CHECK(std::abs(s.std_err - 0.1) < 1e-12);
    CHECK(s.n == 2);
    const std::vector<double> same{0.7, 0.7, 0.7};
    CHECK(summarize(same).std_err == 0.0);
    CHECK_THROWS(summarize(std::vector<double>{1.0}));
  }

  TEST_CASE("repetitions run in parallel and failures make the report partial") {
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
    std::atomic<int> calls{0};
    const RepRunner run = [&](std::uint64_t s) {
      ++calls;
      if (s == 3) throw std::runtime_error("diverged");
      return record(s, 90.0 + static_cast<double>(s), 0.5);
    };
    for (int par : {1, 3}) {
      calls = 0;
      const auto r = repeat_and_summarize(run, seeds, par);
      CHECK(calls == 4);
      CHECK(r.partial);
      CHECK(r.failed_seeds == std::vector<std::uint64_t>{3});
      CHECK(r.seeds == std::vector<std::uint64_t>{1, 2, 4});
      CHECK(r.records.size() == 3);
      CHECK(std::abs(r.accuracy.mean - (91.0 + 92.0 + 94.0) / 3.0) < 1e-12);
      CHECK(r.macro_f1.std_err == 0.0);
      REQUIRE(r.failures.size() == 1);
      CHECK(r.failures[0].find("diverged") != std::string::npos);
    }
    const RepRunner all_ok = [](std::uint64_t s) { return record(s, 80.0, 0.4); };
    CHECK_FALSE(repeat_and_summarize(all_ok, seeds, 2).partial);
    const RepRunner mostly_bad = [](std::uint64_t s) {
      if (s != 1) throw std::runtime_error("x");
      return record(s, 1.0, 0.1);
    };
    CHECK_THROWS(repeat_and_summarize(mostly_bad, seeds, 2));
    CHECK_THROWS(repeat_and_summarize(all_ok, std::vector<std::uint64_t>{1}, 1));
  }

  TEST_CASE("result and summary CSV layout") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "ltmx-metrics-test";
    fs::create_directories(dir);
    std::vector<EvalRecord> recs{record(1, 90.5, 0.8), record(2, 91.5, 0.9)};
    write_results_csv((dir / "results.csv").string(), recs);
    const auto lines = read_lines((dir / "results.csv").string());
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "model_variant,train_ir,test_spec,seed,accuracy,macro_f1,w1,w2,w3");
    CHECK(lines[1] == "proposed,forward-10,uniform,1,90.5,0.8,0.5,0.3,0.2");

    const auto single = summarize_records({record(1, 90.0, 0.8)});
    CHECK(std::isnan(single.accuracy.std_err));
    const std::vector<EvalReport> reports{summarize_records(recs), single};
    write_summary_csv((dir / "summary.csv").string(), reports);
    const auto s = read_lines((dir / "summary.csv").string());
    REQUIRE(s.size() == 3);
    CHECK(s[0] ==
          "model_variant,train_ir,test_spec,n,accuracy_mean,accuracy_se,macro_f1_mean,macro_f1_se,binary_f1_mean,"
          "binary_f1_se,w1_mean,w2_mean,w3_mean,partial");
    CHECK(s[1].rfind("proposed,forward-10,uniform,2,91,0.5,", 0) == 0);
    CHECK(s[2].find(",1,90,,0.8,,") != std::string::npos);
    fs::remove_all(dir);
  }
}
