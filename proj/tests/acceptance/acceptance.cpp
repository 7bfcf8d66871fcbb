// Acceptance suite: one PASS/FAIL line per criterion.
//
//   ltmx_acceptance --work DIR [--only 1,2,5]
//
// Criteria 5-7 and 9 train real models from configs/acceptance and take tens
// of minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ltmx/aggregation.hpp"
#include "ltmx/config.hpp"
#include "ltmx/data/manifest.hpp"
#include "ltmx/hash.hpp"
#include "ltmx/losses.hpp"
#include "ltmx/pipeline.hpp"
#include "ltmx/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ltmx;
using namespace ltmx::test;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double cap_seconds;  // 0 = no runtime cap
  std::function<Outcome()> run;
};

fs::path g_work;

void progress(const std::string& msg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%H:%M:%S", std::localtime(&now));
  std::cerr << '[' << stamp << "] " << msg << std::endl;
}

std::string fmt(double x, int digits = 3) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

// Relative error with a floor on the scale, so coordinates that are zero up
// to rounding are judged absolutely.
double scaled_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ---- 1. loss oracles -------------------------------------------------------

long double shifted_ce_oracle(const Vector& z, int y, const std::vector<long double>& shift) {
  long double s = 0.0L;
  for (int k = 0; k < z.size(); ++k) s += std::exp(static_cast<long double>(z[k]) + shift[k]);
  return std::log(s) - (static_cast<long double>(z[y]) + shift[y]);
}

Outcome loss_oracles() {
  std::mt19937_64 rng(101);
  double worst = 0.0, worst_uniform = 0.0;
  std::map<std::string, double> per;
  auto track = [&](const std::string& name, double err) {
    per[name] = std::max(per[name], err);
    worst = std::max(worst, err);
  };
  const Vector uniform = Vector::Constant(10, 0.1);
  for (int t = 0; t < 100; ++t) {
    const Vector z = random_vector(rng, 10, 3.0);
    const Vector pi = random_priors(rng, 10);
    const int y = static_cast<int>(rng() % 10);
    std::vector<long double> zero(10, 0.0L), bal(10), inv(10);
    for (int k = 0; k < 10; ++k) {
      bal[k] = std::log(static_cast<long double>(pi[k]));
      inv[k] = bal[k] - std::log(static_cast<long double>(pi[9 - k]));
    }
    track("ce", rel_err(loss_ce(z, y), static_cast<double>(shifted_ce_oracle(z, y, zero))));
    track("bal", rel_err(loss_bal(z, y, pi), static_cast<double>(shifted_ce_oracle(z, y, bal))));
    track("inv", rel_err(loss_inv(z, y, pi, reversed(pi)), static_cast<double>(shifted_ce_oracle(z, y, inv))));

    long double denom = 0.0L;
    for (int k = 0; k < 10; ++k) denom += std::exp(static_cast<long double>(z[k]));
    track("tcp", rel_err(tcp(softmax(z), y), static_cast<double>(std::exp(static_cast<long double>(z[y])) / denom)));

    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double th = u(rng), tt = u(rng);
    const long double d = static_cast<long double>(th) - tt;
    track("confidence", scaled_err(loss_confidence(th, tt), static_cast<double>(d * d), 1e-300));

    const double fusion = 3.0 * u(rng), lambda = 2.0 * u(rng);
    const std::vector<double> cls{u(rng), u(rng), u(rng)}, conf{u(rng), u(rng), u(rng)};
    long double uo = fusion;
    for (int m = 0; m < 3; ++m) uo += static_cast<long double>(lambda) * (static_cast<long double>(cls[m]) + conf[m]);
    track("unified", rel_err(loss_unified(fusion, cls, conf, {lambda}), static_cast<double>(uo)));

    worst_uniform = std::max({worst_uniform, std::abs(loss_bal(z, y, uniform) - loss_ce(z, y)),
                              std::abs(loss_inv(z, y, uniform, reversed(uniform)) - loss_ce(z, y))});
  }
  std::ostringstream s;
  s << "max rel err " << fmt(worst) << " (";
  bool first = true;
  for (const auto& [k, v] : per) {
    s << (first ? "" : ", ") << k << ' ' << fmt(v, 2);
    first = false;
  }
  s << "); uniform-prior reduction max abs diff " << fmt(worst_uniform);
  return {worst < 1e-6 && worst_uniform <= 1e-12, s.str()};
}

// ---- 2. gradients ----------------------------------------------------------

Outcome gradients() {
  std::mt19937_64 rng(202);
  std::map<std::string, double> per;
  auto track = [&](const std::string& name, double a, double f) { per[name] = std::max(per[name], scaled_err(a, f)); };
  const double h = 1e-4;
  for (int t = 0; t < 100; ++t) {
    const Vector z = random_vector(rng, 10);
    const Vector pi = random_priors(rng, 10);
    const int y = static_cast<int>(rng() % 10);
    Vector gc, gb, gi;
    loss_ce(z, y, &gc);
    loss_bal(z, y, pi, &gb);
    loss_inv(z, y, pi, reversed(pi), &gi);
    for (int i = 0; i < 10; ++i) {
      track("ce", gc[i], central_diff([&](const Vector& x) { return loss_ce(x, y); }, z, i, h));
      track("bal", gb[i], central_diff([&](const Vector& x) { return loss_bal(x, y, pi); }, z, i, h));
      track("inv", gi[i], central_diff([&](const Vector& x) { return loss_inv(x, y, pi, reversed(pi)); }, z, i, h));
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double th = u(rng), tt = u(rng);
    double gh = 0.0;
    loss_confidence(th, tt, &gh);
    track("confidence", gh, (loss_confidence(th + h, tt) - loss_confidence(th - h, tt)) / (2 * h));

    // Unified batch loss w.r.t. every network output, TCP targets held fixed.
    ForwardResult out;
    const int n = 4, k = 5, mods = 2;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng() % k));
    for (auto& e : out.expert_logits) e = gaussian(rng, n, k, 1.0);
    for (int m = 0; m < mods; ++m) {
      out.modality_logits.push_back(gaussian(rng, n, k, 1.0));
      Vector th_m(n);
      for (int i = 0; i < n; ++i) th_m[i] = u(rng);
      out.tcp_hat.push_back(th_m);
    }
    const Vector bp = random_priors(rng, k);
    const double lambda = 0.5 + u(rng);
    const auto targets = tcp_targets(out, labels);
    OutputGrads g;
    unified_batch_loss(out, labels, bp, lambda, &g, &targets);
    auto f = [&] { return unified_batch_loss(out, labels, bp, lambda, nullptr, &targets).unified; };
    auto probe = [&](double& x, double analytic) {
      const double x0 = x;
      x = x0 + h;
      const double fp = f();
      x = x0 - h;
      const double fm = f();
      x = x0;
      track("unified", analytic, (fp - fm) / (2 * h));
    };
    for (int j = 0; j < 3; ++j) probe(out.expert_logits[j](t % n, t % k), g.expert_logits[j](t % n, t % k));
    for (int m = 0; m < mods; ++m) {
      probe(out.modality_logits[m](t % n, (t + 1) % k), g.modality_logits[m](t % n, (t + 1) % k));
      probe(out.tcp_hat[m][t % n], g.tcp_hat[m][t % n]);
    }

    // Stability (both readings) and aggregate CE w.r.t. theta.
    const auto views = stability_instance(rng, 20, 6, t % 3, 1.0);
    const auto lab = ce_instance(rng, 20, 6, t % 3, 2.0);
    const Vector theta = random_vector(rng, 3);
    Theta gs, gl, gce;
    batch_stability(views.a, views.b, theta, StabilityMode::probs, &gs);
    batch_stability(views.a, views.b, theta, StabilityMode::logits, &gl);
    batch_aggregate_ce(lab.logits, lab.labels, theta, &gce);
    for (int j = 0; j < 3; ++j) {
      track("stability", gs[j],
            central_diff([&](const Vector& x) { return batch_stability(views.a, views.b, x, StabilityMode::probs); }, theta, j, h));
      track("stability-logits", gl[j],
            central_diff([&](const Vector& x) { return batch_stability(views.a, views.b, x, StabilityMode::logits); }, theta, j, h));
      track("aggregate-ce", gce[j],
            central_diff([&](const Vector& x) { return batch_aggregate_ce(lab.logits, lab.labels, x); }, theta, j, h));
    }
  }
  double worst = 0.0;
  std::string parts;
  for (const auto& [k, v] : per) {
    worst = std::max(worst, v);
    parts += (parts.empty() ? "" : ", ") + k + ' ' + fmt(v, 2);
  }
  return {worst < 1e-3, "max rel err " + fmt(worst) + " over 100 instances (" + parts + ")"};
}

// ---- 3. imbalance generator ------------------------------------------------

Outcome imbalance() {
  bool ok = true;
  std::ostringstream s;
  for (double r : {10.0, 50.0, 100.0}) {
    const std::int64_t head = 500;
    const auto fwd = longtail_counts(10, {SplitKind::forward, r}, head);
    const auto bwd = longtail_counts(10, {SplitKind::backward, r}, head);
    std::vector<std::int64_t> oracle(10);
    for (int k = 0; k < 10; ++k) {
      oracle[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(head * std::pow(r, -k / 9.0) + 0.5)));
    }
    auto rev = bwd;
    std::reverse(rev.begin(), rev.end());
    ok &= fwd == oracle && rev == fwd;

    // Realized counts of an actual draw.
    VectorSource src("s", 10, labels_with_counts(std::vector<int>(10, 600)));
    const std::vector<const LabeledSource*> srcs{&src};
    const auto pool = pair_modalities(srcs, 1);
    for (auto kind : {SplitKind::forward, SplitKind::backward}) {
      const auto m = subsample_longtailed(pool, 10, {kind, r}, 9, head);
      ok &= m.class_counts(10) == (kind == SplitKind::forward ? fwd : bwd);
    }
    s << "r=" << r << " tail " << fwd.back() << "; ";
  }
  s << "forward/backward mutually reversed";
  return {ok, s.str()};
}

// ---- 4. simplex oracle -----------------------------------------------------

Outcome simplex_oracle() {
  std::mt19937_64 rng(404);
  const nn::AdamConfig adam{0.05, 0.9, 0.999, 1e-8};
  double worst_stab = -1e300, worst_ce = -1e300;
  for (int t = 0; t < 20; ++t) {
    const int n = 50 + static_cast<int>(rng() % 151);
    const auto v = stability_instance(rng, n, 10, t % 3, t % 2 ? 1.5 : 0.0);
    const auto learned = maximize_stability(v.a, v.b, adam, 1500);
    const auto w = learned.weights.w();
    const auto best = grid_search([&](const Weights3& x) { return stability_at(v.a, v.b, x); }, true);
    worst_stab = std::max(worst_stab, best.value - stability_at(v.a, v.b, {w[0], w[1], w[2]}));

    const auto l = ce_instance(rng, n, 10, t % 3, 3.0, 0.2);
    const auto fit = minimize_aggregate_ce(l.logits, l.labels, adam, 1500);
    const auto wc = fit.weights.w();
    const auto best_ce = grid_search([&](const Weights3& x) { return aggregate_ce_at(l.logits, l.labels, x); }, false);
    worst_ce = std::max(worst_ce, aggregate_ce_at(l.logits, l.labels, {wc[0], wc[1], wc[2]}) - best_ce.value);
  }
  return {worst_stab <= 1e-2 && worst_ce <= 1e-2,
          "20 instances; worst shortfall vs grid: stability " + fmt(worst_stab) + ", phase-2 CE " + fmt(worst_ce)};
}

// ---- experiments -----------------------------------------------------------

struct Experiment {
  ExperimentConfig config;
  ReportResult result;
  fs::path dir;
};

std::map<std::string, Experiment> g_experiments;

Experiment& run_experiment(const std::string& name, const std::string& suffix = "") {
  const std::string key = name + suffix;
  auto it = g_experiments.find(key);
  if (it != g_experiments.end()) return it->second;
  Experiment e;
  e.config = load_config(std::string(LTMX_CONFIG_DIR) + "/acceptance/" + name + ".yaml");
  e.dir = g_work / key;
  fs::remove_all(e.dir);
  CommandOptions opts;
  opts.out = e.dir.string();
  opts.log = [&](const std::string& msg) { progress(key + ": " + msg); };
  e.result = cmd_report(e.config, opts);
  return g_experiments.emplace(key, std::move(e)).first->second;
}

std::string failures_of(const ReportResult& r) {
  std::string s;
  for (const auto& f : r.failures) s += " [failed: " + f + "]";
  return s;
}

Outcome weight_direction() {
  const auto& e = run_experiment("weights-direction");
  // (train_ir, test_spec) -> (hits, runs)
  std::map<std::pair<std::string, std::string>, std::pair<int, int>> cells;
  std::ostringstream mean;
  for (const auto& r : e.result.records) {
    const int want = r.test_spec.rfind("forward", 0) == 0 ? 0 : 2;
    const auto w = AggregationWeights::from_weights(r.weights);
    auto& c = cells[{r.train_ir, r.test_spec}];
    c.first += w.argmax() == want;
    c.second += 1;
  }
  bool ok = !cells.empty() && e.result.failures.empty();
  std::ostringstream s;
  for (const auto& [k, c] : cells) {
    ok &= c.second == 5 && c.first >= 4;
    s << "IR" << k.first << ' ' << k.second << ' ' << c.first << '/' << c.second << "; ";
  }
  for (const auto& rep : e.result.summary) {
    s << "mean w IR" << rep.train_ir << ' ' << rep.test_spec << " (" << fmt(rep.weights[0], 2) << ", "
      << fmt(rep.weights[1], 2) << ", " << fmt(rep.weights[2], 2) << "); ";
  }
  return {ok, s.str() + failures_of(e.result)};
}

Outcome ablation() {
  const auto& e = run_experiment("ablation");
  std::map<std::uint64_t, std::map<std::string, double>> f1;
  for (const auto& r : e.result.records) {
    if (r.test_spec == "backward-10" && r.train_ir == "10") f1[r.seed][r.variant] = r.macro_f1;
  }
  int vs_tcp = 0, vs_single = 0, n = 0;
  std::ostringstream s;
  for (const auto& [seed, m] : f1) {
    if (!m.count("proposed") || !m.count("no_tcp") || !m.count("single_modality")) continue;
    ++n;
    vs_tcp += m.at("proposed") >= m.at("no_tcp");
    vs_single += m.at("proposed") >= m.at("single_modality");
  }
  for (const auto& rep : e.result.summary) {
    if (rep.test_spec == "backward-10") s << rep.variant << ' ' << fmt(rep.macro_f1.mean, 4) << "; ";
  }
  const bool ok = n == 5 && vs_tcp >= 4 && vs_single >= 4 && e.result.failures.empty();
  return {ok, "proposed >= no_tcp in " + std::to_string(vs_tcp) + "/" + std::to_string(n) +
                  ", >= single_modality in " + std::to_string(vs_single) + "/" + std::to_string(n) +
                  "; mean macro F1: " + s.str() + failures_of(e.result)};
}

Outcome lesion_weights() {
  const auto& e = run_experiment("lesion-weights");
  int hits = 0, n = 0;
  for (const auto& r : e.result.records) {
    ++n;
    hits += r.weights[0] > r.weights[1] && r.weights[1] > r.weights[2];
  }
  std::ostringstream s;
  s << "w1>w2>w3 in " << hits << '/' << n;
  for (const auto& rep : e.result.summary) {
    s << "; mean w (" << fmt(rep.weights[0], 2) << ", " << fmt(rep.weights[1], 2) << ", " << fmt(rep.weights[2], 2)
      << "), accuracy " << fmt(rep.accuracy.mean, 4) << ", macro F1 " << fmt(rep.macro_f1.mean, 3);
  }
  return {n == 5 && hits >= 4 && e.result.failures.empty(), s.str() + failures_of(e.result)};
}

// ---- 8. invariants over every run above -------------------------------------

Outcome invariants() {
  if (g_experiments.empty()) return {false, "no experiment runs to inspect (criteria 5-7 were skipped)"};
  int weights_files = 0, bad = 0;
  std::string first_bad;
  std::size_t failures = 0;
  for (const auto& [key, e] : g_experiments) {
    failures += e.result.failures.size();
    for (const auto& entry : fs::recursive_directory_iterator(e.dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("weights-", 0) != 0 || entry.path().extension() != ".txt") continue;
      ++weights_files;
      const auto wf = read_weights(entry.path().string());
      const auto ck = entry.path().parent_path() / "checkpoint.ltmx";
      bool ok = fs::exists(ck) && wf.checkpoint_hash == hash_file(ck.string());
      try {
        check_simplex(wf.weights.w());
      } catch (const std::exception&) {
        ok = false;
      }
      if (!ok && first_bad.empty()) first_bad = entry.path().string();
      bad += !ok;
    }
  }
  // Adaptation itself re-hashes the experts and checks the simplex after every
  // step, throwing on a violation; a thrown run shows up as a failure here.
  std::ostringstream s;
  s << weights_files << " weights files across " << g_experiments.size() << " experiments; " << bad
    << " with a stale checkpoint hash or off-simplex weights; " << failures << " failed runs";
  if (!first_bad.empty()) s << " (first: " << first_bad << ")";
  return {weights_files > 0 && bad == 0 && failures == 0, s.str()};
}

// ---- 9. determinism ---------------------------------------------------------

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(entry.path(), root).string()] = s.str();
  }
  return out;
}

Outcome determinism() {
  if (g_experiments.empty()) return {false, "no experiment runs to repeat (criteria 5-7 were skipped)"};
  std::vector<std::string> names;
  for (const auto& [key, e] : g_experiments) {
    if (key.find("#rerun") == std::string::npos) names.push_back(key);
  }
  int files = 0, differ = 0;
  std::string first;
  for (const auto& name : names) {
    const auto& a = g_experiments.at(name);
    const auto& b = run_experiment(name, "#rerun");
    const auto fa = csv_files(a.dir), fb = csv_files(b.dir);
    if (fa.size() != fb.size()) ++differ;
    for (const auto& [rel, bytes] : fa) {
      ++files;
      auto it = fb.find(rel);
      if (it == fb.end() || it->second != bytes) {
        ++differ;
        if (first.empty()) first = name + "/" + rel;
      }
    }
  }
  std::string detail = std::to_string(names.size()) + " experiments rerun from scratch; " + std::to_string(files) +
                       " CSV files compared, " + std::to_string(differ) + " differ";
  if (!first.empty()) detail += " (first: " + first + ")";
  return {differ == 0 && files > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: ltmx_acceptance --work DIR [--only 1,2,...]\n";
      return 2;
    }
  }
  if (g_work.empty()) g_work = fs::temp_directory_path() / "ltmx-acceptance";
  fs::create_directories(g_work);

  const std::vector<Criterion> criteria{
      {1, "loss oracles", 10, loss_oracles},
      {2, "gradients", 60, gradients},
      {3, "imbalance generator", 5, imbalance},
      {4, "simplex oracle", 120, simplex_oracle},
      {5, "case-1 weight direction", 1800, weight_direction},
      {6, "ablation macro F1", 2700, ablation},
      {7, "case-2 lesion weights", 900, lesion_weights},
      {8, "frozen experts and simplex", 0, invariants},
      {9, "determinism", 0, determinism},
  };

  int failed = 0;
  std::vector<std::string> lines;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    progress("criterion " + std::to_string(c.id) + ": " + c.name);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt(secs, 4) + " s";
    if (c.cap_seconds > 0) {
      timing += " of " + fmt(c.cap_seconds, 4) + " s cap";
      if (secs > c.cap_seconds) {
        o.pass = false;
        timing += ", over cap";
      }
    }
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " [" + std::to_string(c.id) + "] " + c.name +
                             ": " + o.detail + " (" + timing + ")";
    std::cout << line << std::endl;
    lines.push_back(line);
    failed += !o.pass;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
