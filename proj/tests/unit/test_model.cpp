#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "ltmx/checkpoint.hpp"
#include "ltmx/error.hpp"
#include "ltmx/model.hpp"
#include "ltmx/nn/layers.hpp"
#include "ltmx/training.hpp"
#include "support.hpp"

using namespace ltmx;
using namespace ltmx::test;

namespace {

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

// Checks dL/dparam for L = sum(R .* f()) on a handful of entries.
template <typename Forward>
void check_param_grad(nn::Param& p, const Mat& analytic, Forward&& f, std::mt19937_64& rng, int probes = 8) {
  const double h = 1e-5;
  for (int t = 0; t < probes; ++t) {
    const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p.value.size()));
    const double x0 = p.value.data()[i];
    p.value.data()[i] = x0 + h;
    const double fp = f();
    p.value.data()[i] = x0 - h;
    const double fm = f();
    p.value.data()[i] = x0;
    const double fd = (fp - fm) / (2 * h);
    const double a = analytic.data()[i];
    CHECK_MESSAGE(std::abs(a - fd) <= 1e-6 + 1e-4 * std::max(std::abs(a), std::abs(fd)), p.name, " entry ", i);
  }
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("linear layer gradients") {
    std::mt19937_64 rng(1);
    nn::Linear lin("l", 5, 3);
    lin.weight.value = random_mat(rng, 5, 3);
    lin.bias.value = random_mat(rng, 1, 3);
    const Mat x = random_mat(rng, 4, 5), r = random_mat(rng, 4, 3);
    lin.weight.zero_grad();
    lin.bias.zero_grad();
    const Mat dx = lin.backward(x, r);
    auto f = [&] { return (lin.forward(x).array() * r.array()).sum(); };
    check_param_grad(lin.weight, lin.weight.grad, f, rng);
    check_param_grad(lin.bias, lin.bias.grad, f, rng);
    Mat xv = x;
    nn::Param xp{"x", xv, dx};
    check_param_grad(xp, dx, [&] { return (lin.forward(xp.value).array() * r.array()).sum(); }, rng);
  }

  TEST_CASE("convolution and pooling gradients") {
    std::mt19937_64 rng(2);
    nn::Conv2d conv("c", 2, 3, 3, 7, 6);
    conv.weight.value = random_mat(rng, 3, 18);
    conv.bias.value = random_mat(rng, 1, 3);
    nn::MaxPool2 pool{3, conv.out_height(), conv.out_width()};
    const Mat x = random_mat(rng, 2, 2 * 7 * 6);
    const Mat r = random_mat(rng, 2, 3 * pool.out_height() * pool.out_width());
    auto f = [&](const Mat& in) { return (pool.forward(nn::relu(conv.forward(in))).array() * r.array()).sum(); };
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    IndexMat arg;
    const Mat z = conv.forward(x);
    pool.forward(nn::relu(z), &arg);
    const Mat dx = conv.backward(x, nn::relu_backward(z, pool.backward(r, arg)));
    check_param_grad(conv.weight, conv.weight.grad, [&] { return f(x); }, rng, 12);
    check_param_grad(conv.bias, conv.bias.grad, [&] { return f(x); }, rng, 3);
    nn::Param xp{"x", x, dx};
    check_param_grad(xp, dx, [&] { return f(xp.value); }, rng, 12);
  }

  TEST_CASE("embedding gradients scatter-add") {
    nn::Embedding e("e", 4, 2);
    e.table.value << 1, 2, 3, 4, 5, 6, 7, 8;
    e.table.zero_grad();
    Eigen::VectorXi idx(3);
    idx << 1, 3, 1;
    const Mat out = e.forward(idx);
    CHECK(out(0, 0) == 3);
    CHECK(out(1, 1) == 8);
    Mat dy(3, 2);
    dy << 1, 1, 2, 2, 10, 10;
    e.backward(idx, dy);
    CHECK(e.table.grad(1, 0) == 11);
    CHECK(e.table.grad(3, 1) == 2);
    CHECK(e.table.grad(0, 0) == 0);
  }

  TEST_CASE("bundle backward matches finite differences of the unified loss") {
    for (auto fusion : {FusionWeighting::tcp, FusionWeighting::none}) {
      for (bool separate : {false, true}) {
        auto cfg = small_config();
        cfg.fusion = fusion;
        cfg.separate_expert_encoders = separate;
        ExpertBundle bundle(cfg, 3);
        const auto ds = random_dataset(cfg, 6, 4);
        const auto idx = all_indices(ds.size());
        const auto batch = make_batch(ds, idx);
        Vector priors(3);
        priors << 0.6, 0.3, 0.1;
        ForwardCache cache;
        const auto out = bundle.forward(batch, &cache);
        const auto targets = tcp_targets(out, batch.labels);
        OutputGrads grads;
        unified_batch_loss(out, batch.labels, priors, 0.7, &grads, &targets);
        bundle.zero_grad();
        bundle.backward(batch, cache, out, grads);
        auto loss = [&] { return unified_batch_loss(bundle.forward(batch), batch.labels, priors, 0.7, nullptr, &targets).unified; };
        std::mt19937_64 rng(5);
        for (auto* p : bundle.parameters()) {
          const Mat analytic = p->grad;
          check_param_grad(*p, analytic, loss, rng, 3);
        }
      }
    }
  }

  TEST_CASE("fresh network predicts near-uniform, confidence in [0,1]") {
    ModelConfig cfg;
    cfg.num_classes = 10;
    cfg.modalities = {ModalityShape::image(1, 28, 28), ModalityShape::image(3, 32, 32)};
    ExpertBundle bundle(cfg, 1);
    const auto ds = random_dataset(cfg, 20, 2);
    for (const auto& s : ds.samples) {
      const auto c = confidence_forward(s, bundle);
      for (const auto& p : c.probs) {
        CHECK(std::abs(p.sum() - 1.0) < 1e-6);
        for (int k = 0; k < 10; ++k) CHECK(std::abs(p[k] - 0.1) < 0.02);
      }
    }
    const auto many = random_dataset(cfg, 1000, 3);
    auto wide = small_config();
    wide.init_std = 5.0;
    ExpertBundle loud(wide, 2);
    const auto loud_ds = random_dataset(wide, 1000, 4);
    for (const auto* b : {&bundle, &loud}) {
      const auto& data = b == &bundle ? many : loud_ds;
      const auto out = b->forward(make_batch(data, all_indices(data.size())));
      for (const auto& t : out.tcp_hat) {
        CHECK(t.minCoeff() >= 0.0);
        CHECK(t.maxCoeff() <= 1.0);
      }
    }
  }

  TEST_CASE("modalities are processed independently by the classifier module") {
    auto cfg = small_config();
    ExpertBundle bundle(cfg, 8);
    auto ds = random_dataset(cfg, 1, 9);
    const auto before = confidence_forward(ds.samples[0], bundle);
    auto& img = std::get<Image>(ds.samples[0].modalities[0]);
    for (auto& x : img.pixels) x = 1.0 - x;
    const auto after = confidence_forward(ds.samples[0], bundle);
    CHECK(after.probs[1] == before.probs[1]);
    CHECK(after.tcp_hat[1] == before.tcp_hat[1]);
    CHECK(after.probs[0] != before.probs[0]);
  }

  TEST_CASE("shape mismatch is reported") {
    auto cfg = small_config();
    ExpertBundle bundle(cfg, 1);
    auto ds = random_dataset(cfg, 1, 1);
    ds.samples[0].modalities[0] = Image(1, 12, 12);
    CHECK_THROWS_AS(confidence_forward(ds.samples[0], bundle), ShapeError);
    ds.samples[0].modalities.pop_back();
    CHECK_THROWS_AS(expert_forward(ds.samples[0], bundle), ShapeError);
  }

  TEST_CASE("fuse") {
    Vector h1(2), h2(1);
    h1 << 1, 2;
    h2 << 3;
    const Vector f = fuse({h1, h2}, {0.5, 0.5});
    CHECK(f.size() == 3);
    CHECK(f[0] == 0.5);
    CHECK(f[1] == 1.0);
    CHECK(f[2] == 1.5);
    const Vector plain = fuse({h1, h2}, {1.0, 1.0});
    CHECK(plain[2] == 3.0);
    const Vector zeroed = fuse({h1, h2}, {0.0, 1.0});
    CHECK(zeroed[0] == 0.0);
    CHECK(zeroed[1] == 0.0);
    CHECK_THROWS_AS(fuse(std::vector<Vector>{h1, h2}, std::vector<double>{1.0}), ShapeError);

    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
      const Vector a = random_vector(rng, 4), b = random_vector(rng, 3);
      const double ta = std::abs(random_vector(rng, 1)[0]), tb = std::abs(random_vector(rng, 1)[0]);
      const double c = random_vector(rng, 1)[0];
      const Vector base = fuse({a, b}, {ta, tb});
      const Vector scaled = fuse({a, b}, {c * ta, tb});
      for (int i = 0; i < 4; ++i) CHECK(std::abs(scaled[i] - c * base[i]) < 1e-12);
      for (int i = 4; i < 7; ++i) CHECK(scaled[i] == base[i]);
    }
  }

  TEST_CASE("expert forward: determinism, shapes, tied heads") {
    auto cfg = small_config(4);
    ExpertBundle bundle(cfg, 2);
    const auto ds = random_dataset(cfg, 3, 3);
    const auto a = expert_forward(ds.samples[0], bundle);
    const auto b = expert_forward(ds.samples[0], bundle);
    for (int j = 0; j < kNumExperts; ++j) {
      CHECK(a.logits[j] == b.logits[j]);
      CHECK(a.logits[j].size() == 4);
      CHECK(std::abs(softmax(a.logits[j]).sum() - 1.0) < 1e-6);
    }
    CHECK(a.logits[0] != a.logits[1]);
    cfg.tie_expert_init = true;
    ExpertBundle tied(cfg, 2);
    const auto t = expert_forward(ds.samples[1], tied);
    CHECK(t.logits[0] == t.logits[1]);
    CHECK(t.logits[1] == t.logits[2]);
  }

  TEST_CASE("one training step updates every expert head and confidence head") {
    auto cfg = small_config();
    cfg.init_std = 1e-3;
    ExpertBundle bundle(cfg, 4);
    const auto ds = random_dataset(cfg, 12, 5);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 12;
    tc.adam.lr = 1e-3;
    auto state = make_train_state(ds, tc);
    std::vector<std::vector<Mat>> before;
    auto snapshot = [&] {
      std::vector<std::vector<Mat>> s;
      for (int j = 0; j < kNumExperts; ++j) {
        s.emplace_back();
        for (const auto* p : bundle.expert_parameters(j)) s.back().push_back(p->value);
      }
      for (int m = 0; m < bundle.num_modalities(); ++m) {
        s.emplace_back();
        for (const auto* p : bundle.confidence_parameters(m)) s.back().push_back(p->value);
      }
      return s;
    };
    before = snapshot();
    train_experts(ds, bundle, tc, state);
    const auto after = snapshot();
    for (std::size_t g = 0; g < before.size(); ++g) {
      double change = 0.0;
      for (std::size_t i = 0; i < before[g].size(); ++i) change += (after[g][i] - before[g][i]).norm();
      CHECK(change > 0.0);
    }
  }

  TEST_CASE("separable toy set is fit to >= 99% within 50 epochs") {
    // 8 numeric features; the class is the sign of a fixed direction.
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector dir(8);
    for (int i = 0; i < 8; ++i) dir[i] = nd(rng);
    PairedDataset ds;
    ds.num_classes = 2;
    ds.shapes = {ModalityShape::tabular({}, 8)};
    std::vector<Vector> xs;
    while (ds.samples.size() < 200) {
      Vector x(8);
      for (int i = 0; i < 8; ++i) x[i] = 0.5 + 0.15 * nd(rng);
      const double margin = (x.array() - 0.5).matrix().dot(dir);
      if (std::abs(margin) < 0.05) continue;
      TabularFeatures f{{}, std::vector<double>(x.data(), x.data() + 8)};
      ds.samples.push_back({{f}, margin > 0 ? 1 : 0, static_cast<std::int64_t>(ds.samples.size())});
      xs.push_back(x.array() - 0.5);
    }

    // Oracle: plain logistic regression separates the same set.
    Vector w = Vector::Zero(9);
    for (int it = 0; it < 5000; ++it) {
      Vector g = Vector::Zero(9);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double z = w.head(8).dot(xs[i]) + w[8];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double e = p - ds.samples[i].label;
        g.head(8) += e * xs[i];
        g[8] += e;
      }
      w -= 20.0 * g / static_cast<double>(xs.size());
    }
    int lr_correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) lr_correct += ((w.head(8).dot(xs[i]) + w[8]) > 0) == (ds.samples[i].label == 1);
    REQUIRE(lr_correct >= 198);

    ModelConfig cfg;
    cfg.num_classes = 2;
    cfg.modalities = ds.shapes;
    cfg.tabular.hidden = 16;
    cfg.head_width = 16;
    cfg.init_std = 0.1;
    ExpertBundle bundle(cfg, 1);
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 16;
    tc.adam.lr = 1e-2;
    auto state = make_train_state(ds, tc);
    const auto trace = train_experts(ds, bundle, tc, state);
    CHECK(trace.back().composite() < trace.front().composite());
    const auto out = bundle.forward(make_batch(ds, all_indices(ds.size())));
    int correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      Eigen::Index arg;
      out.expert_logits[0].row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      correct += arg == ds.samples[i].label;
    }
    CHECK(correct >= 198);
    for (const auto& e : trace) {
      CHECK(std::abs(e.unified - (e.composite() + tc.lambda * (e.cls_sum + e.conf_sum))) < 1e-6);
    }
  }

  TEST_CASE("non-finite loss aborts with a diagnostic") {
    auto cfg = small_config();
    ExpertBundle bundle(cfg, 1);
    const auto ds = random_dataset(cfg, 6, 1);
    bundle.parameters().back()->value(0, 0) = std::nan("");
    TrainConfig tc;
    tc.epochs = 2;
    auto state = make_train_state(ds, tc);
    try {
      train_experts(ds, bundle, tc, state);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch 1 batch 1") != std::string::npos);
      CHECK(msg.find("ce=") != std::string::npos);
    }
  }

  TEST_CASE("checkpoint round trip and resume equivalence") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "ltmx-model-test";
    fs::create_directories(dir);
    auto cfg = small_config();
    const auto ds = random_dataset(cfg, 20, 7);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.adam.lr = 1e-3;
    tc.seed = 11;

    ExpertBundle full(cfg, 5);
    auto full_state = make_train_state(ds, tc);
    const auto full_trace = train_experts(ds, full, tc, full_state);

    ExpertBundle part(cfg, 5);
    auto part_state = make_train_state(ds, tc);
    TrainConfig first = tc;
    first.epochs = 2;
    train_experts(ds, part, first, part_state);
    const auto path = (dir / "ck.ltmx").string();
    save_checkpoint(path, part, tc, part_state, {{"variant", "proposed"}});
    auto loaded = load_checkpoint(path);
    CHECK(loaded.bundle.parameter_hash() == part.parameter_hash());
    CHECK(loaded.bundle.config() == part.config());
    CHECK(loaded.train == tc);
    CHECK(loaded.state.epochs_done == 2);
    CHECK(loaded.metadata.at("variant") == "proposed");
    const auto rest = train_experts(ds, loaded.bundle, tc, loaded.state);
    REQUIRE(rest.size() == 1);
    CHECK(std::abs(rest[0].unified - full_trace[2].unified) < 1e-6);
    CHECK(loaded.bundle.parameter_hash() == full.parameter_hash());

    std::ofstream(dir / "bad.ltmx") << "not a checkpoint\n";
    CHECK_THROWS_AS(load_checkpoint((dir / "bad.ltmx").string()), Error);
    fs::remove_all(dir);
  }
}
