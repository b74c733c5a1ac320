#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "genparse/checkpoint.hpp"
#include "genparse/training.hpp"
#include "test_util.hpp"

using namespace genparse;

TEST_CASE("clip gradients element-wise") {
  ParameterStore<float> s;
  auto& p = s.add("p", 4, 1);
  p.grad = Tensor<float>::column({7.2f, -3.f, -9.f, 5.f});
  clip_gradients(s, 5.f);
  CHECK(p.grad.values()[0] == 5.f);
  CHECK(p.grad.values()[1] == -3.f);
  CHECK(p.grad.values()[2] == -5.f);
  CHECK(p.grad.values()[3] == 5.f);
  const auto once = std::vector<float>(p.grad.values().begin(), p.grad.values().end());
  clip_gradients(s, 5.f);
  CHECK(std::vector<float>(p.grad.values().begin(), p.grad.values().end()) == once);

  p.grad = Tensor<float>(4, 1);
  clip_gradients(s, 5.f);
  for (float g : p.grad.values()) CHECK(g == 0.f);
}

TEST_CASE("adam first step moves against the gradient by about lr") {
  ParameterStore<double> s;
  auto& p = s.add("p", 3, 1);
  p.value = Tensor<double>::column({1, 1, 1});
  p.grad = Tensor<double>::column({0.5, -2, 0});
  TrainConfig cfg;
  AdamState<double> st(s);
  adam_step(s, st, cfg);
  const double decay = 1 - cfg.lr * cfg.weight_decay;
  CHECK(p.value[0] == doctest::Approx(decay - cfg.lr).epsilon(1e-9));
  CHECK(p.value[1] == doctest::Approx(decay + cfg.lr).epsilon(1e-9));
  // Zero gradient and zero moments: only the decay acts.
  CHECK(p.value[2] == doctest::Approx(decay).epsilon(1e-15));
  CHECK(st.step == 1);
}

TEST_CASE("adam matches a hand-rolled update over several steps") {
  ParameterStore<double> s;
  auto& p = s.add("p", 1, 1);
  p.value[0] = 0.3;
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  AdamState<double> st(s);
  double x = 0.3, m = 0, v = 0;
  for (int t = 1; t <= 5; ++t) {
    const double g = std::sin(t * 1.0);
    p.grad = Tensor<double>::scalar(g);
    adam_step(s, st, cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x = x * (1 - cfg.lr * cfg.weight_decay) - cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    CHECK(p.value[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), TrainingError);
  c = {};
  c.beta2 = 1;
  CHECK_THROWS_AS(c.validate(), TrainingError);
}

TEST_CASE("batch loss is the mean of per-instance losses") {
  auto m = testutil::toy_model<double>(6, 3);
  const auto data = make_instances(testutil::toy_corpus());
  const std::span<const Instance> two(data.data(), 2);
  Graph<double> g;
  const double batch = g.scalar_value(batch_loss(g, *m, two));
  double separate = 0;
  for (const auto& inst : two) {
    Graph<double> h;
    separate += h.scalar_value(m->sequence_loss(h, inst.source, inst.gold).total);
  }
  CHECK(batch == doctest::Approx(separate / 2).epsilon(1e-12));
}

TEST_CASE("loss terms are finite and non-negative") {
  auto m = testutil::toy_model<float>(8, 2);
  for (const auto& inst : make_instances(testutil::toy_corpus())) {
    Graph<float> g(false);
    const auto t = m->sequence_loss(g, inst.source, inst.gold);
    CHECK(std::isfinite(g.scalar_value(t.op)));
    CHECK(g.scalar_value(t.op) >= 0);
    CHECK(std::isfinite(g.scalar_value(t.word)));
    CHECK(g.scalar_value(t.word) >= 0);
  }
}

TEST_CASE("teacher-forced accuracies count every gold step") {
  auto m = testutil::toy_model<float>(8, 2);
  const auto data = make_instances(testutil::toy_corpus());
  const EvalResult r = evaluate(*m, std::span<const Instance>(data));
  CHECK(r.loss > 0);
  CHECK(r.op_accuracy >= 0);
  CHECK(r.op_accuracy <= 1);
  CHECK(r.unknown_words == 0);
}

TEST_CASE("training loss decreases over the first epochs and is reproducible") {
  const auto data = make_instances(testutil::toy_corpus());
  auto run = [&] {
    auto m = testutil::toy_model<float>(32, 7);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 5;
    cfg.patience = 5;
    cfg.lr = 5e-3;
    std::ostringstream log;
    TrainHooks hooks;
    hooks.log = &log;
    const TrainResult r = train(*m, std::span<const Instance>(data), {}, cfg, {}, hooks);
    std::vector<double> curve;
    for (const auto& e : r.history) curve.push_back(e.train_loss);
    return std::make_pair(curve, log.str());
  };
  const auto [curve, log] = run();
  REQUIRE(curve.size() == 5);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] < curve[i - 1]);
  // One tab-separated line per epoch with five fields.
  std::istringstream lines(log);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    ++count;
    CHECK(std::count(line.begin(), line.end(), '\t') == 4);
  }
  CHECK(count == 5);

  const auto again = run();
  CHECK(again.first == curve);
}

TEST_CASE("zero epochs writes only the initial checkpoint") {
  auto m = testutil::toy_model<float>(8, 1);
  const auto data = make_instances(testutil::toy_corpus());
  const auto path = std::filesystem::temp_directory_path() / "genparse_test_epoch0.ckpt";
  std::filesystem::remove(path);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto before = m->params()[0].value;
  const TrainResult r = train(*m, std::span<const Instance>(data), {}, cfg, path);
  CHECK(r.history.empty());
  CHECK(r.best_epoch == 0);
  REQUIRE(std::filesystem::exists(path));
  auto loaded = Model<float>::from_metadata(read_checkpoint_metadata(path));
  load_checkpoint(path, loaded->params());
  CHECK(std::equal(before.values().begin(), before.values().end(),
                   loaded->params()[0].value.values().begin()));
  std::filesystem::remove(path);
}

TEST_CASE("empty corpus and non-finite parameters abort") {
  auto m = testutil::toy_model<float>(8, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(*m, std::span<const Instance>(), {}, cfg), TrainingError);

  const auto data = make_instances(testutil::toy_corpus());
  const std::vector<Instance> dev(data.begin(), data.begin() + 2);
  auto bad = testutil::toy_model<float>(8, 1);
  // Parameters overflow after the first update.
  bad->params()[0].value[0] = 3e38f;
  cfg.lr = 1e38;
  CHECK_THROWS_AS(train(*bad, std::span<const Instance>(data), std::span<const Instance>(dev), cfg),
                  Error);
}
