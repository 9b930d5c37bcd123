#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fixtures.hpp"
#include "constprobe/probe.hpp"

using namespace constprobe;

namespace {

struct Problem {
  Eigen::MatrixXd w, x;
  Eigen::VectorXd b;
  std::vector<int> y;
};

Problem random_problem(std::uint64_t seed, int rows = 5, int features = 4, int classes = 3) {
  Rng rng(seed);
  Problem p;
  p.w.resize(classes, features);
  p.x.resize(rows, features);
  p.b.resize(classes);
  for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < p.x.size(); ++i) p.x.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b.data()[i] = rng.normal();
  for (int r = 0; r < rows; ++r) p.y.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(classes))));
  return p;
}

struct Planted {
  std::vector<ConstTree> corpus;
  SynthResult synth;
  Dataset data;
};

Planted planted_chunks() {
  Planted p;
  p.corpus = read_const_treebank(fixtures::data_path("nonce2k.mrg"));
  SynthOptions o;
  o.width = 16;
  o.layer_count = 3;
  o.mode = SynthMode::kStructured;
  o.seed = 21;
  for (const auto& t : p.corpus) o.planted_labels.push_back(chunk_labels(t));
  p.synth = synth_container(p.corpus, o);
  p.data = build_chunk_dataset(p.corpus, {});
  return p;
}

bool same_model(const ProbeModel& a, const ProbeModel& b) {
  return a.weights.size() == b.weights.size() &&
         std::memcmp(a.weights.data(), b.weights.data(), sizeof(float) * static_cast<std::size_t>(a.weights.size())) == 0 &&
         std::memcmp(a.bias.data(), b.bias.data(), sizeof(float) * static_cast<std::size_t>(a.bias.size())) == 0;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.l1 = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("analytic gradients agree with finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = random_problem(seed);
    CHECK(gradient_check(p.w, p.b, p.x, p.y, 0.0, 0.0) < 1e-4);
    CHECK(gradient_check(p.w, p.b, p.x, p.y, 0.01, 0.02) < 1e-4);
  }
}

TEST_CASE("bias gradient at zero weights is the class-frequency residual") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, -1, 0, 0, 1, 0, -1;
  const std::vector<int> y = {0, 0, 1, 2};
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  const auto loss = probe_loss(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3), x, y, 0, 0, &gw, &gb);
  CHECK(loss.data == doctest::Approx(std::log(3.0)));
  CHECK(gb(0) == doctest::Approx(1.0 / 3 - 0.5));
  CHECK(gb(1) == doctest::Approx(1.0 / 3 - 0.25));
  CHECK(gb(2) == doctest::Approx(1.0 / 3 - 0.25));
}

TEST_CASE("the quadratic penalty shifts the gradient by 2 l2 W") {
  const auto p = random_problem(4);
  Eigen::MatrixXd g0, g1;
  probe_loss(p.w, p.b, p.x, p.y, 0, 0, &g0);
  probe_loss(p.w, p.b, p.x, p.y, 0, 0.3, &g1);
  CHECK(((g1 - g0) - 0.6 * p.w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("penalty grows with the regularization weights") {
  const auto p = random_problem(6);
  double last = -1;
  for (double l : {0.0, 0.001, 0.01, 0.1, 1.0}) {
    const auto a = probe_loss(p.w, p.b, p.x, p.y, l, 0.001);
    const auto b = probe_loss(p.w, p.b, p.x, p.y, 0.001, l);
    CHECK(a.penalty >= last);
    CHECK(b.penalty >= 0);
    last = a.penalty;
  }
}

TEST_CASE("argmax ignores a constant shift of all scores") {
  ProbeModel m;
  m.weights = Eigen::MatrixXf::Random(4, 3);
  m.bias = Eigen::VectorXf::Random(4);
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x = {rng.normal(), rng.normal(), rng.normal()};
    const auto before = m.predict(x);
    auto shifted = m;
    shifted.bias.array() += 7.5f;
    CHECK(shifted.predict(x) == before);
  }
}

TEST_CASE("two points, one feature: decision sign follows the data") {
  Eigen::MatrixXd x(2, 1);
  x << -1.0, 1.0;
  TrainConfig c;
  c.l1 = c.l2 = 0;
  c.epochs = 200;
  c.learning_rate = 0.05;
  const auto m = train_matrix(x, {"neg", "pos"}, c);
  // The logistic solution separates the points with the boundary at 0.
  const double slope = m.weights(1, 0) - m.weights(0, 0);
  CHECK(slope > 0);
  const std::vector<double> left = {-1.0}, right = {1.0};
  CHECK(m.classes[m.predict(left)] == "neg");
  CHECK(m.classes[m.predict(right)] == "pos");
  const auto flipped = train_matrix(x, {"pos", "neg"}, c);
  CHECK(flipped.weights(1, 0) - flipped.weights(0, 0) < 0);
}

TEST_CASE("heavy L1 drives weights to zero") {
  Rng rng(3);
  Eigen::MatrixXd x(400, 30);
  std::vector<std::string> y;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) x(r, k) = rng.normal();
    y.push_back(x(r, 0) > 0 ? "a" : "b");
  }
  TrainConfig c;
  c.l1 = 10;
  c.epochs = 50;
  c.batch_size = 64;
  const auto m = train_matrix(x, y, c);
  std::size_t small = 0;
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) small += std::abs(m.weights.data()[i]) < 1e-3f;
  CHECK(static_cast<double>(small) >= 0.9 * static_cast<double>(m.weights.size()));
}

TEST_CASE("training errors") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 2);
  CHECK_THROWS_WITH_AS(train_matrix(x, {"a", "a", "a"}, {}), doctest::Contains("two classes"), DataError);
  x(1, 1) = std::nan("");
  CHECK_THROWS_WITH_AS(train_matrix(x, {"a", "b", "a"}, {}), doctest::Contains("non-finite loss"), DataError);
  CHECK_THROWS_AS(train_matrix(x, {"a"}, {}), std::invalid_argument);
}

TEST_CASE("planted signal is learned, control labels are not") {
  auto p = planted_chunks();
  const auto model = train(p.data, p.synth.container, {}, {});
  const auto report = evaluate(model, p.data, p.synth.container);
  CHECK(report.accuracy() >= 0.99);
  CHECK(model.loss_history.size() == 10);
  CHECK(model.loss_history.back() < model.loss_history.front());

  auto [mapping, control] = make_control(p.data, p.corpus, 5);
  const auto cmodel = train(control, p.synth.container, {}, {});
  const auto creport = evaluate(cmodel, control, p.synth.container);
  CHECK(selectivity(report, creport) > 0.20);
  CHECK(selectivity(report, creport) == doctest::Approx(report.accuracy() - creport.accuracy()).epsilon(1e-12));
  CHECK(selectivity(report, report) == 0.0);
}

TEST_CASE("training is bit-reproducible and thread-count independent") {
  auto p = planted_chunks();
  TrainConfig c;
  c.epochs = 2;
  set_default_threads(1);
  const auto a = train(p.data, p.synth.container, {}, c);
  set_default_threads(4);
  const auto b = train(p.data, p.synth.container, {}, c);
  set_default_threads(1);
  CHECK(same_model(a, b));
  c.seed = 2;
  CHECK(!same_model(a, train(p.data, p.synth.container, {}, c)));

  const auto dir = fixtures::scratch_dir("probe_io");
  const auto dir_b = fixtures::scratch_dir("probe_io_b");
  a.save(dir + "/a.json");
  b.save(dir_b + "/a.json");
  CHECK(fixtures::read_file(dir + "/a.json") == fixtures::read_file(dir_b + "/a.json"));
  CHECK(fixtures::read_file(dir + "/a.json.bin") == fixtures::read_file(dir_b + "/a.json.bin"));
  const auto back = ProbeModel::load(dir + "/a.json");
  CHECK(same_model(a, back));
  CHECK(back.classes == a.classes);
  CHECK(back.task == TaskKind::kChunkSimple);
  CHECK(back.config.epochs == 2);
  CHECK(back.data_hash == a.data_hash);
  CHECK(fixtures::read_file(dir + "/a.json.bin").size() == 4u * static_cast<std::size_t>(a.weights.size() + a.bias.size()));
}

TEST_CASE("reports") {
  // six instances, three classes, hand-tallied
  const std::vector<std::string> classes = {"A", "B", "C"};
  const std::vector<std::string> gold = {"A", "A", "B", "B", "C", "C"};
  const std::vector<std::size_t> pred = {0, 1, 1, 1, 0, 2};
  const auto r = make_report(classes, gold, pred, {1, 2, 1, 2, 1, 3});
  CHECK(r.accuracy() == doctest::Approx(4.0 / 6));
  CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{1, 1, 0}, {0, 2, 0}, {1, 0, 1}});
  CHECK(r.precision[0] == doctest::Approx(0.5));
  CHECK(r.recall[1] == doctest::Approx(1.0));
  CHECK(r.precision[1] == doctest::Approx(2.0 / 3));
  CHECK(r.by_distance.at(1) == std::make_pair<std::size_t, std::size_t>(2, 3));
  CHECK(r.by_distance.at(3) == std::make_pair<std::size_t, std::size_t>(1, 1));
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t row = 0;
    for (auto v : r.confusion[c]) row += v;
    CHECK(row == 2);
  }
  CHECK(r.to_json().find("\"accuracy\"") != std::string::npos);
  CHECK(r.to_text().find("accuracy  66.67%") == 0);

  // unseen gold labels count as errors
  const auto u = make_report({"A"}, {"A", "Z"}, {0, 0});
  CHECK(u.classes == std::vector<std::string>{"A", "Z"});
  CHECK(u.accuracy() == 0.5);

  // constant majority predictor
  std::vector<std::string> g(10, "x");
  for (int k = 0; k < 3; ++k) g[static_cast<std::size_t>(k)] = "y";
  CHECK(make_report({"x", "y"}, g, std::vector<std::size_t>(10, 0)).accuracy() == doctest::Approx(0.7));
}

TEST_CASE("evaluation of an exact model is perfect") {
  // one feature per class, the gold class feature switched on
  ContainerManifest m;
  m.layer_count = 1;
  m.width = 2;
  m.sentences = {{"0", 4, "", ""}};
  auto c = ActivationContainer::from_matrices(m, {{1, 0, 0, 1, 0, 1, 1, 0}});
  ProbeModel model;
  model.classes = {"a", "b"};
  model.weights = Eigen::MatrixXf::Identity(2, 2);
  model.bias = Eigen::VectorXf::Zero(2);
  Dataset ds;
  ds.instances = {{0, 0, 0, "a"}, {0, 1, 1, "b"}, {0, 2, 2, "b"}, {0, 3, 3, "a"}};
  const auto r = evaluate(model, ds, c);
  CHECK(r.accuracy() == 1.0);
  CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{2, 0}, {0, 2}});
  CHECK(predict_labels(model, ds.instances, c, false) == std::vector<std::string>{"a", "b", "b", "a"});

  Dataset other = ds;
  other.instances.pop_back();
  CHECK_THROWS_AS(selectivity(r, evaluate(model, other, c)), DataError);
}
