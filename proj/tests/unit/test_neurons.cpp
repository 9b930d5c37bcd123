#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "constprobe/neurons.hpp"

using namespace constprobe;

namespace {

ProbeModel model_from(const Eigen::MatrixXf& w) {
  ProbeModel m;
  m.weights = w;
  m.bias = Eigen::VectorXf::Zero(w.rows());
  for (Eigen::Index c = 0; c < w.rows(); ++c) m.classes.push_back("c" + std::to_string(c));
  return m;
}

// Brute force: score every neuron, then order by (score desc, index asc).
std::vector<int> sort_oracle(const Eigen::MatrixXf& w) {
  std::vector<std::pair<double, int>> keyed;
  for (Eigen::Index n = 0; n < w.cols(); ++n) {
    double best = 0;
    for (Eigen::Index c = 0; c < w.rows(); ++c) {
      double top = 0;
      for (Eigen::Index k = 0; k < w.cols(); ++k) top = std::max(top, std::abs(double(w(c, k))));
      if (top > 0) best = std::max(best, std::abs(double(w(c, n))) / top);
    }
    keyed.emplace_back(-best, static_cast<int>(n));
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> out;
  for (const auto& [s, n] : keyed) out.push_back(n);
  return out;
}

NeuronRanking ranking_of(std::vector<int> order) {
  NeuronRanking r;
  r.order = std::move(order);
  r.scores.assign(r.order.size(), 0.0);
  return r;
}

}  // namespace

TEST_CASE("single nonzero weight ranks first") {
  Eigen::MatrixXf w = Eigen::MatrixXf::Zero(2, 5);
  w(1, 3) = -0.2f;
  const auto r = rank_neurons(model_from(w));
  CHECK(r.order.front() == 3);
  CHECK(r.zero_rows == 1);
  CHECK(r.scores[3] == 1.0);
}

TEST_CASE("max over classes keeps each class's salient neuron on top") {
  Eigen::MatrixXf w(2, 4);
  w << 5, 0.1f, 0.2f, 0, 0, 0.01f, 0, 0.03f;
  const auto r = rank_neurons(model_from(w));
  const std::set<int> top2(r.order.begin(), r.order.begin() + 2);
  CHECK(top2 == std::set<int>{0, 3});
  CHECK(r.class_order[1].front() == 3);
}

TEST_CASE("ranking equals a brute-force sort") {
  Rng rng(12);
  for (int k = 0; k < 50; ++k) {
    Eigen::MatrixXf w(4, 20);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.normal());
    if (k % 5 == 0) w(2, 7) = w(2, 3) = w.row(2).cwiseAbs().maxCoeff() * 2;  // a tie
    const auto r = rank_neurons(model_from(w));
    CHECK(r.order == sort_oracle(w));
    for (double s : r.scores) CHECK((s >= 0 && s <= 1));
  }
}

TEST_CASE("per-class saliency is scale-invariant") {
  Rng rng(2);
  Eigen::MatrixXf w(3, 10);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.normal());
  const auto a = rank_neurons(model_from(w));
  w.row(1) *= 4.0f;
  const auto b = rank_neurons(model_from(w));
  CHECK(a.class_order == b.class_order);
  CHECK(a.order == b.order);
}

TEST_CASE("subset selection") {
  std::vector<int> order(100);
  std::iota(order.rbegin(), order.rend(), 0);  // 99, 98, ..., 0
  const auto r = ranking_of(order);
  const auto top = select_subset(r, SubsetMode::kTop, 0.1);
  CHECK(top == std::vector<int>{90, 91, 92, 93, 94, 95, 96, 97, 98, 99});
  CHECK(select_subset(r, SubsetMode::kBottom, 0.03) == std::vector<int>{0, 1, 2});
  std::vector<int> all(100);
  std::iota(all.begin(), all.end(), 0);
  for (auto m : {SubsetMode::kTop, SubsetMode::kBottom, SubsetMode::kRandom}) CHECK(select_subset(r, m, 1.0) == all);
  CHECK(select_subset(r, SubsetMode::kRandom, 0.1, 7) == select_subset(r, SubsetMode::kRandom, 0.1, 7));
  CHECK(select_subset(r, SubsetMode::kRandom, 0.1, 7).size() == 10);
  CHECK(subset_size(0.3, 10) == 3);  // no float overshoot to 4
  CHECK(subset_size(0.01, 150) == 2);
  CHECK_THROWS_AS(select_subset(r, SubsetMode::kTop, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(select_subset(r, SubsetMode::kTop, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(parse_subset_mode("middle"), std::invalid_argument);

  // top f and bottom 1-f partition the features
  auto t = select_subset(r, SubsetMode::kTop, 0.37);
  auto b = select_subset(r, SubsetMode::kBottom, 0.63);
  std::vector<int> both;
  std::set_union(t.begin(), t.end(), b.begin(), b.end(), std::back_inserter(both));
  CHECK(both == all);
  CHECK(t.size() + b.size() == 100);
}

TEST_CASE("ranking overlap") {
  std::vector<int> order(10);
  std::iota(order.begin(), order.end(), 0);
  const auto a = ranking_of(order);
  auto rev = order;
  std::reverse(rev.begin(), rev.end());
  const auto b = ranking_of(rev);
  for (double f : {0.1, 0.25, 0.5, 0.9, 1.0}) CHECK(ranking_overlap(a, a, f) == 1.0);
  CHECK(ranking_overlap(a, b, 0.5) == 0.0);
  CHECK(ranking_overlap(a, b, 1.0) == 1.0);
  CHECK(ranking_overlap(a, b, 0.7) == ranking_overlap(b, a, 0.7));
  CHECK_THROWS_AS(ranking_overlap(a, ranking_of({0, 1}), 0.5), std::invalid_argument);
}

TEST_CASE("layer spread") {
  const std::vector<int> layers = {0, 0, 1, 1};
  CHECK(layer_spread(ranking_of({2, 3, 0, 1}), 0.5, layers, 2) == std::vector<std::size_t>{0, 2});
  CHECK(layer_spread(ranking_of({0, 2, 1, 3}), 0.5, layers, 2) == std::vector<std::size_t>{1, 1});
  NeuronRanking r = ranking_of({0, 1, 2, 3});
  r.class_order = {{3, 2, 1, 0}};
  CHECK(layer_spread(r, 0.5, layers, 2, 0) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("planted layer dominates the spread; a full subset changes nothing") {
  const auto corpus = read_const_treebank(fixtures::data_path("nonce2k.mrg"));
  SynthOptions o;
  o.width = 16;
  o.layer_count = 4;
  o.mode = SynthMode::kStructured;
  o.signal_layers = {2};
  o.seed = 3;
  for (const auto& t : corpus) o.planted_labels.push_back(chunk_labels(t));
  const auto synth = synth_container(corpus, o);
  const auto data = build_chunk_dataset(corpus, {});
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 64;
  const auto model = train(data, synth.container, {}, c);
  const auto ranking = rank_neurons(model);
  const FeatureExtractor fx(synth.container, {}, false);
  const auto spread = layer_spread(ranking, 0.1, fx.feature_layers(), 4);
  const auto total = std::accumulate(spread.begin(), spread.end(), std::size_t{0});
  CHECK(static_cast<double>(spread[2]) >= 0.9 * static_cast<double>(total));

  FeatureDescriptor subset;
  subset.neurons = select_subset(ranking, SubsetMode::kTop, 1.0);
  const auto full_acc = evaluate(model, data, synth.container).accuracy();
  const auto sub_model = train(data, synth.container, subset, c);
  CHECK(evaluate(sub_model, data, synth.container).accuracy() == full_acc);

  FeatureDescriptor top;
  top.neurons = select_subset(ranking, SubsetMode::kTop, 0.25);
  const auto top_acc = evaluate(train(data, synth.container, top, c), data, synth.container).accuracy();
  FeatureDescriptor bottom;
  bottom.neurons = select_subset(ranking, SubsetMode::kBottom, 0.25);
  const auto bottom_acc = evaluate(train(data, synth.container, bottom, c), data, synth.container).accuracy();
  CHECK(top_acc > bottom_acc);
}

TEST_CASE("ranking json round trip") {
  Eigen::MatrixXf w(2, 3);
  w << 1, 2, 3, 3, 1, 0;
  const auto r = rank_neurons(model_from(w));
  const auto back = NeuronRanking::from_json(r.to_json());
  CHECK(back.order == r.order);
  CHECK(back.scores == r.scores);
  CHECK(back.class_order == r.class_order);
  CHECK(back.classes == r.classes);
}
