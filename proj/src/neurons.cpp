#include "constprobe/neurons.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "constprobe/common.hpp"

namespace constprobe {

using nlohmann::json;

namespace {

std::vector<int> descending(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

NeuronRanking rank_neurons(const ProbeModel& model) {
  NeuronRanking r;
  const auto features = static_cast<std::size_t>(model.weights.cols());
  r.scores.assign(features, 0.0);
  r.classes = model.classes;
  r.descriptor_json = model.descriptor.to_json();
  for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
    const double top = static_cast<double>(model.weights.row(c).cwiseAbs().maxCoeff());
    std::vector<double> s(features, 0.0);
    if (top > 0) {
      for (std::size_t n = 0; n < features; ++n)
        s[n] = std::abs(static_cast<double>(model.weights(c, static_cast<Eigen::Index>(n)))) / top;
    } else {
      ++r.zero_rows;
    }
    for (std::size_t n = 0; n < features; ++n) r.scores[n] = std::max(r.scores[n], s[n]);
    r.class_order.push_back(descending(s));
  }
  r.order = descending(r.scores);
  return r;
}

std::string NeuronRanking::to_json() const {
  json j;
  j["classes"] = classes;
  j["scores"] = scores;
  j["order"] = order;
  j["class_order"] = class_order;
  j["descriptor"] = json::parse(descriptor_json.empty() ? "{}" : descriptor_json);
  return j.dump(1);
}

NeuronRanking NeuronRanking::from_json(const std::string& text) {
  const json j = json::parse(text);
  NeuronRanking r;
  r.classes = j.at("classes").get<std::vector<std::string>>();
  r.scores = j.at("scores").get<std::vector<double>>();
  r.order = j.at("order").get<std::vector<int>>();
  r.class_order = j.at("class_order").get<std::vector<std::vector<int>>>();
  r.descriptor_json = j.value("descriptor", json::object()).dump();
  return r;
}

SubsetMode parse_subset_mode(const std::string& name) {
  if (name == "top") return SubsetMode::kTop;
  if (name == "bottom") return SubsetMode::kBottom;
  if (name == "random") return SubsetMode::kRandom;
  throw std::invalid_argument("unknown subset mode '" + name + "'");
}

std::size_t subset_size(double fraction, std::size_t total) {
  const double exact = fraction * static_cast<double>(total);
  return std::min(total, static_cast<std::size_t>(std::ceil(exact - 1e-9)));
}

std::vector<int> select_subset(const NeuronRanking& ranking, SubsetMode mode, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subset fraction must lie in (0, 1]");
  const std::size_t d = ranking.size();
  const std::size_t k = subset_size(fraction, d);
  if (k == 0) throw std::invalid_argument("empty neuron selection");
  std::vector<int> out;
  switch (mode) {
    case SubsetMode::kTop:
      out.assign(ranking.order.begin(), ranking.order.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    case SubsetMode::kBottom:
      out.assign(ranking.order.end() - static_cast<std::ptrdiff_t>(k), ranking.order.end());
      break;
    case SubsetMode::kRandom: {
      std::vector<int> all(d);
      std::iota(all.begin(), all.end(), 0);
      Rng rng(seed);
      for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.index(d - i)]);
      out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> layer_spread(const NeuronRanking& ranking, double top_fraction,
                                      const std::vector<int>& feature_layers, int layer_count,
                                      std::optional<std::size_t> class_index) {
  if (feature_layers.size() != ranking.size()) throw std::invalid_argument("layer_spread: feature map size mismatch");
  const auto& order = class_index ? ranking.class_order.at(*class_index) : ranking.order;
  const std::size_t k = subset_size(top_fraction, order.size());
  std::vector<std::size_t> counts(static_cast<std::size_t>(layer_count), 0);
  for (std::size_t i = 0; i < k; ++i) ++counts.at(static_cast<std::size_t>(feature_layers[static_cast<std::size_t>(order[i])]));
  return counts;
}

double ranking_overlap(const NeuronRanking& a, const NeuronRanking& b, double fraction) {
  if (a.size() != b.size()) throw std::invalid_argument("ranking_overlap: feature spaces differ");
  const std::size_t k = subset_size(fraction, a.size());
  if (k == 0) throw std::invalid_argument("ranking_overlap: empty prefix");
  std::vector<int> ta(a.order.begin(), a.order.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<int> tb(b.order.begin(), b.order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  std::vector<int> shared;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(shared));
  return static_cast<double>(shared.size()) / static_cast<double>(k);
}

}  // namespace constprobe
