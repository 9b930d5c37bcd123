#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "constprobe/probe.hpp"

namespace constprobe {

/// Saliency of probe input features. Per class c, s_c(n) = |W[c,n]| / max |W[c,.]|;
/// the overall score of n is the maximum of s_c(n) over classes.
struct NeuronRanking {
  std::vector<double> scores;                // per feature
  std::vector<int> order;                    // descending score, ties by lower index
  std::vector<std::vector<int>> class_order;  // per class, same ordering rule on s_c
  std::vector<std::string> classes;
  std::string descriptor_json;
  std::size_t zero_rows = 0;  // classes whose weight row is all zero

  std::size_t size() const { return scores.size(); }
  std::string to_json() const;
  static NeuronRanking from_json(const std::string& text);
};

NeuronRanking rank_neurons(const ProbeModel& model);

enum class SubsetMode { kTop, kBottom, kRandom };
SubsetMode parse_subset_mode(const std::string& name);

/// ceil(fraction * D), guarded against floating noise.
std::size_t subset_size(double fraction, std::size_t total);

/// Sorted feature indices: ranking prefix (top), suffix (bottom) or a seeded
/// uniform sample (random).
std::vector<int> select_subset(const NeuronRanking& ranking, SubsetMode mode, double fraction, std::uint64_t seed = 1);

/// Counts of the top ranked features per source layer. `feature_layers`
/// maps each feature to its layer (see FeatureExtractor::feature_layers).
/// With `class_index`, that class's own ranking is used.
std::vector<std::size_t> layer_spread(const NeuronRanking& ranking, double top_fraction,
                                      const std::vector<int>& feature_layers, int layer_count,
                                      std::optional<std::size_t> class_index = std::nullopt);

/// |topA & topB| / |topA| for prefixes of size ceil(fraction * D).
double ranking_overlap(const NeuronRanking& a, const NeuronRanking& b, double fraction);

}  // namespace constprobe
