#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "constprobe/common.hpp"
#include "constprobe/treebank.hpp"

namespace constprobe {

enum class TaskKind { kLca, kChunkSimple, kChunkDetailed, kSeqLca, kSeqDepth, kSeqUnary };

std::string task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);
/// Pair tasks combine the representations of tokens i and j.
bool is_pair_task(TaskKind kind);

/// One labeled example. `sentence` is the position of the sentence in the
/// corpus the dataset was built from; token tasks have i == j.
struct Instance {
  std::size_t sentence = 0;
  int i = 0;
  int j = 0;
  std::string label;

  bool operator==(const Instance&) const = default;
};

struct Dataset {
  TaskKind kind = TaskKind::kChunkSimple;
  std::vector<Instance> instances;
  std::uint64_t corpus_hash = 0;
  std::uint64_t seed = 0;
  bool control = false;

  /// Sorted distinct labels.
  std::vector<std::string> alphabet() const;
  std::size_t size() const { return instances.size(); }
  /// Hash over instance positions only (labels excluded), used to check that
  /// two reports were computed on the same instances.
  std::uint64_t positions_hash() const;
  std::uint64_t content_hash() const;
};

std::uint64_t corpus_hash(const std::vector<ConstTree>& corpus);

void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);

struct SampledDataset {
  Dataset dataset;
  std::vector<std::string> labels;  // sorted, labels with nonzero supply
  std::vector<std::size_t> supply;
  std::vector<double> original_frequencies;
  std::vector<double> target_frequencies;
  std::vector<std::size_t> counts;
  std::vector<double> achieved_frequencies;
};

/// f_s(y) = (f(y) + 1/|Y|) / 2 over the labels with nonzero supply.
std::vector<double> smoothed_frequencies(const std::vector<std::size_t>& supply);

/// Per-label sample sizes: n * f_s(y), with labels whose supply falls short
/// contributing everything they have and the shortfall redistributed
/// proportionally among the rest until nothing saturates. Fractional parts
/// go to the largest remainders (lower index first on ties).
std::vector<std::size_t> allocate_sample(const std::vector<std::size_t>& supply, std::size_t n);

struct LcaSampleOptions {
  std::size_t count = 100000;
  std::uint64_t seed = 1;
  bool include_diagonal = true;
};

SampledDataset sample_lca(const std::vector<ConstTree>& corpus, const LcaSampleOptions& options);

struct ChunkOptions {
  bool detailed = false;
  std::size_t max_sentences = 0;  // 0 = all
  bool drop_punct = true;         // only relevant when punctuation was kept
};

Dataset build_chunk_dataset(const std::vector<ConstTree>& corpus, const ChunkOptions& options);

/// Datasets for the three tree-encoding labels (pair ancestor label, depth
/// code, unary label). Trees are canonicalized first; the final token of
/// each sentence is excluded from the first two.
std::array<Dataset, 3> build_seq_datasets(const std::vector<ConstTree>& corpus);

struct LcaEvalOptions {
  std::size_t max_sentences = 200;
  std::size_t max_length = 20;
};

/// All pairs i <= j of the first qualifying sentences. `shortfall` is set
/// when fewer than max_sentences qualify.
Dataset build_lca_eval(const std::vector<ConstTree>& corpus, const LcaEvalOptions& options = {},
                       bool* shortfall = nullptr);

/// Control task: each word type (token tasks) or ordered word-type pair
/// (pair tasks) gets a label drawn once from the training class distribution.
class ControlMapping {
 public:
  ControlMapping(const Dataset& train, const std::vector<ConstTree>& corpus, std::uint64_t seed);

  /// Relabels through the mapping; unseen keys draw from the same stream.
  Dataset relabel(const Dataset& dataset, const std::vector<ConstTree>& corpus);

  const std::map<std::string, std::string>& mapping() const { return mapping_; }
  const std::vector<double>& distribution() const { return distribution_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::string key(const Instance& inst, const std::vector<ConstTree>& corpus) const;
  const std::string& lookup(const std::string& key);

  TaskKind kind_;
  std::uint64_t seed_;
  Rng rng_;
  std::vector<double> distribution_;
  std::vector<double> cumulative_;
  std::map<std::string, std::string> mapping_;
};

/// Builds the mapping on `train` and returns it with the relabeled training set.
std::pair<ControlMapping, Dataset> make_control(const Dataset& train, const std::vector<ConstTree>& corpus,
                                                std::uint64_t seed);

}  // namespace constprobe
