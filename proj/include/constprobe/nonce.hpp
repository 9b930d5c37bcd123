#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "constprobe/treebank.hpp"

namespace constprobe {

/// Syntactic slot of a token: its POS, its relation to the head and the
/// sorted multiset of relations of its dependents.
struct DepContext {
  std::string pos;
  std::string head_rel;
  std::vector<std::string> dep_rels;

  auto operator<=>(const DepContext&) const = default;
};

DepContext dep_context(const DepSentence& sentence, int index);

/// How a replacement form is drawn from the candidates of a context.
enum class PoolSampling { kOccurrence, kType };

class ReplacementPool {
 public:
  struct Entry {
    std::vector<std::string> types;      // sorted
    std::vector<std::size_t> cumulative;  // cumulative occurrence counts, parallel to types
    std::size_t occurrences() const { return cumulative.empty() ? 0 : cumulative.back(); }
    std::size_t count(const std::string& form) const;
  };

  void add(const DepContext& context, const std::string& form);
  void finalize();

  const Entry* find(const DepContext& context) const;
  std::size_t signature_count() const { return entries_.size(); }
  const std::map<DepContext, Entry>& entries() const { return entries_; }

 private:
  std::map<DepContext, std::map<std::string, std::size_t>> counts_;
  std::map<DepContext, Entry> entries_;
};

ReplacementPool build_pool(const std::vector<DepSentence>& corpus);

struct Replacement {
  std::string sentence_id;
  int token_index = 0;  // position among the overt (non-null) tokens
  std::string old_form;
  std::string new_form;
};

struct CorruptionResult {
  std::vector<ConstTree> trees;
  std::vector<DepSentence> deps;
  std::vector<Replacement> log;
  std::size_t total_tokens = 0;
  std::size_t target = 0;
  double achieved_fraction() const {
    return total_tokens == 0 ? 0.0 : static_cast<double>(log.size()) / static_cast<double>(total_tokens);
  }
};

struct CorruptOptions {
  double fraction = 1.0 / 3.0;
  std::uint64_t seed = 1;
  PoolSampling sampling = PoolSampling::kOccurrence;
};

/// Replaces floor(fraction * N) randomly chosen tokens by forms seen in the
/// same dependency context of `pool`. Constituency trees may still contain
/// null elements; those are skipped when aligning with the dependency side.
CorruptionResult corrupt(const std::vector<ConstTree>& trees, const std::vector<DepSentence>& deps,
                         const ReplacementPool& pool, const CorruptOptions& options);

void write_replacement_log(const std::string& path, const CorruptionResult& result);

}  // namespace constprobe
