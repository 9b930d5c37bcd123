#include "constprobe/nonce.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "constprobe/common.hpp"

namespace constprobe {

DepContext dep_context(const DepSentence& sentence, int index) {
  const auto i = static_cast<std::size_t>(index);
  DepContext ctx{sentence.tokens.at(i).pos, sentence.deprels.at(i), {}};
  for (std::size_t k = 0; k < sentence.heads.size(); ++k) {
    if (sentence.heads[k] == index + 1) ctx.dep_rels.push_back(sentence.deprels[k]);
  }
  std::sort(ctx.dep_rels.begin(), ctx.dep_rels.end());
  return ctx;
}

std::size_t ReplacementPool::Entry::count(const std::string& form) const {
  const auto it = std::lower_bound(types.begin(), types.end(), form);
  if (it == types.end() || *it != form) return 0;
  const auto k = static_cast<std::size_t>(it - types.begin());
  return cumulative[k] - (k == 0 ? 0 : cumulative[k - 1]);
}

void ReplacementPool::add(const DepContext& context, const std::string& form) { ++counts_[context][form]; }

void ReplacementPool::finalize() {
  entries_.clear();
  for (const auto& [ctx, forms] : counts_) {
    Entry e;
    std::size_t total = 0;
    for (const auto& [form, n] : forms) {
      e.types.push_back(form);
      total += n;
      e.cumulative.push_back(total);
    }
    entries_.emplace(ctx, std::move(e));
  }
}

const ReplacementPool::Entry* ReplacementPool::find(const DepContext& context) const {
  const auto it = entries_.find(context);
  return it == entries_.end() ? nullptr : &it->second;
}

ReplacementPool build_pool(const std::vector<DepSentence>& corpus) {
  ReplacementPool pool;
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) pool.add(dep_context(s, static_cast<int>(i)), s.tokens[i].form);
  }
  pool.finalize();
  return pool;
}

namespace {

// Draws a form different from `own`, or returns nullptr if there is none.
const std::string* draw_alternative(const ReplacementPool::Entry& entry, const std::string& own, PoolSampling mode,
                                    Rng& rng) {
  const auto own_it = std::lower_bound(entry.types.begin(), entry.types.end(), own);
  const bool has_own = own_it != entry.types.end() && *own_it == own;
  const std::size_t own_k = static_cast<std::size_t>(own_it - entry.types.begin());

  if (mode == PoolSampling::kType) {
    const std::size_t n = entry.types.size() - (has_own ? 1 : 0);
    if (n == 0) return nullptr;
    std::size_t k = rng.index(n);
    if (has_own && k >= own_k) ++k;
    return &entry.types[k];
  }

  const std::size_t own_count = has_own ? entry.count(own) : 0;
  const std::size_t n = entry.occurrences() - own_count;
  if (n == 0) return nullptr;
  std::size_t r = rng.index(n);
  // Map r onto the occurrence line with the own form's block cut out.
  if (has_own) {
    const std::size_t own_begin = own_k == 0 ? 0 : entry.cumulative[own_k - 1];
    if (r >= own_begin) r += own_count;
  }
  const auto it = std::upper_bound(entry.cumulative.begin(), entry.cumulative.end(), r);
  return &entry.types[static_cast<std::size_t>(it - entry.cumulative.begin())];
}

}  // namespace

CorruptionResult corrupt(const std::vector<ConstTree>& trees, const std::vector<DepSentence>& deps,
                         const ReplacementPool& pool, const CorruptOptions& options) {
  if (!(options.fraction >= 0.0 && options.fraction <= 1.0))
    throw std::invalid_argument("corruption fraction must lie in [0, 1]");
  if (trees.size() != deps.size())
    throw DataError("alignment error: " + std::to_string(trees.size()) + " trees vs " + std::to_string(deps.size()) +
                    " dependency sentences");

  CorruptionResult out{trees, deps, {}, 0, 0};
  std::vector<std::vector<int>> overt(trees.size());
  struct Position {
    std::size_t sentence;
    int index;
  };
  std::vector<Position> positions;
  for (std::size_t s = 0; s < trees.size(); ++s) {
    overt[s] = overt_tokens(trees[s]);
    const auto& dep = deps[s];
    bool aligned = overt[s].size() == dep.tokens.size();
    for (std::size_t k = 0; aligned && k < overt[s].size(); ++k)
      aligned = trees[s].tokens[static_cast<std::size_t>(overt[s][k])].form == dep.tokens[k].form;
    if (!aligned) throw DataError("alignment error in sentence " + trees[s].sentence_id);
    for (std::size_t k = 0; k < dep.tokens.size(); ++k) positions.push_back({s, static_cast<int>(k)});
  }

  out.total_tokens = positions.size();
  out.target = static_cast<std::size_t>(options.fraction * static_cast<double>(out.total_tokens) + 1e-9);

  Rng rng(options.seed);
  struct Pick {
    Position at;
    std::string form;
  };
  std::vector<Pick> picks;
  // Lazy Fisher-Yates: candidates are drawn one at a time until the quota is met.
  for (std::size_t k = 0; k < positions.size() && picks.size() < out.target; ++k) {
    std::swap(positions[k], positions[k + rng.index(positions.size() - k)]);
    const auto [s, i] = positions[k];
    const auto& dep = deps[s];
    const auto* entry = pool.find(dep_context(dep, i));
    if (!entry) continue;
    const std::string* form = draw_alternative(*entry, dep.tokens[static_cast<std::size_t>(i)].form, options.sampling, rng);
    if (!form) continue;
    picks.push_back({positions[k], *form});
  }

  std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
    return a.at.sentence != b.at.sentence ? a.at.sentence < b.at.sentence : a.at.index < b.at.index;
  });
  for (const auto& p : picks) {
    const auto s = p.at.sentence;
    const auto k = static_cast<std::size_t>(p.at.index);
    out.log.push_back({trees[s].sentence_id, p.at.index, deps[s].tokens[k].form, p.form});
    out.deps[s].tokens[k].form = p.form;
    out.trees[s].tokens[static_cast<std::size_t>(overt[s][k])].form = p.form;
  }
  return out;
}

void write_replacement_log(const std::string& path, const CorruptionResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "# total_tokens=" << result.total_tokens << " target=" << result.target << " replaced=" << result.log.size()
      << " achieved_fraction=" << std::fixed << std::setprecision(6) << result.achieved_fraction() << '\n';
  for (const auto& r : result.log)
    out << r.sentence_id << '\t' << r.token_index << '\t' << r.old_form << '\t' << r.new_form << '\n';
}

}  // namespace constprobe
