#include "constprobe/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "constprobe/codec.hpp"

namespace constprobe {

namespace {

const std::map<std::string, TaskKind>& task_names() {
  static const std::map<std::string, TaskKind> names = {
      {"lca", TaskKind::kLca},         {"chunk-simple", TaskKind::kChunkSimple},
      {"chunk-detailed", TaskKind::kChunkDetailed}, {"seq-lca", TaskKind::kSeqLca},
      {"seq-depth", TaskKind::kSeqDepth}, {"seq-unary", TaskKind::kSeqUnary},
  };
  return names;
}

}  // namespace

std::string task_name(TaskKind kind) {
  for (const auto& [name, k] : task_names())
    if (k == kind) return name;
  return "unknown";
}

TaskKind parse_task(const std::string& name) {
  const auto it = task_names().find(name);
  if (it == task_names().end()) throw std::invalid_argument("unknown task '" + name + "'");
  return it->second;
}

bool is_pair_task(TaskKind kind) {
  return kind == TaskKind::kLca || kind == TaskKind::kSeqLca || kind == TaskKind::kSeqDepth;
}

std::vector<std::string> Dataset::alphabet() const {
  std::vector<std::string> labels;
  for (const auto& inst : instances) labels.push_back(inst.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

std::uint64_t Dataset::positions_hash() const {
  Fnv1a h;
  for (const auto& inst : instances) {
    h.update_value(static_cast<std::uint64_t>(inst.sentence));
    h.update_value(inst.i);
    h.update_value(inst.j);
  }
  return h.digest();
}

std::uint64_t Dataset::content_hash() const {
  Fnv1a h;
  h.update(task_name(kind));
  for (const auto& inst : instances) {
    h.update_value(static_cast<std::uint64_t>(inst.sentence));
    h.update_value(inst.i);
    h.update_value(inst.j);
    h.update(inst.label);
    h.update("\n");
  }
  return h.digest();
}

std::uint64_t corpus_hash(const std::vector<ConstTree>& corpus) {
  Fnv1a h;
  for (const auto& t : corpus) {
    h.update(to_bracketed(t));
    h.update("\n");
  }
  return h.digest();
}

void write_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  nlohmann::ordered_json header;
  header["task"] = task_name(dataset.kind);
  header["labels"] = dataset.alphabet();
  header["corpus_hash"] = to_hex(dataset.corpus_hash);
  header["seed"] = dataset.seed;
  header["control"] = dataset.control;
  header["count"] = dataset.size();
  out << "# " << header.dump() << '\n';
  for (const auto& inst : dataset.instances)
    out << inst.sentence << '\t' << inst.i << '\t' << inst.j << '\t' << inst.label << '\n';
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw DataError(path + ": missing dataset header");
  Dataset ds;
  try {
    const auto header = nlohmann::json::parse(line.substr(2));
    ds.kind = parse_task(header.at("task").get<std::string>());
    ds.corpus_hash = std::stoull(header.at("corpus_hash").get<std::string>(), nullptr, 16);
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.control = header.value("control", false);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad dataset header: " + e.what());
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Instance inst;
    if (!(ss >> inst.sentence >> inst.i >> inst.j)) throw DataError(path + ": bad instance line: " + line);
    std::getline(ss >> std::ws, inst.label);
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

std::vector<double> smoothed_frequencies(const std::vector<std::size_t>& supply) {
  const double total = static_cast<double>(std::accumulate(supply.begin(), supply.end(), std::size_t{0}));
  const auto present = static_cast<double>(std::count_if(supply.begin(), supply.end(), [](auto s) { return s > 0; }));
  std::vector<double> fs(supply.size(), 0.0);
  if (total == 0) return fs;
  for (std::size_t y = 0; y < supply.size(); ++y) {
    if (supply[y] == 0) continue;
    fs[y] = (static_cast<double>(supply[y]) / total + 1.0 / present) * 0.5;
  }
  return fs;
}

std::vector<std::size_t> allocate_sample(const std::vector<std::size_t>& supply, std::size_t n) {
  const std::size_t total = std::accumulate(supply.begin(), supply.end(), std::size_t{0});
  if (n > total)
    throw DataError("requested sample of " + std::to_string(n) + " exceeds the available supply; maximum is " +
                    std::to_string(total));
  const auto fs = smoothed_frequencies(supply);
  std::vector<std::size_t> alloc(supply.size(), 0);
  std::vector<bool> active(supply.size());
  for (std::size_t y = 0; y < supply.size(); ++y) active[y] = supply[y] > 0;

  std::size_t remaining = n;
  for (;;) {
    double weight = 0.0;
    for (std::size_t y = 0; y < supply.size(); ++y)
      if (active[y]) weight += fs[y];
    if (weight == 0.0) break;
    bool saturated = false;
    std::size_t taken = 0;
    for (std::size_t y = 0; y < supply.size(); ++y) {
      if (!active[y]) continue;
      const double target = static_cast<double>(remaining) * fs[y] / weight;
      if (static_cast<double>(supply[y]) <= target) {
        alloc[y] = supply[y];
        taken += supply[y];
        active[y] = false;
        saturated = true;
      }
    }
    remaining -= taken;
    if (saturated) continue;

    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t y = 0; y < supply.size(); ++y) {
      if (!active[y]) continue;
      const double target = static_cast<double>(remaining) * fs[y] / weight;
      alloc[y] = static_cast<std::size_t>(std::floor(target));
      assigned += alloc[y];
      remainders.emplace_back(target - std::floor(target), y);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < remaining && k < remainders.size(); ++k, ++assigned)
      ++alloc[remainders[k].second];
    break;
  }
  return alloc;
}

SampledDataset sample_lca(const std::vector<ConstTree>& corpus, const LcaSampleOptions& options) {
  struct Pair {
    std::uint32_t sentence;
    std::uint16_t i;
    std::uint16_t j;
  };
  std::map<std::string, std::vector<Pair>> by_label;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const int n = static_cast<int>(corpus[s].size());
    for (int i = 0; i < n; ++i) {
      for (int j = options.include_diagonal ? i : i + 1; j < n; ++j) {
        by_label[lca_label(corpus[s], i, j)].push_back(
            {static_cast<std::uint32_t>(s), static_cast<std::uint16_t>(i), static_cast<std::uint16_t>(j)});
      }
    }
  }

  SampledDataset out;
  for (const auto& [label, pairs] : by_label) {
    out.labels.push_back(label);
    out.supply.push_back(pairs.size());
  }
  const std::size_t total = std::accumulate(out.supply.begin(), out.supply.end(), std::size_t{0});
  out.counts = allocate_sample(out.supply, options.count);
  out.target_frequencies = smoothed_frequencies(out.supply);
  for (std::size_t y = 0; y < out.labels.size(); ++y) {
    out.original_frequencies.push_back(static_cast<double>(out.supply[y]) / static_cast<double>(total));
    out.achieved_frequencies.push_back(options.count == 0 ? 0.0
                                                          : static_cast<double>(out.counts[y]) /
                                                                static_cast<double>(options.count));
  }

  Rng rng(options.seed);
  auto& ds = out.dataset;
  ds.kind = TaskKind::kLca;
  ds.seed = options.seed;
  ds.corpus_hash = corpus_hash(corpus);
  ds.instances.reserve(options.count);
  std::size_t y = 0;
  for (auto& [label, pairs] : by_label) {
    const std::size_t take = out.counts[y++];
    for (std::size_t k = 0; k < take; ++k) {
      std::swap(pairs[k], pairs[k + rng.index(pairs.size() - k)]);
      ds.instances.push_back({pairs[k].sentence, pairs[k].i, pairs[k].j, label});
    }
  }
  for (std::size_t k = ds.instances.size(); k > 1; --k) std::swap(ds.instances[k - 1], ds.instances[rng.index(k)]);
  return out;
}

Dataset build_chunk_dataset(const std::vector<ConstTree>& corpus, const ChunkOptions& options) {
  Dataset ds;
  ds.kind = options.detailed ? TaskKind::kChunkDetailed : TaskKind::kChunkSimple;
  ds.corpus_hash = corpus_hash(corpus);
  const std::size_t limit = options.max_sentences == 0 ? corpus.size() : std::min(options.max_sentences, corpus.size());
  for (std::size_t s = 0; s < limit; ++s) {
    const auto labels = chunk_labels(corpus[s], options.detailed);
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (options.drop_punct && labels[k] == kPunctChunkLabel) continue;
      ds.instances.push_back({s, static_cast<int>(k), static_cast<int>(k), labels[k]});
    }
  }
  return ds;
}

std::array<Dataset, 3> build_seq_datasets(const std::vector<ConstTree>& corpus) {
  std::array<Dataset, 3> out;
  const TaskKind kinds[3] = {TaskKind::kSeqLca, TaskKind::kSeqDepth, TaskKind::kSeqUnary};
  const auto hash = corpus_hash(corpus);
  for (int k = 0; k < 3; ++k) {
    out[static_cast<std::size_t>(k)].kind = kinds[k];
    out[static_cast<std::size_t>(k)].corpus_hash = hash;
  }
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto triples = encode(canonicalize(corpus[s]));
    const int n = static_cast<int>(triples.size());
    for (int i = 0; i < n; ++i) {
      const auto& t = triples[static_cast<std::size_t>(i)];
      if (i + 1 < n) {
        out[0].instances.push_back({s, i, i + 1, t.lca_label});
        out[1].instances.push_back({s, i, i + 1, t.depth.str()});
      }
      out[2].instances.push_back({s, i, i, t.unary_label});
    }
  }
  return out;
}

Dataset build_lca_eval(const std::vector<ConstTree>& corpus, const LcaEvalOptions& options, bool* shortfall) {
  Dataset ds;
  ds.kind = TaskKind::kLca;
  ds.corpus_hash = corpus_hash(corpus);
  std::size_t used = 0;
  for (std::size_t s = 0; s < corpus.size() && used < options.max_sentences; ++s) {
    const int n = static_cast<int>(corpus[s].size());
    if (static_cast<std::size_t>(n) > options.max_length) continue;
    ++used;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) ds.instances.push_back({s, i, j, lca_label(corpus[s], i, j)});
  }
  if (shortfall) *shortfall = used < options.max_sentences;
  return ds;
}

ControlMapping::ControlMapping(const Dataset& train, const std::vector<ConstTree>& corpus, std::uint64_t seed)
    : kind_(train.kind), seed_(seed), rng_(seed) {
  const auto labels = train.alphabet();
  if (labels.empty()) throw DataError("control task: empty training set");
  std::vector<double> counts(labels.size(), 0.0);
  for (const auto& inst : train.instances) {
    const auto it = std::lower_bound(labels.begin(), labels.end(), inst.label);
    counts[static_cast<std::size_t>(it - labels.begin())] += 1.0;
  }
  double acc = 0.0;
  for (double c : counts) {
    distribution_.push_back(c / static_cast<double>(train.size()));
    acc += distribution_.back();
    cumulative_.push_back(acc);
  }
  for (const auto& inst : train.instances) lookup(key(inst, corpus));
}

std::string ControlMapping::key(const Instance& inst, const std::vector<ConstTree>& corpus) const {
  const auto& tokens = corpus.at(inst.sentence).tokens;
  const std::string& a = tokens.at(static_cast<std::size_t>(inst.i)).form;
  if (!is_pair_task(kind_)) return a;
  return a + '\x1f' + tokens.at(static_cast<std::size_t>(inst.j)).form;
}

const std::string& ControlMapping::lookup(const std::string& key) {
  auto it = mapping_.find(key);
  if (it != mapping_.end()) return it->second;
  const double u = rng_.uniform() * cumulative_.back();
  auto pos = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (pos == cumulative_.end()) --pos;
  const auto cls = static_cast<std::size_t>(pos - cumulative_.begin());
  return mapping_.emplace(key, std::to_string(cls)).first->second;
}

Dataset ControlMapping::relabel(const Dataset& dataset, const std::vector<ConstTree>& corpus) {
  Dataset out = dataset;
  out.control = true;
  for (auto& inst : out.instances) inst.label = lookup(key(inst, corpus));
  return out;
}

std::pair<ControlMapping, Dataset> make_control(const Dataset& train, const std::vector<ConstTree>& corpus,
                                                std::uint64_t seed) {
  ControlMapping mapping(train, corpus, seed);
  Dataset relabeled = mapping.relabel(train, corpus);
  return {std::move(mapping), std::move(relabeled)};
}

}  // namespace constprobe
