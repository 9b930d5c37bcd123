#include "fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <sys/wait.h>

namespace fixtures {

namespace fs = std::filesystem;
using namespace constprobe;

std::string data_path(const std::string& name) { return std::string(CONSTPROBE_DATA_DIR) + "/" + name; }

std::string scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(CONSTPROBE_SCRATCH) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

ConstTree parse_one(const std::string& text, bool keep_punct) {
  ReadOptions opts;
  opts.remove_punct = !keep_punct;
  auto trees = parse_const_treebank(text, opts);
  if (trees.size() != 1) throw std::runtime_error("expected one tree");
  return trees.front();
}

std::vector<ConstTree> toy_corpus() { return read_const_treebank(data_path("toy.mrg")); }

namespace {

const std::array<const char*, 8> kPhrases = {"S", "NP", "VP", "PP", "ADJP", "ADVP", "SBAR", "QP"};
const std::array<const char*, 6> kTags = {"DT", "NN", "VB", "IN", "JJ", "RB"};

void gen(Rng& rng, int n, int depth, int max_depth, int& next_token, std::ostringstream& out) {
  out << '(' << kPhrases[rng.index(kPhrases.size())];
  if (n == 1) {
    out << " (" << kTags[rng.index(kTags.size())] << " w" << next_token++ << "))";
    return;
  }
  // Split into 2..min(n,4) nonempty parts; at the depth limit keep the node flat.
  std::vector<int> parts;
  if (depth >= max_depth) {
    parts.assign(static_cast<std::size_t>(n), 1);
  } else {
    const int k = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(std::min(n, 4) - 1)));
    std::vector<int> cuts;
    std::vector<int> all(static_cast<std::size_t>(n - 1));
    for (int c = 0; c < n - 1; ++c) all[static_cast<std::size_t>(c)] = c + 1;
    for (int c = 0; c < k - 1; ++c) {
      const std::size_t pick = static_cast<std::size_t>(c) + rng.index(all.size() - static_cast<std::size_t>(c));
      std::swap(all[static_cast<std::size_t>(c)], all[pick]);
      cuts.push_back(all[static_cast<std::size_t>(c)]);
    }
    std::sort(cuts.begin(), cuts.end());
    int prev = 0;
    for (int c : cuts) {
      parts.push_back(c - prev);
      prev = c;
    }
    parts.push_back(n - prev);
  }
  for (int p : parts) {
    out << ' ';
    if (p == 1 && (depth >= max_depth || rng.index(2) == 0)) {
      out << '(' << kTags[rng.index(kTags.size())] << " w" << next_token++ << ')';
    } else {
      gen(rng, p, depth + 1, max_depth, next_token, out);
    }
  }
  out << ')';
}

}  // namespace

std::string random_canonical_bracketed(Rng& rng, int max_tokens, int max_depth) {
  const int n = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_tokens)));
  std::ostringstream out;
  int next = 0;
  // Depth counts phrase levels; the preterminal under the deepest phrase is extra.
  gen(rng, n, 1, max_depth - 1, next, out);
  return out.str();
}

int ancestor_depth(const ConstTree& tree, int i, int j) {
  int depth = 1;
  const ConstNode* node = &tree.root;
  for (;;) {
    const ConstNode* down = nullptr;
    for (const auto& c : node->children) {
      if (!c.is_leaf() && c.span.start <= i && j < c.span.end) down = &c;
    }
    if (!down) return depth;
    node = down;
    ++depth;
  }
}

std::vector<std::size_t> waterfill_oracle(const std::vector<std::size_t>& supply, std::size_t n) {
  const std::size_t m = supply.size();
  std::size_t nonzero = 0, total = 0;
  for (auto s : supply) {
    nonzero += s > 0;
    total += s;
  }
  std::vector<double> fs(m, 0.0);
  for (std::size_t y = 0; y < m; ++y) {
    if (supply[y] == 0) continue;
    fs[y] = (static_cast<double>(supply[y]) / static_cast<double>(total) + 1.0 / static_cast<double>(nonzero)) / 2;
  }
  auto filled = [&](double lambda) {
    double sum = 0;
    for (std::size_t y = 0; y < m; ++y) sum += std::min(static_cast<double>(supply[y]), lambda * fs[y]);
    return sum;
  };
  double lo = 0, hi = 1;
  while (filled(hi) < static_cast<double>(n) && hi < 1e18) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    const double mid = (lo + hi) / 2;
    (filled(mid) < static_cast<double>(n) ? lo : hi) = mid;
  }
  std::vector<std::size_t> out(m, 0);
  std::size_t remaining = n;
  double weight = 0;
  std::vector<bool> open(m, false);
  for (std::size_t y = 0; y < m; ++y) {
    if (supply[y] > 0 && static_cast<double>(supply[y]) <= hi * fs[y] * (1 + 1e-12)) {
      out[y] = supply[y];
      remaining -= supply[y];
    } else if (supply[y] > 0) {
      open[y] = true;
      weight += fs[y];
    }
  }
  std::vector<std::pair<double, std::size_t>> rest;
  std::size_t given = 0;
  for (std::size_t y = 0; y < m; ++y) {
    if (!open[y]) continue;
    const double exact = static_cast<double>(remaining) * fs[y] / weight;
    out[y] = static_cast<std::size_t>(std::floor(exact));
    given += out[y];
    rest.emplace_back(exact - std::floor(exact), y);
  }
  std::stable_sort(rest.begin(), rest.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < remaining; ++k, ++given) ++out[rest[k].second];
  return out;
}

int run(const std::string& command, std::string* output) {
  const bool redirected = command.find("2>") != std::string::npos;
  FILE* pipe = popen((redirected ? command : command + " 2>/dev/null").c_str(), "r");
  if (!pipe) return -1;
  std::string text;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) text.append(buf, got);
  const int status = pclose(pipe);
  if (output) *output = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace fixtures
