#include "constprobe/codec.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <stdexcept>

namespace constprobe {

std::string DepthCode::str() const {
  switch (kind) {
    case Kind::kRoot:
      return std::string(kRootCode);
    case Kind::kSentinel:
      return std::string(kSentinel);
    case Kind::kValue:
      break;
  }
  return std::to_string(value);
}

DepthCode DepthCode::parse(std::string_view text) {
  if (text == kRootCode) return root();
  if (text == kSentinel) return sentinel();
  int v = 0;
  const char* first = text.data();
  if (!text.empty() && text.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw std::invalid_argument("bad depth code '" + std::string(text) + "'");
  return of(v);
}

namespace {

ConstNode canonical_node(const ConstNode& node) {
  if (node.is_leaf()) return node;
  const ConstNode* cur = &node;
  while (cur->children.size() == 1 && !cur->children.front().is_leaf()) cur = &cur->children.front();
  ConstNode out;
  out.label = cur->label;
  out.span = cur->span;
  out.children.reserve(cur->children.size());
  for (const auto& c : cur->children) out.children.push_back(canonical_node(c));
  return out;
}

bool canonical_node_ok(const ConstNode& node) {
  if (node.is_leaf()) return true;
  if (node.children.size() == 1 && !node.children.front().is_leaf()) return false;
  return std::all_of(node.children.begin(), node.children.end(), canonical_node_ok);
}

// Lowest phrase containing tokens i and j, with its depth (root = 1).
std::pair<const ConstNode*, int> lca_with_depth(const ConstNode& root, int i, int j) {
  const ConstNode* cur = &root;
  int depth = 1;
  for (;;) {
    const ConstNode* next = nullptr;
    for (const auto& c : cur->children) {
      if (!c.is_leaf() && c.span.contains(i) && c.span.contains(j)) {
        next = &c;
        break;
      }
    }
    if (!next) return {cur, depth};
    cur = next;
    ++depth;
  }
}

bool has_unary(const std::string& label) { return !label.empty() && label != kNoUnary && label != kSentinel; }

const std::string& majority_label(const std::vector<const std::string*>& labels) {
  std::map<std::string_view, int> counts;
  for (const auto* l : labels) ++counts[*l];
  const std::string* best = labels.front();
  int best_count = 0;
  for (const auto* l : labels) {  // left to right, so ties keep the leftmost
    const int c = counts[*l];
    if (c > best_count) {
      best = l;
      best_count = c;
    }
  }
  return *best;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<SeqLabelTriple>& triples, const std::vector<Token>& tokens)
      : triples_(triples), tokens_(tokens), depths_(absolute_depths(triples)), nesting_(depths_.size(), 0) {}

  // Node over tokens [first, last], first < last.
  ConstNode phrase(int first, int last, int level) {
    int lowest = depths_[static_cast<std::size_t>(first)];
    for (int p = first; p < last; ++p) lowest = std::min(lowest, depths_[static_cast<std::size_t>(p)]);
    std::vector<int> splits;
    std::vector<const std::string*> labels;
    for (int p = first; p < last; ++p) {
      if (depths_[static_cast<std::size_t>(p)] == lowest) {
        splits.push_back(p);
        labels.push_back(&triples_[static_cast<std::size_t>(p)].lca_label);
        nesting_[static_cast<std::size_t>(p)] = level;
      }
    }
    ConstNode node;
    node.label = majority_label(labels);
    node.span = {first, last + 1};
    int begin = first;
    splits.push_back(last);
    for (int s : splits) {
      node.children.push_back(s == begin ? token_node(begin) : phrase(begin, s, level + 1));
      begin = s + 1;
    }
    return node;
  }

  ConstNode token_node(int k) const {
    const auto& tok = tokens_[static_cast<std::size_t>(k)];
    ConstNode leaf;
    leaf.label = tok.pos;
    leaf.token = k;
    leaf.span = {k, k + 1};
    const auto& unary = triples_[static_cast<std::size_t>(k)].unary_label;
    if (!has_unary(unary)) return leaf;
    ConstNode wrap;
    wrap.label = unary;
    wrap.span = leaf.span;
    wrap.children.push_back(std::move(leaf));
    return wrap;
  }

  const std::vector<int>& nesting() const { return nesting_; }

 private:
  const std::vector<SeqLabelTriple>& triples_;
  const std::vector<Token>& tokens_;
  std::vector<int> depths_;
  std::vector<int> nesting_;
};

}  // namespace

ConstTree canonicalize(const ConstTree& tree) {
  ConstTree out;
  out.sentence_id = tree.sentence_id;
  out.tokens = tree.tokens;
  out.root = canonical_node(tree.root);
  return out;
}

bool is_canonical(const ConstTree& tree) { return canonical_node_ok(tree.root); }

std::vector<SeqLabelTriple> encode(const ConstTree& tree) {
  if (!is_canonical(tree)) throw std::invalid_argument("encode: tree " + tree.sentence_id + " is not canonical");
  const int n = static_cast<int>(tree.size());
  if (n == 0) throw std::invalid_argument("encode: empty sentence");

  std::vector<const ConstNode*> parent(tree.size(), nullptr);
  auto find_parents = [&](auto&& self, const ConstNode& node) -> void {
    for (const auto& c : node.children) {
      if (c.is_leaf())
        parent[static_cast<std::size_t>(c.token)] = &node;
      else
        self(self, c);
    }
  };
  find_parents(find_parents, tree.root);

  std::vector<SeqLabelTriple> out(tree.size());
  int previous = 0;
  for (int i = 0; i < n; ++i) {
    auto& t = out[static_cast<std::size_t>(i)];
    const ConstNode* p = parent[static_cast<std::size_t>(i)];
    t.unary_label = p->span.size() == 1 ? p->label : std::string(kNoUnary);
    if (i == n - 1) {
      t.lca_label = std::string(kSentinel);
      t.depth = DepthCode::sentinel();
      continue;
    }
    const auto [node, depth] = lca_with_depth(tree.root, i, i + 1);
    t.lca_label = node->label;
    if (node == &tree.root)
      t.depth = DepthCode::root();
    else
      t.depth = DepthCode::of(i == 0 ? depth : depth - previous);
    previous = depth;
  }
  return out;
}

std::vector<int> absolute_depths(const std::vector<SeqLabelTriple>& triples) {
  std::vector<int> depths;
  if (triples.size() < 2) return depths;
  depths.reserve(triples.size() - 1);
  int previous = 0;
  for (std::size_t i = 0; i + 1 < triples.size(); ++i) {
    const auto& code = triples[i].depth;
    int d = 0;
    switch (code.kind) {
      case DepthCode::Kind::kRoot:
        d = 1;
        break;
      case DepthCode::Kind::kSentinel:  // misplaced sentinel: keep the previous depth
        d = i == 0 ? 1 : previous;
        break;
      case DepthCode::Kind::kValue:
        d = i == 0 ? code.value : previous + code.value;
        break;
    }
    d = std::max(d, 1);
    depths.push_back(d);
    previous = d;
  }
  return depths;
}

ConstTree decode(const std::vector<SeqLabelTriple>& triples, const std::vector<Token>& tokens, std::string sentence_id) {
  if (tokens.empty()) throw std::invalid_argument("decode: empty sentence");
  if (triples.size() != tokens.size()) throw std::invalid_argument("decode: need one triple per token");
  ConstTree tree;
  tree.sentence_id = std::move(sentence_id);
  tree.tokens = tokens;
  for (std::size_t k = 0; k < tree.tokens.size(); ++k) tree.tokens[k].index = static_cast<int>(k);

  TreeBuilder builder(triples, tree.tokens);
  if (tokens.size() == 1) {
    tree.root = builder.token_node(0);
    if (tree.root.is_leaf()) {
      ConstNode wrap;
      wrap.label = std::string(kFallbackRootLabel);
      wrap.span = tree.root.span;
      wrap.children.push_back(std::move(tree.root));
      tree.root = std::move(wrap);
    }
  } else {
    tree.root = builder.phrase(0, static_cast<int>(tokens.size()) - 1, 1);
  }
  return tree;
}

std::vector<int> decoded_depths(const std::vector<SeqLabelTriple>& triples) {
  if (triples.size() < 2) return {};
  std::vector<Token> tokens(triples.size());
  TreeBuilder builder(triples, tokens);
  builder.phrase(0, static_cast<int>(triples.size()) - 1, 1);
  return builder.nesting();
}

std::string format_triples(const std::vector<Token>& tokens, const std::vector<SeqLabelTriple>& triples) {
  if (tokens.size() != triples.size()) throw std::invalid_argument("format_triples: size mismatch");
  std::string out;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    out += tokens[k].form + '\t' + triples[k].lca_label + '\t' + triples[k].depth.str() + '\t' +
           triples[k].unary_label + '\n';
  }
  return out;
}

std::vector<std::vector<SeqLabelTriple>> parse_triples(std::string_view text,
                                                       std::vector<std::vector<std::string>>* forms) {
  std::vector<std::vector<SeqLabelTriple>> out;
  std::vector<SeqLabelTriple> cur;
  std::vector<std::string> cur_forms;
  auto flush = [&] {
    if (cur.empty()) return;
    out.push_back(std::move(cur));
    if (forms) forms->push_back(std::move(cur_forms));
    cur.clear();
    cur_forms.clear();
  };
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      flush();
      continue;
    }
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 4) throw std::invalid_argument("triple line needs 4 tab-separated fields: " + line);
    cur.push_back({cols[1], DepthCode::parse(cols[2]), cols[3]});
    cur_forms.push_back(cols[0]);
  }
  flush();
  return out;
}

}  // namespace constprobe
