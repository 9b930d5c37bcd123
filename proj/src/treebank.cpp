#include "constprobe/treebank.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "constprobe/common.hpp"

namespace constprobe {

namespace {

constexpr std::array<std::string_view, 7> kPunctTags = {".", ",", ":", "``", "''", "-LRB-", "-RRB-"};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RawNode {
  std::string label;
  std::string word;  // set for leaves
  std::vector<RawNode> children;
  bool leaf = false;
};

class BracketLexer {
 public:
  explicit BracketLexer(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
  }
  bool done() {
    skip_space();
    return pos_ >= text_.size();
  }
  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    advance();
  }
  std::string atom() {
    skip_space();
    const std::size_t begin = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
           text_[pos_] != ')')
      advance();
    return std::string(text_.substr(begin, pos_ - begin));
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError("malformed treebank: " + what, line_, col_); }

  RawNode node() {
    expect('(');
    RawNode n;
    if (peek() != '(' && peek() != ')') n.label = atom();
    if (peek() == ')') fail("empty bracket");
    if (peek() != '(') {
      n.word = atom();
      n.leaf = true;
      if (n.word.empty()) fail("missing word");
      expect(')');
      return n;
    }
    while (peek() == '(') n.children.push_back(node());
    if (peek() == '\0') fail("unexpected end of input");
    if (peek() != ')') fail("word after subtree");
    expect(')');
    return n;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

bool is_numeric(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

void split_label(const std::string& raw, bool strip_numeric, std::string& label, std::vector<std::string>& tags) {
  tags.clear();
  if (raw.empty() || raw[0] == '-') {
    label = raw;
    return;
  }
  std::vector<std::string> parts;
  std::string cur;
  for (char c : raw) {
    if (c == '-' || c == '=') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  label = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) {
    if (parts[k].empty()) continue;
    if (strip_numeric && is_numeric(parts[k])) continue;
    tags.push_back(parts[k]);
  }
}

ConstNode convert(const RawNode& raw, const ReadOptions& opts, std::vector<Token>& tokens) {
  ConstNode n;
  if (raw.leaf) {
    n.label = raw.label;
    n.token = static_cast<int>(tokens.size());
    tokens.push_back(Token{n.token, raw.word, raw.label});
    return n;
  }
  split_label(raw.label, opts.strip_numeric_indices, n.label, n.function_tags);
  for (const auto& c : raw.children) n.children.push_back(convert(c, opts, tokens));
  return n;
}

// Returns false when the node should be removed.
bool filter(ConstNode& node, const std::vector<Token>& tokens, const ReadOptions& opts) {
  if (node.is_leaf()) {
    const std::string& pos = tokens[static_cast<std::size_t>(node.token)].pos;
    if (opts.remove_null && pos == kNullPos) return false;
    if (opts.remove_punct && is_punct_pos(pos)) return false;
    return true;
  }
  std::erase_if(node.children, [&](ConstNode& c) { return !filter(c, tokens, opts); });
  return !node.children.empty();
}

void collect_leaves(ConstNode& node, std::vector<ConstNode*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  for (auto& c : node.children) collect_leaves(c, out);
}

void assign_spans(ConstNode& node) {
  if (node.is_leaf()) {
    node.span = {node.token, node.token + 1};
    return;
  }
  for (auto& c : node.children) assign_spans(c);
  node.span = {node.children.front().span.start, node.children.back().span.end};
}

void check_node(const ConstNode& node, const ConstTree& tree) {
  if (node.is_leaf()) {
    if (!node.children.empty()) throw DataError("leaf with children in sentence " + tree.sentence_id);
    if (node.span != Span{node.token, node.token + 1}) throw DataError("bad leaf span in sentence " + tree.sentence_id);
    return;
  }
  if (node.children.empty()) throw DataError("empty phrase " + node.label + " in sentence " + tree.sentence_id);
  if (node.span.end <= node.span.start) throw DataError("empty span in sentence " + tree.sentence_id);
  int cursor = node.span.start;
  for (const auto& c : node.children) {
    if (c.span.start != cursor) throw DataError("non-adjacent child spans in sentence " + tree.sentence_id);
    cursor = c.span.end;
    check_node(c, tree);
  }
  if (cursor != node.span.end) throw DataError("span mismatch in sentence " + tree.sentence_id);
}

void append_bracketed(const ConstNode& node, const ConstTree& tree, std::string& out) {
  out.push_back('(');
  if (node.is_leaf()) {
    out += node.label;
    out.push_back(' ');
    out += tree.tokens[static_cast<std::size_t>(node.token)].form;
  } else {
    out += node.full_label();
    for (const auto& c : node.children) {
      out.push_back(' ');
      append_bracketed(c, tree, out);
    }
  }
  out.push_back(')');
}

const ConstNode& lowest_phrase_above(const ConstNode& root, int i, int j) {
  const ConstNode* cur = &root;
  for (;;) {
    const ConstNode* next = nullptr;
    for (const auto& c : cur->children) {
      if (!c.is_leaf() && c.span.contains(i) && c.span.contains(j)) {
        next = &c;
        break;
      }
    }
    if (!next) return *cur;
    cur = next;
  }
}

void leaf_parents(const ConstNode& node, std::vector<const ConstNode*>& parent) {
  for (const auto& c : node.children) {
    if (c.is_leaf())
      parent[static_cast<std::size_t>(c.token)] = &node;
    else
      leaf_parents(c, parent);
  }
}

void collect_phrases(const ConstNode& node, std::vector<const ConstNode*>& out) {
  if (node.is_leaf()) return;
  out.push_back(&node);
  for (const auto& c : node.children) collect_phrases(c, out);
}

std::vector<std::string> split_columns(const std::string& line) {
  std::vector<std::string> cols;
  if (line.find('\t') != std::string::npos) {
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
  } else {
    std::istringstream ss(line);
    std::string c;
    while (ss >> c) cols.push_back(c);
  }
  return cols;
}

void validate_dep(const DepSentence& s) {
  const int n = static_cast<int>(s.tokens.size());
  if (static_cast<int>(s.heads.size()) != n || static_cast<int>(s.deprels.size()) != n)
    throw DataError("dependency sentence " + s.sentence_id + ": column count mismatch");
  for (int i = 0; i < n; ++i) {
    if (s.heads[static_cast<std::size_t>(i)] < 0 || s.heads[static_cast<std::size_t>(i)] > n)
      throw DataError("dependency sentence " + s.sentence_id + ": head out of range");
  }
  for (int i = 0; i < n; ++i) {
    int cur = i + 1;
    int steps = 0;
    while (cur != 0) {
      cur = s.heads[static_cast<std::size_t>(cur - 1)];
      if (++steps > n) throw DataError("dependency sentence " + s.sentence_id + ": cycle in head graph");
    }
  }
}

std::vector<std::vector<int>> dependents_of(const DepSentence& s) {
  std::vector<std::vector<int>> deps(s.tokens.size());
  for (std::size_t i = 0; i < s.heads.size(); ++i) {
    if (s.heads[i] > 0) deps[static_cast<std::size_t>(s.heads[i] - 1)].push_back(static_cast<int>(i));
  }
  return deps;
}

}  // namespace

std::string ConstNode::full_label() const {
  std::string out = label;
  for (const auto& t : function_tags) {
    out.push_back('-');
    out += t;
  }
  return out;
}

bool is_punct_pos(std::string_view pos) {
  return std::find(kPunctTags.begin(), kPunctTags.end(), pos) != kPunctTags.end();
}

void reindex(ConstTree& tree) {
  std::vector<ConstNode*> leaves;
  collect_leaves(tree.root, leaves);
  std::vector<Token> tokens;
  tokens.reserve(leaves.size());
  for (ConstNode* leaf : leaves) {
    Token t = tree.tokens.at(static_cast<std::size_t>(leaf->token));
    t.index = static_cast<int>(tokens.size());
    leaf->token = t.index;
    tokens.push_back(std::move(t));
  }
  tree.tokens = std::move(tokens);
  assign_spans(tree.root);
  check_spans(tree);
}

void check_spans(const ConstTree& tree) {
  if (tree.root.is_leaf()) throw DataError("sentence " + tree.sentence_id + " has no phrase node");
  check_node(tree.root, tree);
  if (tree.root.span != Span{0, static_cast<int>(tree.tokens.size())})
    throw DataError("root does not cover sentence " + tree.sentence_id);
}

std::vector<ConstTree> parse_const_treebank(std::string_view text, const ReadOptions& options, ReadStats* stats) {
  BracketLexer lex(text);
  std::vector<ConstTree> out;
  std::size_t position = 0;
  std::size_t dropped = 0;
  while (!lex.done()) {
    if (lex.peek() != '(') lex.fail("expected '('");
    RawNode raw = lex.node();
    const std::size_t id = position++;
    while (!raw.leaf && raw.children.size() == 1 && !raw.children[0].leaf &&
           (raw.label.empty() || raw.label == "ROOT" || raw.label == "TOP")) {
      RawNode inner = std::move(raw.children[0]);
      raw = std::move(inner);
    }
    if (raw.leaf) lex.fail("tree without a phrase node");
    if (raw.label.empty()) raw.label = "ROOT";

    ConstTree tree;
    tree.sentence_id = std::to_string(id);
    tree.root = convert(raw, options, tree.tokens);
    if (!filter(tree.root, tree.tokens, options)) {
      ++dropped;
      continue;
    }
    reindex(tree);
    out.push_back(std::move(tree));
  }
  if (stats) {
    stats->read = position;
    stats->dropped_empty = dropped;
  }
  return out;
}

std::vector<ConstTree> read_const_treebank(const std::string& path, const ReadOptions& options, ReadStats* stats) {
  return parse_const_treebank(read_file(path), options, stats);
}

std::string to_bracketed(const ConstTree& tree) {
  std::string out;
  append_bracketed(tree.root, tree, out);
  return out;
}

void write_const_treebank(const std::string& path, const std::vector<ConstTree>& trees) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& t : trees) out << to_bracketed(t) << '\n';
}

std::vector<DepSentence> parse_conll(std::string_view text) {
  std::vector<DepSentence> out;
  DepSentence cur;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    cur.sentence_id = std::to_string(out.size());
    validate_dep(cur);
    out.push_back(std::move(cur));
    cur = DepSentence{};
  };
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;
    auto cols = split_columns(line);
    if (cols.size() < 8) throw ParseError("CoNLL line needs at least 8 columns", lineno, 1);
    if (cols[0].find_first_of("-.") != std::string::npos) continue;  // multiword / empty nodes
    const int id = std::stoi(cols[0]);
    if (id != static_cast<int>(cur.tokens.size()) + 1) throw ParseError("non-consecutive token id", lineno, 1);
    const std::string& pos = cols[4] != "_" ? cols[4] : cols[3];
    cur.tokens.push_back(Token{id - 1, cols[1], pos});
    try {
      cur.heads.push_back(std::stoi(cols[6]));
    } catch (const std::exception&) {
      throw ParseError("bad head column", lineno, 1);
    }
    cur.deprels.push_back(cols[7]);
  }
  flush();
  return out;
}

std::vector<DepSentence> read_conll(const std::string& path) { return parse_conll(read_file(path)); }

void write_conll(const std::string& path, const std::vector<DepSentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const auto& t = s.tokens[i];
      out << (i + 1) << '\t' << t.form << "\t_\t" << t.pos << '\t' << t.pos << "\t_\t" << s.heads[i] << '\t'
          << s.deprels[i] << "\t_\t_\n";
    }
    out << '\n';
  }
}

const ConstNode& lca_node(const ConstTree& tree, int i, int j) {
  const int n = static_cast<int>(tree.size());
  if (i < 0 || j < 0 || i >= n || j >= n) throw std::out_of_range("lca: token index out of range");
  if (i > j) std::swap(i, j);
  return lowest_phrase_above(tree.root, i, j);
}

std::string lca_label(const ConstTree& tree, int i, int j) { return lca_node(tree, i, j).label; }

std::vector<std::string> chunk_labels(const ConstTree& tree, bool detailed) {
  std::vector<const ConstNode*> parent(tree.size(), nullptr);
  leaf_parents(tree.root, parent);
  std::vector<std::string> out;
  out.reserve(tree.size());
  for (std::size_t k = 0; k < tree.size(); ++k) {
    if (is_punct_pos(tree.tokens[k].pos)) {
      out.emplace_back(kPunctChunkLabel);
      continue;
    }
    const ConstNode& p = *parent[k];
    const int i = static_cast<int>(k);
    std::string tag;
    if (p.span.size() == 1)
      tag = "S";
    else if (i == p.span.start)
      tag = "B";
    else if (i == p.span.end - 1)
      tag = "E";
    else
      tag = "I";
    if (detailed) tag += "-" + p.full_label();
    out.push_back(std::move(tag));
  }
  return out;
}

std::vector<Bracketing> const_bracketings(const ConstTree& tree, bool labeled) {
  std::vector<const ConstNode*> phrases;
  collect_phrases(tree.root, phrases);
  std::vector<Bracketing> out;
  for (const ConstNode* p : phrases) {
    Bracketing b;
    for (int k = p->span.start; k < p->span.end; ++k) b.indices.push_back(k);
    if (labeled) b.label = p->label;
    out.push_back(std::move(b));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Bracketing> dep_bracketings(const DepSentence& sentence) {
  const auto deps = dependents_of(sentence);
  std::vector<Bracketing> out;
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    Bracketing b;
    std::vector<int> stack{static_cast<int>(i)};
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      b.indices.push_back(cur);
      for (int d : deps[static_cast<std::size_t>(cur)]) stack.push_back(d);
    }
    std::sort(b.indices.begin(), b.indices.end());
    out.push_back(std::move(b));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

BracketingOverlap bracketing_overlap(const std::vector<ConstTree>& trees, const std::vector<DepSentence>& deps) {
  if (trees.size() != deps.size())
    throw DataError("bracketing overlap: " + std::to_string(trees.size()) + " trees vs " + std::to_string(deps.size()) +
                    " dependency sentences");
  BracketingOverlap r;
  for (std::size_t s = 0; s < trees.size(); ++s) {
    if (trees[s].size() != deps[s].tokens.size())
      throw DataError("bracketing overlap: token count mismatch in sentence " + trees[s].sentence_id);
    const auto c = const_bracketings(trees[s]);
    const auto d = dep_bracketings(deps[s]);
    std::vector<Bracketing> shared;
    std::set_intersection(c.begin(), c.end(), d.begin(), d.end(), std::back_inserter(shared));
    r.const_total += c.size();
    r.dep_total += d.size();
    r.shared += shared.size();
  }
  if (r.dep_total > 0) r.dep_in_const = static_cast<double>(r.shared) / static_cast<double>(r.dep_total);
  if (r.const_total > 0) r.const_in_dep = static_cast<double>(r.shared) / static_cast<double>(r.const_total);
  return r;
}

std::vector<int> overt_tokens(const ConstTree& tree) {
  std::vector<int> out;
  for (const auto& t : tree.tokens)
    if (t.pos != kNullPos) out.push_back(t.index);
  return out;
}

}  // namespace constprobe
