#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace constprobe {

struct Token {
  int index = 0;
  std::string form;
  std::string pos;
};

/// Half-open token interval.
struct Span {
  int start = 0;
  int end = 0;
  int size() const { return end - start; }
  bool contains(int i) const { return start <= i && i < end; }
  auto operator<=>(const Span&) const = default;
};

/// A tree node. Leaves carry the index of their token and use the POS tag as
/// label; every other node is a phrase.
struct ConstNode {
  std::string label;
  std::vector<std::string> function_tags;
  Span span;
  std::vector<ConstNode> children;
  int token = -1;

  bool is_leaf() const { return token >= 0; }
  /// Label with function tags re-attached, e.g. "NP-SBJ".
  std::string full_label() const;
};

struct ConstTree {
  ConstNode root;
  std::vector<Token> tokens;
  std::string sentence_id;

  std::size_t size() const { return tokens.size(); }
};

struct DepSentence {
  std::vector<Token> tokens;
  std::vector<int> heads;  // 0 = artificial root, else 1-based position
  std::vector<std::string> deprels;
  std::string sentence_id;
};

/// A set of token indices, sorted ascending, with an optional label.
struct Bracketing {
  std::vector<int> indices;
  std::optional<std::string> label;

  auto operator<=>(const Bracketing&) const = default;
};

struct ReadOptions {
  bool strip_numeric_indices = true;
  bool remove_punct = true;
  bool remove_null = true;
};

struct ReadStats {
  std::size_t read = 0;
  std::size_t dropped_empty = 0;
};

inline constexpr std::string_view kNullPos = "-NONE-";
inline constexpr std::string_view kPunctChunkLabel = "PCT";

bool is_punct_pos(std::string_view pos);

/// Parses bracketed treebank text. Sentence ids are the 0-based position of
/// each tree in the input, assigned before filtering.
std::vector<ConstTree> parse_const_treebank(std::string_view text, const ReadOptions& options = {},
                                            ReadStats* stats = nullptr);
std::vector<ConstTree> read_const_treebank(const std::string& path, const ReadOptions& options = {},
                                           ReadStats* stats = nullptr);

/// One tree per line, single spaces, labels with their retained tags.
std::string to_bracketed(const ConstTree& tree);
void write_const_treebank(const std::string& path, const std::vector<ConstTree>& trees);

std::vector<DepSentence> parse_conll(std::string_view text);
std::vector<DepSentence> read_conll(const std::string& path);
void write_conll(const std::string& path, const std::vector<DepSentence>& sentences);

/// Recomputes token indices and spans after structural edits and checks the
/// node invariants. Throws DataError on an inconsistent tree.
void reindex(ConstTree& tree);
/// Throws DataError unless every span is the union of its adjacent child spans.
void check_spans(const ConstTree& tree);

/// Label (tags stripped) of the lowest phrase containing tokens i and j.
/// For i == j this is the lowest phrase above the token.
std::string lca_label(const ConstTree& tree, int i, int j);
const ConstNode& lca_node(const ConstTree& tree, int i, int j);

/// B/I/E/S by position within each token's shortest phrase. Detailed labels
/// look like "B-NP-SBJ". Punctuation tokens (kept only when the reader did
/// not remove them) receive PCT.
std::vector<std::string> chunk_labels(const ConstTree& tree, bool detailed = false);

std::vector<Bracketing> const_bracketings(const ConstTree& tree, bool labeled = false);
std::vector<Bracketing> dep_bracketings(const DepSentence& sentence);

struct BracketingOverlap {
  std::size_t dep_total = 0;
  std::size_t const_total = 0;
  std::size_t shared = 0;
  /// Empty when the denominator is zero.
  std::optional<double> dep_in_const;
  std::optional<double> const_in_dep;
};

/// Micro-averaged over sentence pairs; intersection by identical index sets.
BracketingOverlap bracketing_overlap(const std::vector<ConstTree>& trees, const std::vector<DepSentence>& deps);

/// Indices of the tokens whose POS is not the null element, in order.
std::vector<int> overt_tokens(const ConstTree& tree);

}  // namespace constprobe
