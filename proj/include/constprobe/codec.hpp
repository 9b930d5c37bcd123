#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "constprobe/treebank.hpp"

namespace constprobe {

/// Marker used for both leading fields of the final token.
inline constexpr std::string_view kSentinel = "·";
inline constexpr std::string_view kNoUnary = "NONE";
inline constexpr std::string_view kRootCode = "ROOT";
/// Root label used when a one-token sentence is decoded without a unary label.
inline constexpr std::string_view kFallbackRootLabel = "X";

/// Depth of a pair's lowest common ancestor. The code of the first token is
/// absolute, all later codes are relative to the previous pair; kRoot marks
/// a pair whose ancestor is the root node.
struct DepthCode {
  enum class Kind { kValue, kRoot, kSentinel };
  Kind kind = Kind::kValue;
  int value = 0;

  static DepthCode of(int v) { return {Kind::kValue, v}; }
  static DepthCode root() { return {Kind::kRoot, 0}; }
  static DepthCode sentinel() { return {Kind::kSentinel, 0}; }

  std::string str() const;
  /// Accepts an integer, "ROOT" or the sentinel; anything else is invalid_argument.
  static DepthCode parse(std::string_view text);
  bool operator==(const DepthCode&) const = default;
};

struct SeqLabelTriple {
  std::string lca_label;
  DepthCode depth;
  std::string unary_label;

  bool operator==(const SeqLabelTriple&) const = default;
};

/// Removes unary phrase-over-phrase links, keeping the lower node, and
/// strips function tags.
ConstTree canonicalize(const ConstTree& tree);
bool is_canonical(const ConstTree& tree);

/// One triple per token; throws std::invalid_argument for non-canonical input.
std::vector<SeqLabelTriple> encode(const ConstTree& tree);

/// Absolute depths of the adjacent-pair ancestors as read from the codes:
/// ROOT -> 1, first code absolute, later codes cumulative, clamped at 1.
std::vector<int> absolute_depths(const std::vector<SeqLabelTriple>& triples);

/// Total decoder: any label sequence yields a well-formed tree over `tokens`.
/// Depth gaps that would need a unary chain above several tokens collapse,
/// so node depths in the result are nesting depths starting at 1.
ConstTree decode(const std::vector<SeqLabelTriple>& triples, const std::vector<Token>& tokens,
                 std::string sentence_id = "");

/// Nesting depth (root = 1) of the node each adjacent pair maps to after decoding.
std::vector<int> decoded_depths(const std::vector<SeqLabelTriple>& triples);

/// Tab-separated lines: token, lca_label, depth_code, unary_label; blank line
/// between sentences.
std::string format_triples(const std::vector<Token>& tokens, const std::vector<SeqLabelTriple>& triples);
std::vector<std::vector<SeqLabelTriple>> parse_triples(std::string_view text,
                                                       std::vector<std::vector<std::string>>* forms = nullptr);

}  // namespace constprobe
