#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "constprobe/treebank.hpp"

namespace constprobe {

/// Labeled PARSEVAL over (label, span) brackets of all phrase nodes, root
/// included, preterminals excluded, unary duplicates counted with
/// multiplicity. Function tags are ignored.
struct ParseScore {
  std::size_t matched = 0;
  std::size_t gold_total = 0;
  std::size_t predicted_total = 0;
  std::vector<double> sentence_f1;

  double precision() const;
  double recall() const;
  double f1() const;
  std::string to_json() const;
  std::string to_text() const;
  std::string sentence_csv() const;
};

struct BracketCounts {
  std::size_t matched = 0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
};

BracketCounts count_brackets(const ConstTree& gold, const ConstTree& predicted);
double f1_of(const BracketCounts& c);

ParseScore score(const std::vector<ConstTree>& gold, const std::vector<ConstTree>& predicted);

/// Product-moment correlation; empty when either series has zero variance.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

struct ModelComparison {
  std::vector<std::string> names;
  std::vector<std::vector<double>> f1;       // f1[a][b]: a as gold, b as prediction
  std::vector<std::vector<double>> pearson;  // of per-sentence F1 against the gold; NaN if undefined
  std::vector<ParseScore> against_gold;

  std::string to_json() const;
  std::string to_text() const;
};

ModelComparison compare_models(const std::vector<ConstTree>& gold,
                               const std::vector<std::pair<std::string, std::vector<ConstTree>>>& predicted);

}  // namespace constprobe
