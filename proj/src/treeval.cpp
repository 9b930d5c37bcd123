#include "constprobe/treeval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "constprobe/common.hpp"

namespace constprobe {

using nlohmann::json;

namespace {

using Bracket = std::tuple<std::string, int, int>;

void collect(const ConstNode& node, std::vector<Bracket>& out) {
  if (node.is_leaf()) return;
  out.emplace_back(node.label, node.span.start, node.span.end);
  for (const auto& c : node.children) collect(c, out);
}

std::vector<Bracket> brackets(const ConstTree& tree) {
  std::vector<Bracket> out;
  collect(tree.root, out);
  std::sort(out.begin(), out.end());
  return out;
}

void check_aligned(const std::vector<ConstTree>& gold, const std::vector<ConstTree>& predicted) {
  if (gold.size() != predicted.size())
    throw DataError("alignment error: " + std::to_string(gold.size()) + " gold vs " + std::to_string(predicted.size()) +
                    " predicted sentences");
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != predicted[s].size())
      throw DataError("alignment error: token count differs in sentence " + gold[s].sentence_id);
  }
}

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

}  // namespace

BracketCounts count_brackets(const ConstTree& gold, const ConstTree& predicted) {
  const auto g = brackets(gold);
  const auto p = brackets(predicted);
  std::vector<Bracket> shared;
  // Multiset intersection: each bracket matches min(count_gold, count_pred) times.
  std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(shared));
  return {shared.size(), g.size(), p.size()};
}

double f1_of(const BracketCounts& c) {
  const double p = ratio(c.matched, c.predicted);
  const double r = ratio(c.matched, c.gold);
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

double ParseScore::precision() const { return ratio(matched, predicted_total); }
double ParseScore::recall() const { return ratio(matched, gold_total); }
double ParseScore::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

ParseScore score(const std::vector<ConstTree>& gold, const std::vector<ConstTree>& predicted) {
  check_aligned(gold, predicted);
  ParseScore s;
  s.sentence_f1.resize(gold.size());
  std::vector<BracketCounts> counts(gold.size());
  parallel_for(gold.size(), 0, [&](std::size_t k) { counts[k] = count_brackets(gold[k], predicted[k]); });
  for (std::size_t k = 0; k < gold.size(); ++k) {
    s.matched += counts[k].matched;
    s.gold_total += counts[k].gold;
    s.predicted_total += counts[k].predicted;
    s.sentence_f1[k] = f1_of(counts[k]);
  }
  return s;
}

std::string ParseScore::to_json() const {
  json j;
  j["precision"] = precision();
  j["recall"] = recall();
  j["f1"] = f1();
  j["matched"] = matched;
  j["gold_brackets"] = gold_total;
  j["predicted_brackets"] = predicted_total;
  j["sentences"] = sentence_f1.size();
  return j.dump(1);
}

std::string ParseScore::to_text() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "sentences           " << sentence_f1.size() << '\n';
  out << "matched brackets    " << matched << '\n';
  out << "gold brackets       " << gold_total << '\n';
  out << "predicted brackets  " << predicted_total << '\n';
  out << "labeled precision   " << 100 * precision() << '\n';
  out << "labeled recall      " << 100 * recall() << '\n';
  out << "labeled F1          " << 100 * f1() << '\n';
  return out.str();
}

std::string ParseScore::sentence_csv() const {
  std::ostringstream out;
  out << "sentence,f1\n" << std::setprecision(17);
  for (std::size_t k = 0; k < sentence_f1.size(); ++k) out << k << ',' << sentence_f1[k] << '\n';
  return out.str();
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: series lengths differ");
  if (a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    cov += (a[k] - ma) * (b[k] - mb);
    va += (a[k] - ma) * (a[k] - ma);
    vb += (b[k] - mb) * (b[k] - mb);
  }
  if (va == 0 || vb == 0) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

ModelComparison compare_models(const std::vector<ConstTree>& gold,
                               const std::vector<std::pair<std::string, std::vector<ConstTree>>>& predicted) {
  ModelComparison out;
  for (const auto& [name, corpus] : predicted) {
    out.names.push_back(name);
    out.against_gold.push_back(score(gold, corpus));
  }
  const std::size_t n = predicted.size();
  out.f1.assign(n, std::vector<double>(n, 0.0));
  out.pearson.assign(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      out.f1[a][b] = score(predicted[a].second, predicted[b].second).f1();
      const auto r = pearson(out.against_gold[a].sentence_f1, out.against_gold[b].sentence_f1);
      if (r) out.pearson[a][b] = *r;
    }
  }
  return out;
}

std::string ModelComparison::to_json() const {
  json j;
  j["names"] = names;
  j["f1"] = f1;
  json p = json::array();
  for (const auto& row : pearson) {
    json r = json::array();
    for (double v : row) r.push_back(std::isnan(v) ? json(nullptr) : json(v));
    p.push_back(r);
  }
  j["pearson"] = p;
  json g = json::array();
  for (const auto& s : against_gold) g.push_back(s.f1());
  j["f1_vs_gold"] = g;
  return j.dump(1);
}

std::string ModelComparison::to_text() const {
  std::ostringstream out;
  std::size_t w = 8;
  for (const auto& n : names) w = std::max(w, n.size() + 2);
  auto table = [&](const char* title, const std::vector<std::vector<double>>& m, double scale, int prec) {
    out << title << '\n' << std::setw(static_cast<int>(w)) << "";
    for (const auto& n : names) out << std::setw(static_cast<int>(w)) << n;
    out << '\n' << std::fixed << std::setprecision(prec);
    for (std::size_t a = 0; a < names.size(); ++a) {
      out << std::setw(static_cast<int>(w)) << names[a];
      for (std::size_t b = 0; b < names.size(); ++b) {
        if (std::isnan(m[a][b]))
          out << std::setw(static_cast<int>(w)) << "n/a";
        else
          out << std::setw(static_cast<int>(w)) << m[a][b] * scale;
      }
      out << '\n';
    }
  };
  table("labeled F1 (row = reference)", f1, 100.0, 2);
  out << '\n';
  table("Pearson r of sentence F1 vs gold", pearson, 1.0, 3);
  return out.str();
}

}  // namespace constprobe
