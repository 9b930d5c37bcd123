#include <map>
#include <set>
#include <tuple>

#include "doctest.h"
#include "fixtures.hpp"
#include "constprobe/nonce.hpp"

using namespace constprobe;

namespace {

ReadOptions raw_options() {
  ReadOptions o;
  o.remove_punct = false;
  o.remove_null = false;
  return o;
}

DepSentence the_cat() {
  DepSentence d;
  d.tokens = {{0, "the", "DT"}, {1, "cat", "NN"}};
  d.heads = {2, 0};
  d.deprels = {"det", "root"};
  return d;
}

// Group-by over (pos, head relation, sorted dependent relations), written
// without the library's context helper.
using Key = std::tuple<std::string, std::string, std::string>;
std::map<Key, std::map<std::string, int>> group_by(const std::vector<DepSentence>& corpus) {
  std::map<Key, std::map<std::string, int>> out;
  for (const auto& s : corpus) {
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      std::multiset<std::string> deps;
      for (std::size_t u = 0; u < s.tokens.size(); ++u)
        if (s.heads[u] == static_cast<int>(t) + 1) deps.insert(s.deprels[u]);
      std::string joined;
      for (const auto& d : deps) joined += d + "|";
      ++out[{s.tokens[t].pos, s.deprels[t], joined}][s.tokens[t].form];
    }
  }
  return out;
}

std::string all_bracketed(const std::vector<ConstTree>& trees) {
  std::string s;
  for (const auto& t : trees) s += to_bracketed(t) + "\n";
  return s;
}

struct Corpus {
  std::vector<ConstTree> trees;
  std::vector<DepSentence> deps;
};

Corpus nonce2k() {
  return {read_const_treebank(fixtures::data_path("nonce2k.mrg"), raw_options()),
          read_conll(fixtures::data_path("nonce2k.conllx"))};
}

}  // namespace

TEST_CASE("pool of a two-token sentence") {
  const auto pool = build_pool({the_cat()});
  CHECK(pool.signature_count() == 2);
  for (const auto& [ctx, entry] : pool.entries()) CHECK(entry.types.size() == 1);
  const auto ctx = dep_context(the_cat(), 1);
  CHECK(ctx.pos == "NN");
  CHECK(ctx.head_rel == "root");
  CHECK(ctx.dep_rels == std::vector<std::string>{"det"});
}

TEST_CASE("dependent relations form an order-free multiset") {
  DepSentence a;
  a.tokens = {{0, "the", "DT"}, {1, "big", "JJ"}, {2, "cat", "NN"}};
  a.heads = {3, 3, 0};
  a.deprels = {"det", "amod", "root"};
  DepSentence b;
  b.tokens = {{0, "big", "JJ"}, {1, "the", "DT"}, {2, "dog", "NN"}};
  b.heads = {3, 3, 0};
  b.deprels = {"amod", "det", "root"};
  CHECK(dep_context(a, 2) == dep_context(b, 2));
  const auto pool = build_pool({a, b});
  const auto* e = pool.find(dep_context(a, 2));
  REQUIRE(e != nullptr);
  CHECK(e->types == std::vector<std::string>{"cat", "dog"});
}

TEST_CASE("pool sizes match an independent group-by") {
  auto deps = read_conll(fixtures::data_path("toy.conllx"));
  deps.resize(10);
  const auto pool = build_pool(deps);
  const auto oracle = group_by(deps);
  CHECK(pool.signature_count() == oracle.size());
  for (const auto& [ctx, entry] : pool.entries()) {
    std::string joined;
    for (const auto& d : ctx.dep_rels) joined += d + "|";
    const auto it = oracle.find({ctx.pos, ctx.head_rel, joined});
    REQUIRE(it != oracle.end());
    CHECK(entry.types.size() == it->second.size());
    for (const auto& [form, n] : it->second) CHECK(entry.count(form) == static_cast<std::size_t>(n));
  }
}

TEST_CASE("fraction zero leaves everything unchanged") {
  const auto c = nonce2k();
  const auto r = corrupt(c.trees, c.deps, build_pool(c.deps), {0.0, 5});
  CHECK(r.log.empty());
  CHECK(all_bracketed(r.trees) == all_bracketed(c.trees));
}

TEST_CASE("corruption preserves syntax and replays against the pool") {
  const auto c = nonce2k();
  const auto pool = build_pool(c.deps);
  const auto oracle = group_by(c.deps);
  for (double fraction : {1.0 / 3.0, 2.0 / 3.0}) {
    const auto r = corrupt(c.trees, c.deps, pool, {fraction, 11});
    CHECK(r.total_tokens == 2000);
    CHECK(r.target == static_cast<std::size_t>(fraction * 2000 + 1e-9));
    CHECK(r.log.size() <= r.target);
    std::set<std::pair<std::string, int>> seen;
    for (const auto& rep : r.log) {
      CHECK(rep.old_form != rep.new_form);
      CHECK(seen.insert({rep.sentence_id, rep.token_index}).second);
      const std::size_t s = std::stoul(rep.sentence_id);
      const auto& before = c.deps[s];
      const auto& after = r.deps[s];
      CHECK(after.tokens[static_cast<std::size_t>(rep.token_index)].form == rep.new_form);
      CHECK(before.tokens[static_cast<std::size_t>(rep.token_index)].form == rep.old_form);
      std::multiset<std::string> kids;
      for (std::size_t u = 0; u < before.tokens.size(); ++u)
        if (before.heads[u] == rep.token_index + 1) kids.insert(before.deprels[u]);
      std::string joined;
      for (const auto& d : kids) joined += d + "|";
      const auto& t = before.tokens[static_cast<std::size_t>(rep.token_index)];
      const auto it = oracle.find({t.pos, before.deprels[static_cast<std::size_t>(rep.token_index)], joined});
      REQUIRE(it != oracle.end());
      CHECK(it->second.count(rep.new_form) == 1);
    }
    std::size_t changed = 0;
    for (std::size_t s = 0; s < c.deps.size(); ++s) {
      CHECK(r.deps[s].heads == c.deps[s].heads);
      CHECK(r.deps[s].deprels == c.deps[s].deprels);
      for (std::size_t k = 0; k < c.deps[s].tokens.size(); ++k) {
        CHECK(r.deps[s].tokens[k].pos == c.deps[s].tokens[k].pos);
        changed += r.deps[s].tokens[k].form != c.deps[s].tokens[k].form;
      }
      // Same skeleton: blank out forms on both sides and compare.
      auto a = c.trees[s], b = r.trees[s];
      for (auto& tok : a.tokens) tok.form = "_";
      for (auto& tok : b.tokens) tok.form = "_";
      CHECK(to_bracketed(a) == to_bracketed(b));
    }
    CHECK(changed == r.log.size());
  }
}

TEST_CASE("corruption is deterministic per seed") {
  const auto c = nonce2k();
  const auto pool = build_pool(c.deps);
  const auto a = corrupt(c.trees, c.deps, pool, {1.0 / 3.0, 3});
  const auto b = corrupt(c.trees, c.deps, pool, {1.0 / 3.0, 3});
  const auto other = corrupt(c.trees, c.deps, pool, {1.0 / 3.0, 4});
  CHECK(all_bracketed(a.trees) == all_bracketed(b.trees));
  CHECK(all_bracketed(a.trees) != all_bracketed(other.trees));
  const auto dir = fixtures::scratch_dir("nonce_determinism");
  write_replacement_log(dir + "/a.tsv", a);
  write_replacement_log(dir + "/b.tsv", b);
  CHECK(fixtures::read_file(dir + "/a.tsv") == fixtures::read_file(dir + "/b.tsv"));
  CHECK(fixtures::read_file(dir + "/a.tsv").rfind("# total_tokens=2000 target=666 replaced=", 0) == 0);
}

TEST_CASE("forms come only from the pool's own split") {
  auto c = nonce2k();
  std::vector<DepSentence> train(c.deps.begin(), c.deps.begin() + 120);
  std::vector<DepSentence> eval_deps(c.deps.begin() + 120, c.deps.end());
  std::vector<ConstTree> eval_trees(c.trees.begin() + 120, c.trees.end());
  const auto pool = build_pool(eval_deps);
  const auto train_forms = group_by(train);
  const auto eval_forms = group_by(eval_deps);
  std::set<std::string> train_only;
  for (const auto& [k, forms] : train_forms)
    for (const auto& [f, n] : forms) train_only.insert(f);
  for (const auto& [k, forms] : eval_forms)
    for (const auto& [f, n] : forms) train_only.erase(f);
  REQUIRE(!train_only.empty());
  const auto r = corrupt(eval_trees, eval_deps, pool, {2.0 / 3.0, 9});
  CHECK(!r.log.empty());
  for (const auto& rep : r.log) CHECK(train_only.count(rep.new_form) == 0);
}

TEST_CASE("type sampling draws uniformly over alternatives") {
  ReplacementPool pool;
  const DepContext ctx{"NN", "root", {}};
  for (int k = 0; k < 98; ++k) pool.add(ctx, "common");
  pool.add(ctx, "rare");
  pool.add(ctx, "own");
  pool.finalize();
  DepSentence d;
  d.tokens = {{0, "own", "NN"}};
  d.heads = {0};
  d.deprels = {"root"};
  const auto t = fixtures::parse_one("(S (NN own))");
  std::map<std::string, int> by_type, by_occurrence;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    ++by_type[corrupt({t}, {d}, pool, {1.0, seed, PoolSampling::kType}).log.at(0).new_form];
    ++by_occurrence[corrupt({t}, {d}, pool, {1.0, seed, PoolSampling::kOccurrence}).log.at(0).new_form];
  }
  CHECK(by_type.count("own") == 0);
  CHECK(by_type["rare"] > 850);
  CHECK(by_type["rare"] < 1150);
  CHECK(by_occurrence["rare"] < 60);
}

TEST_CASE("tokens without alternatives are skipped and the quota refilled") {
  DepSentence d;
  d.tokens = {{0, "a", "DT"}, {1, "b", "NN"}, {2, "c", "VB"}};
  d.heads = {2, 3, 0};
  d.deprels = {"det", "nsubj", "root"};
  const auto t = fixtures::parse_one("(S (NP (DT a) (NN b)) (VP (VB c)))");
  ReplacementPool pool;
  pool.add(dep_context(d, 0), "a");
  pool.add(dep_context(d, 1), "b");
  pool.add(dep_context(d, 2), "c");
  pool.add(dep_context(d, 2), "d");
  pool.finalize();
  const auto r = corrupt({t}, {d}, pool, {2.0 / 3.0, 1});
  CHECK(r.target == 2);
  REQUIRE(r.log.size() == 1);  // only "c" has an alternative
  CHECK(r.log[0].new_form == "d");
}

TEST_CASE("null elements stay in the tree and are skipped when aligning") {
  ReadOptions o;
  o.remove_punct = false;
  o.remove_null = false;
  const auto t = parse_const_treebank("(S (NP-SBJ (-NONE- *)) (VP (VB go) (ADVP (RB now))))", o)[0];
  DepSentence d;
  d.tokens = {{0, "go", "VB"}, {1, "now", "RB"}};
  d.heads = {0, 1};
  d.deprels = {"root", "advmod"};
  DepSentence other = d;
  other.tokens = {{0, "went", "VB"}, {1, "now", "RB"}};
  const auto pool = build_pool({d, other});
  const auto r = corrupt({t}, {d}, pool, {1.0, 2});
  REQUIRE(r.log.size() == 1);
  CHECK(r.log[0].token_index == 0);
  CHECK(r.trees[0].tokens[1].form == "went");
  CHECK(r.trees[0].tokens[0].pos == "-NONE-");
}

TEST_CASE("errors") {
  const auto c = nonce2k();
  const auto pool = build_pool(c.deps);
  CHECK_THROWS_AS(corrupt(c.trees, c.deps, pool, {1.5, 1}), std::invalid_argument);
  auto shifted = c.deps;
  std::swap(shifted[3], shifted[4]);
  try {
    corrupt(c.trees, shifted, pool, {0.5, 1});
    FAIL("expected alignment error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "alignment error in sentence 3");
  }
}
