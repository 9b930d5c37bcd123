#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "constprobe/activations.hpp"
#include "constprobe/common.hpp"
#include "constprobe/treebank.hpp"

namespace fixtures {

// "The luxury auto maker ..." without its final period.
inline constexpr const char* kLuxuryAuto =
    "(S (NP-SBJ (DT The) (NN luxury) (NN auto) (NN maker)) (NP-TMP (JJ last) (NN year))"
    " (VP (VBD sold) (NP (CD 1,214) (NNS cars)) (PP-LOC (IN in) (NP (DT the) (NNP U.S.)))))";

// Subject phrase of dev sentence 23: gold and one reconstruction in which
// the SBAR and S nodes of the relative clause are conflated.
inline constexpr const char* kDaleLangGold =
    "(NP-SBJ (NP (NNP Dale) (NNP Lang)) (, ,) (SBAR (WHNP (WP who)) (S (NP-TMP (DT this) (NN week))"
    " (VP (VBD completed) (NP (NP (DT the) (NN acquisition)) (PP (IN of) (NP (NP (DT the) (NN publisher))"
    " (PP (IN of) (NP (NNP Ms.) (CC and) (NNP Sassy))))))))))";
inline constexpr const char* kDaleLangPredicted =
    "(NP (NP (NNP Dale) (NNP Lang)) (, ,) (SBAR (WHNP (WP who)) (NP (DT this) (NN week))"
    " (VP (VBD completed) (NP (NP (DT the) (NN acquisition)) (PP (IN of) (NP (NP (DT the) (NN publisher))"
    " (PP (IN of) (NP (NNP Ms.) (CC and) (NNP Sassy)))))))))";

std::string data_path(const std::string& name);
/// Fresh, empty directory below the test scratch area.
std::string scratch_dir(const std::string& name);

constprobe::ConstTree parse_one(const std::string& text, bool keep_punct = false);
std::vector<constprobe::ConstTree> toy_corpus();

/// Random canonical tree: every multiword phrase has at least two children,
/// single tokens carry at most one phrase above their preterminal.
std::string random_canonical_bracketed(constprobe::Rng& rng, int max_tokens, int max_depth);

/// Depth (root = 1) of the lowest common phrase of tokens i and j, found by
/// walking from the root; independent of the library's lca routines.
int ancestor_depth(const constprobe::ConstTree& tree, int i, int j);

/// Water-filling by bisection on the common scale: label y gets
/// min(supply_y, lambda * fs_y), then largest-remainder rounding.
std::vector<std::size_t> waterfill_oracle(const std::vector<std::size_t>& supply, std::size_t n);

/// Runs a shell command, returns its exit status and captured stdout.
int run(const std::string& command, std::string* output = nullptr);
std::string read_file(const std::string& path);

}  // namespace fixtures
