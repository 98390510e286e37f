#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rws/ad/nn.hpp"
#include "rws/pcfg/grammar.hpp"

namespace rws::pcfg {

struct NetSizes {
  std::size_t word = 16;
  std::size_t sentence_hidden = 64;
  std::size_t decision_hidden = 64;
  std::size_t rule = 16;
  std::size_t address = 16;
};

// Proposal over leftmost derivations given a sentence.
//
// An Elman RNN over word embeddings encodes the sentence. A second Elman RNN
// takes one step per expansion, with input [sentence code; embedding of the
// previous rule; embedding of the non-terminal being expanded], and a head per
// non-terminal turns its state into logits over that non-terminal's rules.
// Past the expansion budget the logits are restricted to the grammar's
// forcing rules and renormalized.
//
// Parameter order: word embeddings [V,w]; encoder Wx [w,hs], Wh [hs,hs],
// b [hs]; rule embeddings [rules+1, r] (row 0 is "no previous rule", rule j
// of non-terminal n is row rule_offset(n)+j+1); address embeddings [N, a];
// decision Wx [hs+r+a, hd], Wh [hd,hd], b [hd]; output W [hd, N*max_rules],
// b [N*max_rules], where non-terminal n owns columns n*max_rules onward.
class ParseInferenceNet {
 public:
  static ParseInferenceNet make(const Grammar& g, Rng& rng, NetSizes sizes = {});

  const ad::Params& params() const { return params_; }
  ad::Params& params() { return params_; }
  const NetSizes& sizes() const { return sizes_; }

  // [S, sentence_hidden]
  ad::Var encode(std::span<const ad::Var> phi, std::span<const Sentence> xs) const;

  struct Proposal {
    std::vector<ParseTree> trees;  // particle p explains xs[p / K]
    ad::Var log_q;                 // [xs.size() * K]
  };
  Proposal propose(std::span<const ad::Var> phi, std::span<const Sentence> xs, std::size_t K,
                   Rng& rng, std::size_t max_expansions = 50) const;

  // log q(trees[i] | xs[i]), [xs.size()].
  ad::Var score(std::span<const ad::Var> phi, std::span<const Sentence> xs,
                std::span<const ParseTree> trees, std::size_t max_expansions = 50) const;

 private:
  Proposal run(std::span<const ad::Var> phi, std::span<const Sentence> xs, std::size_t K,
               Rng* rng, std::span<const ParseTree> given, std::size_t max_expansions) const;

  Grammar grammar_;
  NetSizes sizes_;
  ad::Params params_;
};

}  // namespace rws::pcfg
