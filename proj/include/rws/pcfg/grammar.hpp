#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rws/rng.hpp"

namespace rws::pcfg {

using Sentence = std::vector<std::size_t>;  // terminal ids

struct Symbol {
  bool terminal = false;
  std::size_t id = 0;
  friend bool operator==(const Symbol&, const Symbol&) = default;
};

struct Production {
  std::vector<Symbol> rhs;
  double prob = 0.0;
};

// Rule file format, one production per line:
//   LHS -> sym1 sym2 ... : prob
// '#' starts a comment. The first LHS is the start symbol; every LHS is a
// non-terminal. An optional line `%terminals w1 w2 ...` declares the
// terminals, after which any other non-LHS symbol is an error; without it
// every non-LHS symbol is a terminal.
class Grammar {
 public:
  static Grammar parse(std::string_view text);
  static Grammar load(const std::filesystem::path& path);

  std::size_t num_terminals() const { return terminals_.size(); }
  std::size_t num_nonterminals() const { return nonterminals_.size(); }
  std::size_t start() const { return start_; }
  const std::string& terminal(std::size_t id) const { return terminals_.at(id); }
  const std::string& nonterminal(std::size_t id) const { return nonterminals_.at(id); }
  std::size_t terminal_id(std::string_view word) const;  // throws GrammarError
  std::size_t nonterminal_id(std::string_view name) const;

  const std::vector<Production>& productions(std::size_t nt) const { return productions_.at(nt); }
  std::size_t num_rules(std::size_t nt) const { return productions_.at(nt).size(); }
  std::size_t max_rules() const;
  std::size_t total_rules() const;
  // Offset of nt's first rule in a flat numbering of all rules.
  std::size_t rule_offset(std::size_t nt) const { return offsets_.at(nt); }
  std::vector<double> probs(std::size_t nt) const;

  // Rules used once the expansion budget is spent: those whose non-terminals
  // all have a strictly shorter minimal derivation than nt, and among them
  // the ones with the fewest non-terminals. Always non-empty.
  const std::vector<std::size_t>& forcing_rules(std::size_t nt) const { return forcing_.at(nt); }

  Sentence parse_sentence(std::string_view words) const;
  std::string sentence_text(const Sentence& s) const;

 private:
  void finalize();

  std::vector<std::string> terminals_, nonterminals_;
  std::vector<std::vector<Production>> productions_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<std::size_t>> forcing_;
  std::size_t start_ = 0;
};

// Per non-terminal rule probabilities (a learned model or the true grammar).
using RuleProbs = std::vector<std::vector<double>>;
RuleProbs true_probs(const Grammar& g);

// Leftmost derivation in pre-order: step i expands the non-terminal on top of
// the pending stack. Steps past the expansion budget are forced.
struct ParseTree {
  struct Step {
    std::size_t nonterminal = 0;
    std::size_t rule = 0;
    bool forced = false;
  };
  std::vector<Step> steps;

  bool forced() const;
};

// Ancestral sample with probabilities `probs` (default: the grammar's).
ParseTree sample_tree(const Grammar& g, const RuleProbs& probs, Rng& rng,
                      std::size_t max_expansions = 50);

// Sum of log rule probabilities along the derivation; forcing is a property
// of the sampler, not of the model, so forced steps count the same way.
double tree_log_prob(const Grammar& g, const RuleProbs& probs, const ParseTree& t);

// Throws GrammarError if the steps do not form a complete derivation.
void validate_tree(const Grammar& g, const ParseTree& t);

Sentence yield(const Grammar& g, const ParseTree& t);
std::string bracketed(const Grammar& g, const ParseTree& t);

// Rule usage counts, counts[nt][rule].
std::vector<std::vector<double>> rule_counts(const Grammar& g, const ParseTree& t);

// Word-level edit distance with unit costs.
std::size_t levenshtein(std::span<const std::size_t> a, std::span<const std::size_t> b);

// log p(x | z) = -L(x, s(z))^2.
double relaxed_log_likelihood(const Sentence& x, const Sentence& produced);

// Mean over non-terminals of KL(true || learned). +inf when learned puts zero
// mass where the truth does not.
double production_kl(const RuleProbs& learned, const RuleProbs& truth);

}  // namespace rws::pcfg
