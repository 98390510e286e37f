#include "rws/pcfg/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "rws/dist/distributions.hpp"
#include "rws/error.hpp"

namespace rws::pcfg {

namespace {

constexpr std::size_t kNoHeight = std::numeric_limits<std::size_t>::max();

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw GrammarError("line " + std::to_string(line) + ": " + what);
}

struct RawRule {
  std::string lhs;
  std::vector<std::string> rhs;
  double prob;
  std::size_t line;
};

}  // namespace

Grammar Grammar::parse(std::string_view text) {
  std::vector<RawRule> raw;
  std::vector<std::string> declared;
  bool has_declaration = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto words = split_words(line);
    if (words.empty()) continue;
    if (words[0] == "%terminals") {
      if (has_declaration) fail(line_no, "duplicate %terminals line");
      has_declaration = true;
      declared.assign(words.begin() + 1, words.end());
      if (declared.empty()) fail(line_no, "%terminals declares nothing");
      continue;
    }
    const auto arrow = line.find("->");
    const auto colon = line.rfind(':');
    if (arrow == std::string::npos) fail(line_no, "expected 'LHS -> symbols : prob'");
    if (colon == std::string::npos || colon < arrow) fail(line_no, "missing ': prob'");
    auto lhs = split_words(std::string_view(line).substr(0, arrow));
    if (lhs.size() != 1) fail(line_no, "left-hand side must be a single symbol");
    auto rhs = split_words(std::string_view(line).substr(arrow + 2, colon - arrow - 2));
    if (rhs.empty()) fail(line_no, "empty right-hand side");
    auto prob_words = split_words(std::string_view(line).substr(colon + 1));
    if (prob_words.size() != 1) fail(line_no, "expected one probability after ':'");
    double p = 0.0;
    try {
      std::size_t used = 0;
      p = std::stod(prob_words[0], &used);
      if (used != prob_words[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(line_no, "bad probability '" + prob_words[0] + "'");
    }
    if (!(p > 0.0 && p <= 1.0)) fail(line_no, "probability must lie in (0, 1]");
    raw.push_back({lhs[0], std::move(rhs), p, line_no});
  }
  if (raw.empty()) throw GrammarError("grammar has no productions");

  Grammar g;
  std::map<std::string, std::size_t> nt_ids, t_ids;
  for (const auto& r : raw) {
    if (nt_ids.emplace(r.lhs, g.nonterminals_.size()).second) g.nonterminals_.push_back(r.lhs);
  }
  for (const auto& w : declared) {
    if (nt_ids.contains(w)) throw GrammarError("'" + w + "' is declared terminal but has rules");
    if (t_ids.emplace(w, g.terminals_.size()).second) g.terminals_.push_back(w);
  }
  g.productions_.resize(g.nonterminals_.size());
  for (const auto& r : raw) {
    Production prod{{}, r.prob};
    for (const auto& s : r.rhs) {
      if (auto it = nt_ids.find(s); it != nt_ids.end()) {
        prod.rhs.push_back({false, it->second});
      } else if (auto jt = t_ids.find(s); jt != t_ids.end()) {
        prod.rhs.push_back({true, jt->second});
      } else if (has_declaration) {
        fail(r.line, "undeclared symbol '" + s + "'");
      } else {
        t_ids.emplace(s, g.terminals_.size());
        g.terminals_.push_back(s);
        prod.rhs.push_back({true, g.terminals_.size() - 1});
      }
    }
    g.productions_[nt_ids.at(r.lhs)].push_back(std::move(prod));
  }
  for (std::size_t n = 0; n < g.nonterminals_.size(); ++n) {
    double total = 0.0;
    for (const auto& p : g.productions_[n]) total += p.prob;
    if (std::abs(total - 1.0) > 1e-9) {
      throw GrammarError("probabilities of " + g.nonterminals_[n] + " sum to " +
                         std::to_string(total));
    }
  }
  g.finalize();
  return g;
}

Grammar Grammar::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GrammarError("cannot open grammar file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const GrammarError& e) {
    throw GrammarError(path.string() + ": " + e.what());
  }
}

void Grammar::finalize() {
  const std::size_t N = nonterminals_.size();
  offsets_.assign(N, 0);
  for (std::size_t n = 1; n < N; ++n) offsets_[n] = offsets_[n - 1] + productions_[n - 1].size();

  // Minimal derivation height by fixpoint iteration.
  std::vector<std::size_t> height(N, kNoHeight);
  auto rule_height = [&](const Production& p) {
    std::size_t h = 0;
    for (const auto& s : p.rhs) {
      if (s.terminal) continue;
      if (height[s.id] == kNoHeight) return kNoHeight;
      h = std::max(h, height[s.id]);
    }
    return h + 1;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t n = 0; n < N; ++n) {
      for (const auto& p : productions_[n]) {
        const std::size_t h = rule_height(p);
        if (h < height[n]) {
          height[n] = h;
          changed = true;
        }
      }
    }
  }
  forcing_.assign(N, {});
  for (std::size_t n = 0; n < N; ++n) {
    if (height[n] == kNoHeight) {
      throw GrammarError("non-terminal " + nonterminals_[n] + " has no terminating derivation");
    }
    std::size_t fewest = kNoHeight;
    for (std::size_t r = 0; r < productions_[n].size(); ++r) {
      const auto& p = productions_[n][r];
      if (rule_height(p) > height[n]) continue;
      const auto nts = static_cast<std::size_t>(
          std::count_if(p.rhs.begin(), p.rhs.end(), [](const Symbol& s) { return !s.terminal; }));
      if (nts < fewest) {
        fewest = nts;
        forcing_[n].clear();
      }
      if (nts == fewest) forcing_[n].push_back(r);
    }
  }
}

std::size_t Grammar::terminal_id(std::string_view word) const {
  auto it = std::find(terminals_.begin(), terminals_.end(), word);
  if (it == terminals_.end()) throw GrammarError("unknown word '" + std::string(word) + "'");
  return static_cast<std::size_t>(it - terminals_.begin());
}

std::size_t Grammar::nonterminal_id(std::string_view name) const {
  auto it = std::find(nonterminals_.begin(), nonterminals_.end(), name);
  if (it == nonterminals_.end()) {
    throw GrammarError("unknown non-terminal '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - nonterminals_.begin());
}

std::size_t Grammar::max_rules() const {
  std::size_t m = 0;
  for (const auto& p : productions_) m = std::max(m, p.size());
  return m;
}

std::size_t Grammar::total_rules() const {
  return offsets_.back() + productions_.back().size();
}

std::vector<double> Grammar::probs(std::size_t nt) const {
  std::vector<double> out;
  for (const auto& p : productions_.at(nt)) out.push_back(p.prob);
  return out;
}

Sentence Grammar::parse_sentence(std::string_view words) const {
  Sentence s;
  for (const auto& w : split_words(words)) s.push_back(terminal_id(w));
  return s;
}

std::string Grammar::sentence_text(const Sentence& s) const {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += terminal(s[i]);
  }
  return out;
}

RuleProbs true_probs(const Grammar& g) {
  RuleProbs p(g.num_nonterminals());
  for (std::size_t n = 0; n < p.size(); ++n) p[n] = g.probs(n);
  return p;
}

bool ParseTree::forced() const {
  return std::any_of(steps.begin(), steps.end(), [](const Step& s) { return s.forced; });
}

ParseTree sample_tree(const Grammar& g, const RuleProbs& probs, Rng& rng,
                      std::size_t max_expansions) {
  if (probs.size() != g.num_nonterminals()) throw ShapeError("rule probabilities per non-terminal");
  ParseTree t;
  std::vector<std::size_t> stack{g.start()};
  std::vector<double> logits;
  std::vector<std::size_t> candidates;
  while (!stack.empty()) {
    const std::size_t n = stack.back();
    stack.pop_back();
    const auto& p = probs[n];
    if (p.size() != g.num_rules(n)) throw ShapeError("rule probabilities of " + g.nonterminal(n));
    const bool forced = t.steps.size() >= max_expansions;
    candidates.clear();
    if (forced) {
      candidates = g.forcing_rules(n);
    } else {
      for (std::size_t r = 0; r < p.size(); ++r) candidates.push_back(r);
    }
    // A learned model may put zero mass on a rule; such rules are never drawn.
    logits.clear();
    std::vector<std::size_t> live;
    for (std::size_t r : candidates) {
      if (p[r] > 0.0) {
        live.push_back(r);
        logits.push_back(std::log(p[r]));
      }
    }
    if (live.empty()) {  // every forcing rule has zero mass: fall back to uniform
      live = candidates;
      logits.assign(live.size(), 0.0);
    }
    const std::size_t r = live[dist::sample_categorical(logits, rng)];
    t.steps.push_back({n, r, forced});
    const auto& rhs = g.productions(n)[r].rhs;
    for (auto it = rhs.rbegin(); it != rhs.rend(); ++it)
      if (!it->terminal) stack.push_back(it->id);
  }
  return t;
}

void validate_tree(const Grammar& g, const ParseTree& t) {
  std::vector<std::size_t> stack{g.start()};
  for (const auto& s : t.steps) {
    if (stack.empty()) throw GrammarError("derivation has steps after completion");
    if (stack.back() != s.nonterminal) throw GrammarError("derivation expands the wrong symbol");
    stack.pop_back();
    if (s.rule >= g.num_rules(s.nonterminal)) throw GrammarError("rule index out of range");
    const auto& rhs = g.productions(s.nonterminal)[s.rule].rhs;
    for (auto it = rhs.rbegin(); it != rhs.rend(); ++it)
      if (!it->terminal) stack.push_back(it->id);
  }
  if (!stack.empty()) throw GrammarError("incomplete derivation");
}

double tree_log_prob(const Grammar& g, const RuleProbs& probs, const ParseTree& t) {
  double lp = 0.0;
  for (const auto& s : t.steps) {
    if (s.rule >= g.num_rules(s.nonterminal)) throw GrammarError("rule index out of range");
    lp += std::log(probs.at(s.nonterminal).at(s.rule));
  }
  return lp;
}

namespace {

// Walks the derivation recursively from step `i`.
template <class Visit>
std::size_t walk(const Grammar& g, const ParseTree& t, std::size_t i, Visit&& visit) {
  if (i >= t.steps.size()) throw GrammarError("incomplete derivation");
  const auto& step = t.steps[i];
  visit.open(step);
  std::size_t next = i + 1;
  for (const auto& sym : g.productions(step.nonterminal).at(step.rule).rhs) {
    if (sym.terminal) {
      visit.word(sym.id);
    } else {
      if (next >= t.steps.size() || t.steps[next].nonterminal != sym.id)
        throw GrammarError("derivation expands the wrong symbol");
      next = walk(g, t, next, visit);
    }
  }
  visit.close();
  return next;
}

}  // namespace

Sentence yield(const Grammar& g, const ParseTree& t) {
  struct {
    Sentence out;
    void open(const ParseTree::Step&) {}
    void word(std::size_t w) { out.push_back(w); }
    void close() {}
  } v;
  if (walk(g, t, 0, v) != t.steps.size()) throw GrammarError("derivation has steps after completion");
  return v.out;
}

std::string bracketed(const Grammar& g, const ParseTree& t) {
  struct {
    const Grammar& g;
    std::string out;
    void open(const ParseTree::Step& s) {
      out += (out.empty() ? "(" : " (") + g.nonterminal(s.nonterminal);
    }
    void word(std::size_t w) { out += " " + g.terminal(w); }
    void close() { out += ")"; }
  } v{g, {}};
  if (walk(g, t, 0, v) != t.steps.size()) throw GrammarError("derivation has steps after completion");
  return v.out;
}

std::vector<std::vector<double>> rule_counts(const Grammar& g, const ParseTree& t) {
  std::vector<std::vector<double>> c(g.num_nonterminals());
  for (std::size_t n = 0; n < c.size(); ++n) c[n].assign(g.num_rules(n), 0.0);
  for (const auto& s : t.steps) c.at(s.nonterminal).at(s.rule) += 1.0;
  return c;
}

std::size_t levenshtein(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double relaxed_log_likelihood(const Sentence& x, const Sentence& produced) {
  const auto d = static_cast<double>(levenshtein(x, produced));
  return -d * d;
}

double production_kl(const RuleProbs& learned, const RuleProbs& truth) {
  if (learned.size() != truth.size() || truth.empty()) throw ShapeError("production KL sizes");
  double total = 0.0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (learned[n].size() != truth[n].size()) throw ShapeError("production KL rule counts");
    for (std::size_t r = 0; r < truth[n].size(); ++r) {
      const double p = truth[n][r];
      if (p == 0.0) continue;
      if (learned[n][r] <= 0.0) return std::numeric_limits<double>::infinity();
      total += p * std::log(p / learned[n][r]);
    }
  }
  return total / static_cast<double>(truth.size());
}

}  // namespace rws::pcfg
