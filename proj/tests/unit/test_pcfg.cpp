#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "rws/error.hpp"
#include "rws/est/estimators.hpp"
#include "rws/pcfg/grammar.hpp"
#include "rws/pcfg/net.hpp"
#include "rws/pcfg/train.hpp"

using namespace rws;
using namespace rws::ad;
using namespace rws::pcfg;

namespace {

Grammar astronomers() { return Grammar::load(std::string(RWS_ASSET_DIR) + "/astronomers.pcfg"); }

// Five trees: S -> A -> a, S -> B -> b|c, S -> A B -> a b|c.
const char* kSmall =
    "S -> A : 0.3\n"
    "S -> B : 0.3\n"
    "S -> A B : 0.4\n"
    "A -> a : 1.0\n"
    "B -> b : 0.5\n"
    "B -> c : 0.5\n";

ParseTree tree_of(std::vector<std::pair<std::size_t, std::size_t>> steps) {
  ParseTree t;
  for (auto [n, r] : steps) t.steps.push_back({n, r, false});
  return t;
}

// (S (NP astronomers) (VP (V saw) (NP stars))) in the bundled grammar's
// numbering: S=0, NP=1, VP=2, PP=3, P=4, V=5.
ParseTree astronomers_saw_stars(const Grammar& g) {
  const auto S = g.nonterminal_id("S"), NP = g.nonterminal_id("NP"), VP = g.nonterminal_id("VP"),
             V = g.nonterminal_id("V");
  return tree_of({{S, 0}, {NP, 1}, {VP, 0}, {V, 0}, {NP, 4}});
}

// Every derivation with at most `budget` expansions.
void enumerate(const Grammar& g, std::vector<std::size_t> stack, ParseTree prefix,
               std::size_t budget, std::vector<ParseTree>& out) {
  if (stack.empty()) {
    out.push_back(prefix);
    return;
  }
  if (prefix.steps.size() >= budget) return;
  const std::size_t n = stack.back();
  stack.pop_back();
  for (std::size_t r = 0; r < g.num_rules(n); ++r) {
    auto s = stack;
    const auto& rhs = g.productions(n)[r].rhs;
    for (auto it = rhs.rbegin(); it != rhs.rend(); ++it)
      if (!it->terminal) s.push_back(it->id);
    auto p = prefix;
    p.steps.push_back({n, r, false});
    enumerate(g, s, p, budget, out);
  }
}

// Recursive edit distance with memoization, independent of the rolling DP.
std::size_t edit_oracle(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) {
    if (i == 0) return j;
    if (j == 0) return i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min(d(i - 1, j) + 1, d(i, j - 1) + 1);
    best = std::min(best, d(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1));
    return memo[key] = best;
  };
  return d(a.size(), b.size());
}

// Scalar re-implementation of the proposal's log q for one sentence.
double naive_log_q(const ParseInferenceNet& net, const Grammar& g, const Sentence& x,
                   const ParseTree& tree, std::size_t max_expansions) {
  const auto& p = net.params();
  const auto sz = net.sizes();
  const std::size_t R = g.max_rules(), hs = sz.sentence_hidden, hd = sz.decision_hidden;
  std::vector<double> h(hs, 0.0);
  for (std::size_t w : x) {
    std::vector<double> next(hs);
    for (std::size_t j = 0; j < hs; ++j) {
      double a = p[3][j];
      for (std::size_t i = 0; i < sz.word; ++i) a += p[0].at(w, i) * p[1].at(i, j);
      for (std::size_t i = 0; i < hs; ++i) a += h[i] * p[2].at(i, j);
      next[j] = std::tanh(a);
    }
    h = next;
  }
  std::vector<double> d(hd, 0.0);
  std::size_t prev = 0;
  double total = 0.0;
  for (std::size_t s = 0; s < tree.steps.size(); ++s) {
    const auto [n, rule, forced] = tree.steps[s];
    std::vector<double> u(h);
    for (std::size_t i = 0; i < sz.rule; ++i) u.push_back(p[4].at(prev, i));
    for (std::size_t i = 0; i < sz.address; ++i) u.push_back(p[5].at(n, i));
    std::vector<double> next(hd);
    for (std::size_t j = 0; j < hd; ++j) {
      double a = p[8][j];
      for (std::size_t i = 0; i < u.size(); ++i) a += u[i] * p[6].at(i, j);
      for (std::size_t i = 0; i < hd; ++i) a += d[i] * p[7].at(i, j);
      next[j] = std::tanh(a);
    }
    d = next;
    std::vector<std::size_t> allowed;
    if (s >= max_expansions) {
      allowed = g.forcing_rules(n);
    } else {
      for (std::size_t r = 0; r < g.num_rules(n); ++r) allowed.push_back(r);
    }
    std::map<std::size_t, double> logit;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t r : allowed) {
      double a = p[10][n * R + r];
      for (std::size_t i = 0; i < hd; ++i) a += d[i] * p[9].at(i, n * R + r);
      logit[r] = a;
      m = std::max(m, a);
    }
    double z = 0.0;
    for (auto& [r, v] : logit) z += std::exp(v - m);
    total += logit.at(rule) - m - std::log(z);
    prev = g.rule_offset(n) + rule + 1;
  }
  return total;
}

}  // namespace

TEST_CASE("astronomers grammar loads with the published rule table") {
  Grammar g = astronomers();
  CHECK(g.num_nonterminals() == 6);
  CHECK(g.num_terminals() == 6);
  CHECK(g.nonterminal(g.start()) == "S");
  const auto np = g.probs(g.nonterminal_id("NP"));
  const std::vector<double> expected{0.4, 0.1, 0.18, 0.04, 0.18, 0.1};
  REQUIRE(np.size() == expected.size());
  for (std::size_t i = 0; i < np.size(); ++i) CHECK(np[i] == expected[i]);
  CHECK(g.probs(g.nonterminal_id("VP")) == std::vector<double>{0.7, 0.3});
  const auto& s = g.productions(g.start());
  REQUIRE(s.size() == 1);
  CHECK(s[0].prob == 1.0);
  CHECK(s[0].rhs == std::vector<Symbol>{{false, g.nonterminal_id("NP")}, {false, g.nonterminal_id("VP")}});
  CHECK(g.total_rules() == 12);
}

TEST_CASE("single-rule grammar") {
  Grammar g = Grammar::parse("S -> a : 1.0\n");
  CHECK(g.num_terminals() == 1);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    ParseTree t = sample_tree(g, true_probs(g), rng);
    CHECK(bracketed(g, t) == "(S a)");
    CHECK(yield(g, t) == Sentence{0});
    CHECK(tree_log_prob(g, true_probs(g), t) == 0.0);
  }
  auto net = ParseInferenceNet::make(g, rng);
  Tape tape;
  auto phi = bind_params(tape, net.params(), false);
  const std::vector<Sentence> xs{{0}, {0, 0, 0}};
  auto prop = net.propose(phi, xs, 3, rng);
  for (double v : prop.log_q.value().values()) CHECK(v == 0.0);
}

TEST_CASE("grammar errors") {
  auto message = [](const char* text) {
    try {
      Grammar::parse(text);
    } catch (const GrammarError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("S -> a : 0.5\nS -> b : 0.4\n").find("sum to") != std::string::npos);
  CHECK(message("# c\nS -> a : 1.0\nS a : 1.0\n").find("line 3") != std::string::npos);
  CHECK(message("S -> a : x\n").find("line 1") != std::string::npos);
  CHECK(message("S -> a\n").find("line 1") != std::string::npos);
  CHECK(message("S -> : 1.0\n").find("line 1") != std::string::npos);
  CHECK(message("%terminals a\nS -> a b : 1.0\n").find("undeclared symbol 'b'") !=
        std::string::npos);
  CHECK(message("S -> S : 1.0\n").find("no terminating derivation") != std::string::npos);
  CHECK(message("").find("no productions") != std::string::npos);
  CHECK_THROWS_AS(Grammar::load("/nonexistent/grammar.pcfg"), GrammarError);
  CHECK(message("S -> a : 1.0 # trailing comment\n") == "no error");
}

TEST_CASE("forcing rules terminate") {
  Grammar g = astronomers();
  CHECK(g.forcing_rules(g.nonterminal_id("NP")) == std::vector<std::size_t>{1, 2, 3, 4, 5});
  CHECK(g.forcing_rules(g.nonterminal_id("VP")) == std::vector<std::size_t>{0});
  CHECK(g.forcing_rules(g.nonterminal_id("S")) == std::vector<std::size_t>{0});
  Rng rng(2);
  std::size_t forced = 0;
  for (int i = 0; i < 2000; ++i) {
    ParseTree t = sample_tree(g, true_probs(g), rng, 5);
    validate_tree(g, t);
    forced += t.forced();
    for (std::size_t s = 0; s < t.steps.size(); ++s) CHECK(t.steps[s].forced == (s >= 5));
    CHECK(std::isfinite(tree_log_prob(g, true_probs(g), t)));
  }
  CHECK(forced > 0);
}

TEST_CASE("example tree log probability, yield and brackets") {
  Grammar g = astronomers();
  ParseTree t = astronomers_saw_stars(g);
  validate_tree(g, t);
  CHECK(tree_log_prob(g, true_probs(g), t) == doctest::Approx(std::log(0.0126)).epsilon(1e-14));
  CHECK(g.sentence_text(yield(g, t)) == "astronomers saw stars");
  CHECK(bracketed(g, t) == "(S (NP astronomers) (VP (V saw) (NP stars)))");
  CHECK(yield(g, t).size() == 3);

  ParseTree bad = t;
  bad.steps[1].rule = 9;
  CHECK_THROWS_AS(tree_log_prob(g, true_probs(g), bad), GrammarError);
  bad = t;
  bad.steps.pop_back();
  CHECK_THROWS_AS(validate_tree(g, bad), GrammarError);
  CHECK_THROWS_AS(yield(g, bad), GrammarError);
}

TEST_CASE("tree log probability matches a brute-force product over small trees") {
  Grammar g = astronomers();
  std::vector<ParseTree> trees;
  enumerate(g, {g.start()}, {}, 9, trees);
  REQUIRE(trees.size() > 20);
  const auto probs = true_probs(g);
  for (const auto& t : trees) {
    double product = 1.0;
    for (const auto& s : t.steps) product *= g.productions(s.nonterminal)[s.rule].prob;
    CHECK(std::abs(tree_log_prob(g, probs, t) - std::log(product)) < 1e-12);
    const auto y = yield(g, t);
    std::size_t leaves = 0;
    for (const auto& s : t.steps)
      for (const auto& sym : g.productions(s.nonterminal)[s.rule].rhs) leaves += sym.terminal;
    CHECK(y.size() == leaves);
  }
}

TEST_CASE("ancestral sampling statistics") {
  Grammar g = astronomers();
  const auto probs = true_probs(g);
  const std::size_t N = g.num_nonterminals();
  // Expected expansions of each non-terminal per tree solve
  // n = e_start + M^T n, M[a][b] = expected b-children of an a node.
  std::vector<std::vector<double>> A(N, std::vector<double>(N + 1, 0.0));
  for (std::size_t b = 0; b < N; ++b) {
    A[b][b] = 1.0;
    A[b][N] = b == g.start() ? 1.0 : 0.0;
  }
  for (std::size_t a = 0; a < N; ++a)
    for (const auto& prod : g.productions(a))
      for (const auto& s : prod.rhs)
        if (!s.terminal) A[s.id][a] -= prod.prob;
  for (std::size_t c = 0; c < N; ++c) {  // Gauss-Jordan
    std::size_t piv = c;
    for (std::size_t r = c; r < N; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (std::size_t r = 0; r < N; ++r) {
      if (r == c) continue;
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k <= N; ++k) A[r][k] -= f * A[c][k];
    }
  }
  std::vector<double> expected_nodes(N);
  for (std::size_t n = 0; n < N; ++n) expected_nodes[n] = A[n][N] / A[n][n];
  CHECK(expected_nodes[g.nonterminal_id("VP")] == doctest::Approx(1.0 / 0.7));
  CHECK(expected_nodes[g.nonterminal_id("NP")] == doctest::Approx(85.0 / 7.0));

  Rng rng(11);
  const std::size_t trees = 1000000;
  std::size_t hits = 0;
  std::vector<std::vector<double>> sum(N), sum_sq(N);
  for (std::size_t n = 0; n < N; ++n) sum[n] = sum_sq[n] = std::vector<double>(g.num_rules(n), 0.0);
  double len = 0.0;
  const Sentence target = g.parse_sentence("astronomers saw stars");
  for (std::size_t i = 0; i < trees; ++i) {
    ParseTree t = sample_tree(g, probs, rng, 100000);
    REQUIRE_FALSE(t.forced());
    const auto y = yield(g, t);
    hits += y == target;
    len += static_cast<double>(y.size());
    const auto c = rule_counts(g, t);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t r = 0; r < c[n].size(); ++r) {
        sum[n][r] += c[n][r];
        sum_sq[n][r] += c[n][r] * c[n][r];
      }
  }
  const double f = static_cast<double>(hits) / trees;
  CHECK(std::abs(f - 0.0126) < 3.0 * std::sqrt(0.0126 * (1 - 0.0126) / trees));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t r = 0; r < g.num_rules(n); ++r) {
      const double mean = sum[n][r] / trees;
      const double var = sum_sq[n][r] / trees - mean * mean;
      const double se = std::sqrt(var / trees);
      const double want = expected_nodes[n] * probs[n][r];
      if (se == 0.0) {
        CHECK(mean == doctest::Approx(want));
      } else {
        CHECK(std::abs(mean - want) < 3.5 * se);
      }
    }
  // Each NP, V and P node emits at most one word; terminal rules emit exactly one.
  double expected_len = 0.0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t r = 0; r < g.num_rules(n); ++r)
      for (const auto& s : g.productions(n)[r].rhs) expected_len += s.terminal * expected_nodes[n] * probs[n][r];
  CHECK(len / trees == doctest::Approx(expected_len).epsilon(0.01));
}

TEST_CASE("mean yield length is stable across seeds") {
  Grammar g = astronomers();
  std::vector<double> means;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    double len = 0.0;
    for (int i = 0; i < 20000; ++i) len += yield(g, sample_tree(g, true_probs(g), rng, 100000)).size();
    means.push_back(len / 20000);
  }
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  CHECK(*hi - *lo < 0.1 * *lo);
}

TEST_CASE("levenshtein") {
  const std::vector<std::size_t> ab{0, 1}, a{0};
  CHECK(levenshtein(ab, ab) == 0);
  CHECK(levenshtein(ab, a) == 1);
  CHECK(levenshtein({}, ab) == 2);
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> len(0, 8), word(0, 3);
  auto draw = [&] {
    std::vector<std::size_t> v(len(rng));
    for (auto& w : v) w = word(rng);
    return v;
  };
  for (int i = 0; i < 300; ++i) {
    auto x = draw(), y = draw(), z = draw();
    const auto dxy = levenshtein(x, y);
    CHECK(dxy == edit_oracle(x, y));
    CHECK(dxy == levenshtein(y, x));
    CHECK(levenshtein(x, z) <= dxy + levenshtein(y, z));
  }
}

TEST_CASE("relaxed likelihood") {
  const Sentence x{0, 1, 2};
  CHECK(relaxed_log_likelihood(x, x) == 0.0);
  CHECK(relaxed_log_likelihood(x, {0, 1}) == -1.0);
  CHECK(std::exp(relaxed_log_likelihood(x, {0, 1})) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(relaxed_log_likelihood(x, {}) == -9.0);
}

TEST_CASE("production KL") {
  const RuleProbs truth{{0.5, 0.5}};
  CHECK(production_kl(truth, truth) == 0.0);
  CHECK(production_kl({{0.9, 0.1}}, truth) == doctest::Approx(0.510826).epsilon(1e-6));
  CHECK(production_kl({{1.0, 0.0}}, truth) == std::numeric_limits<double>::infinity());
  const RuleProbs t2{{0.2, 0.8}, {1.0}, {0.1, 0.3, 0.6}};
  const RuleProbs l2{{0.4, 0.6}, {1.0}, {0.3, 0.3, 0.4}};
  const RuleProbs t2r{{0.1, 0.3, 0.6}, {0.2, 0.8}, {1.0}};
  const RuleProbs l2r{{0.3, 0.3, 0.4}, {0.4, 0.6}, {1.0}};
  CHECK(production_kl(l2, t2) == doctest::Approx(production_kl(l2r, t2r)).epsilon(1e-15));
}

TEST_CASE("production KL at uniform logits has a closed form") {
  Grammar g = astronomers();
  const double np = 0.4 * std::log(0.4 * 6) + 0.1 * std::log(0.1 * 6) * 2 +
                    0.18 * std::log(0.18 * 6) * 2 + 0.04 * std::log(0.04 * 6);
  const double vp = 0.7 * std::log(1.4) + 0.3 * std::log(0.6);
  const double want = (np + vp) / 6.0;
  CHECK(production_kl(rule_probs(uniform_logits(g)), true_probs(g)) ==
        doctest::Approx(want).epsilon(1e-14));

  PcfgConfig cfg;
  cfg.iterations = 0;
  cfg.metric_samples = 5;
  auto run = train_pcfg(cfg, g);
  REQUIRE(run.rows.size() == 1);
  CHECK(run.rows[0].production_kl == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("proposal log q matches a scalar replay") {
  Grammar g = astronomers();
  Rng rng(21);
  NetSizes small{5, 7, 6, 3, 4};
  auto net = ParseInferenceNet::make(g, rng, small);
  Tape tape;
  auto phi = bind_params(tape, net.params(), false);
  const std::vector<Sentence> xs{g.parse_sentence("astronomers saw stars with telescopes"),
                                 g.parse_sentence("stars saw ears"), {}};
  for (std::size_t cap : {std::size_t{50}, std::size_t{3}}) {
    auto prop = net.propose(phi, xs, 8, rng, cap);
    std::vector<Sentence> owners;
    for (std::size_t p = 0; p < prop.trees.size(); ++p) {
      validate_tree(g, prop.trees[p]);
      owners.push_back(xs[p / 8]);
      const double lq = prop.log_q.value()[p];
      CHECK(std::isfinite(lq));
      CHECK(std::abs(lq - naive_log_q(net, g, xs[p / 8], prop.trees[p], cap)) < 1e-10);
      if (cap == 3) CHECK(prop.trees[p].forced() == (prop.trees[p].steps.size() > 3));
    }
    auto replay = net.score(phi, owners, prop.trees, cap);
    for (std::size_t p = 0; p < prop.trees.size(); ++p)
      CHECK(std::abs(replay.value()[p] - prop.log_q.value()[p]) < 1e-10);
  }
}

TEST_CASE("scoring rejects inconsistent trees") {
  Grammar g = astronomers();
  Rng rng(4);
  auto net = ParseInferenceNet::make(g, rng);
  Tape tape;
  auto phi = bind_params(tape, net.params(), false);
  const std::vector<Sentence> xs{g.parse_sentence("astronomers saw stars")};
  ParseTree t = astronomers_saw_stars(g);
  std::vector<ParseTree> trees{t};
  CHECK_NOTHROW(net.score(phi, xs, trees));
  trees[0].steps.pop_back();
  CHECK_THROWS_AS(net.score(phi, xs, trees), GrammarError);
  trees[0] = t;
  trees[0].steps.push_back(t.steps.back());
  CHECK_THROWS_AS(net.score(phi, xs, trees), GrammarError);
  // VP -> VP PP is not a forcing rule.
  trees[0] = tree_of({{0, 0}, {1, 1}, {2, 1}, {2, 0}, {5, 0}, {1, 4}, {3, 0}, {4, 0}, {1, 5}});
  validate_tree(g, trees[0]);
  CHECK_NOTHROW(net.score(phi, xs, trees, 50));
  CHECK_THROWS_AS(net.score(phi, xs, trees, 2), GrammarError);
}

TEST_CASE("proposal distribution matches per-step softmax products by enumeration") {
  Grammar g = Grammar::parse(kSmall);
  Rng rng(8);
  auto net = ParseInferenceNet::make(g, rng, NetSizes{4, 5, 5, 3, 3});
  std::vector<ParseTree> trees;
  enumerate(g, {g.start()}, {}, 10, trees);
  REQUIRE(trees.size() == 5);
  Tape tape;
  auto phi = bind_params(tape, net.params(), false);
  const std::vector<Sentence> xs{g.parse_sentence("a b")};
  std::vector<double> q;
  double total = 0.0;
  for (const auto& t : trees) {
    const std::vector<ParseTree> one{t};
    q.push_back(std::exp(net.score(phi, xs, one).item()));
    total += q.back();
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  const std::size_t n = 40000;
  auto prop = net.propose(phi, xs, n, rng);
  std::map<std::string, double> freq;
  for (const auto& t : prop.trees) freq[bracketed(g, t)] += 1.0 / n;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const double se = std::sqrt(q[i] * (1 - q[i]) / n);
    CHECK(std::abs(freq[bracketed(g, trees[i])] - q[i]) < 4 * se + 1e-12);
  }
}

TEST_CASE("sleep-loss proxy") {
  // One parse per sentence and a single-rule grammar: -log q = 0 exactly.
  Grammar one = Grammar::parse("S -> a b : 1.0\n");
  Rng rng(3);
  auto net1 = ParseInferenceNet::make(one, rng);
  std::vector<ParseTree> t1(4, tree_of({{0, 0}}));
  std::vector<Sentence> x1(4, Sentence{0, 1});
  CHECK(sleep_loss_proxy(net1, t1, x1, 50) == 0.0);

  // Two parses of the same sentence: the cross-entropy is at least H(z|x) = ln 2.
  Grammar amb = Grammar::parse("S -> X : 0.5\nS -> Y : 0.5\nX -> a : 1.0\nY -> a : 1.0\n");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng r(seed);
    auto net = ParseInferenceNet::make(amb, r);
    std::vector<ParseTree> trees;
    std::vector<Sentence> xs;
    for (int i = 0; i < 2000; ++i) {
      trees.push_back(sample_tree(amb, true_probs(amb), r));
      xs.push_back(yield(amb, trees.back()));
    }
    // Exact expectation over the two parses.
    const std::vector<Sentence> a{{0}};
    Tape tape;
    auto phi = bind_params(tape, net.params(), false);
    const std::vector<ParseTree> tx{tree_of({{0, 0}, {1, 0}})}, ty{tree_of({{0, 1}, {2, 0}})};
    const double exact = -0.5 * (net.score(phi, a, tx).item() + net.score(phi, a, ty).item());
    CHECK(exact >= std::log(2.0) - 1e-12);
    const double proxy = sleep_loss_proxy(net, trees, xs, 50);
    // The two per-sample values differ by |log q(X) - log q(Y)|.
    const double spread = std::abs(net.score(phi, a, tx).item() - net.score(phi, a, ty).item());
    CHECK(std::abs(proxy - exact) < 4 * 0.5 * spread / std::sqrt(2000.0) + 1e-12);
  }
}

TEST_CASE("sleep-loss proxy standard error scales as one over root n") {
  Grammar g = astronomers();
  Rng rng(17);
  auto net = ParseInferenceNet::make(g, rng, NetSizes{4, 6, 6, 3, 3});
  auto spread = [&](std::size_t n) {
    std::vector<double> v;
    for (int rep = 0; rep < 60; ++rep) {
      std::vector<ParseTree> trees;
      std::vector<Sentence> xs;
      for (std::size_t i = 0; i < n; ++i) {
        trees.push_back(sample_tree(g, true_probs(g), rng));
        xs.push_back(yield(g, trees.back()));
      }
      v.push_back(sleep_loss_proxy(net, trees, xs, 50));
    }
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
  };
  const double ratio = spread(40) / spread(80);
  CHECK(ratio > std::sqrt(2.0) * 0.7);
  CHECK(ratio < std::sqrt(2.0) * 1.4);
}

TEST_CASE("tree log prior is differentiable in the rule logits") {
  Grammar g = astronomers();
  Rng rng(9);
  Params logits = uniform_logits(g);
  std::normal_distribution<double> n01;
  for (auto& l : logits)
    for (double& v : l.values()) v = n01(rng);
  std::vector<ParseTree> trees;
  for (int i = 0; i < 6; ++i) trees.push_back(sample_tree(g, true_probs(g), rng));
  Tape t;
  auto theta = bind_params(t, logits, true);
  Var lp = trees_log_prior(theta, g, trees);
  const auto probs = rule_probs(logits);
  for (std::size_t i = 0; i < trees.size(); ++i)
    CHECK(lp.value()[i] == doctest::Approx(tree_log_prob(g, probs, trees[i])).epsilon(1e-12));
  // d/dlogit_r sum_i log p(tree_i) = count_r - (total uses of n) * p_r.
  Gradients grads = t.backward(sum(lp));
  for (std::size_t n = 0; n < g.num_nonterminals(); ++n) {
    if (g.num_rules(n) == 1) continue;
    std::vector<double> counts(g.num_rules(n), 0.0);
    for (const auto& tr : trees)
      for (std::size_t r = 0; r < counts.size(); ++r) counts[r] += rule_counts(g, tr)[n][r];
    const double uses = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (std::size_t r = 0; r < counts.size(); ++r)
      CHECK(grads[theta[n]][r] == doctest::Approx(counts[r] - uses * probs[n][r]).epsilon(1e-10));
  }
}

TEST_CASE("pcfg config validation") {
  PcfgConfig c;
  for (Method m : {Method::ws, Method::ww, Method::vimco, Method::reinforce}) {
    c.method = m;
    CHECK_NOTHROW(c.validate());
  }
  for (Method m : {Method::relax, Method::concrete, Method::delta_ww}) {
    c.method = m;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  c = PcfgConfig{};
  c.method = Method::vimco;
  c.K = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PcfgConfig{};
  c.max_expansions = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("short training runs keep rule probabilities on the simplex") {
  Grammar g = astronomers();
  for (Method m : {Method::ws, Method::ww, Method::vimco, Method::reinforce}) {
    PcfgConfig c;
    c.method = m;
    c.K = 3;
    c.iterations = 12;
    c.cadence = 5;
    c.metric_samples = 10;
    c.net = NetSizes{4, 8, 8, 4, 4};
    PcfgTrainer tr(c, g);
    const Params before = tr.theta;
    for (int i = 0; i < 12; ++i) {
      tr.step();
      for (const auto& p : rule_probs(tr.theta)) {
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : p) CHECK(v > 0.0);
      }
    }
    CHECK(tr.theta != before);
    auto run = train_pcfg(c, g);
    std::vector<std::size_t> its;
    for (const auto& r : run.rows) its.push_back(r.iteration);
    CHECK(its == std::vector<std::size_t>{0, 5, 10, 12});
    CHECK_FALSE(run.capped);
  }
}

TEST_CASE("training runs are reproducible and capped by wall clock") {
  Grammar g = astronomers();
  PcfgConfig c;
  c.K = 2;
  c.iterations = 6;
  c.cadence = 3;
  c.metric_samples = 5;
  c.net = NetSizes{4, 8, 8, 4, 4};
  auto a = train_pcfg(c, g), b = train_pcfg(c, g);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].production_kl == b.rows[i].production_kl);
    CHECK(a.rows[i].sleep_loss_proxy == b.rows[i].sleep_loss_proxy);
  }
  c.iterations = 1000000;
  c.wallclock_cap_s = 0.05;
  auto capped = train_pcfg(c, g);
  CHECK(capped.capped);
  CHECK(capped.rows.back().wallclock_s >= 0.05);
}

TEST_CASE("fixed corpus mode") {
  Grammar g = astronomers();
  PcfgConfig c;
  c.K = 2;
  c.corpus_size = 3;
  c.metric_samples = 5;
  c.net = NetSizes{4, 8, 8, 4, 4};
  PcfgTrainer tr(c, g);
  CHECK(tr.corpus.size() == 3);
  CHECK_NOTHROW(tr.step());
}

TEST_CASE("posterior dump") {
  Grammar g = astronomers();
  Rng rng(6);
  auto net = ParseInferenceNet::make(g, rng, NetSizes{4, 8, 8, 4, 4});
  const Sentence x = g.parse_sentence("astronomers saw stars with telescopes");
  auto samples = posterior_samples(net, g, uniform_logits(g), x, 50, 50, rng);
  std::size_t total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += samples[i].count;
    if (i) CHECK(samples[i - 1].count >= samples[i].count);
    CHECK(samples[i].tree.rfind("(S ", 0) == 0);
  }
  CHECK(total == 50);
  const auto text = format_posterior(samples, 50);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(samples.size()));
}

TEST_CASE("pcfg csv") {
  PcfgConfig c;
  c.method = Method::reinforce;
  c.K = 5;
  c.seed = 2;
  CHECK(pcfg_csv_header() == "iteration,method,K,seed,production_kl,sleep_loss_proxy,wallclock_s");
  CHECK(pcfg_csv_row(c, PcfgRow{100, 0.5, 2.25, 1.5}) == "100,reinforce,5,2,0.5,2.25,1.5");
}
