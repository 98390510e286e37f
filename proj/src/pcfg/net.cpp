#include "rws/pcfg/net.hpp"

#include <algorithm>

#include "rws/dist/distributions.hpp"
#include "rws/error.hpp"

namespace rws::pcfg {

using namespace rws::ad;

namespace {

// Parameter layout.
enum : std::size_t {
  kWordEmb,
  kEncWx,
  kEncWh,
  kEncB,
  kRuleEmb,
  kAddrEmb,
  kDecWx,
  kDecWh,
  kDecB,
  kOutW,
  kOutB,
  kNumParams
};

// Large enough that exp underflows to zero after log_softmax.
constexpr double kMasked = -1e9;

}  // namespace

ParseInferenceNet ParseInferenceNet::make(const Grammar& g, Rng& rng, NetSizes s) {
  ParseInferenceNet net;
  net.grammar_ = g;
  net.sizes_ = s;
  const std::size_t V = g.num_terminals();
  const std::size_t N = g.num_nonterminals();
  const std::size_t heads = N * g.max_rules();
  const std::size_t in = s.sentence_hidden + s.rule + s.address;
  auto& p = net.params_;
  p.resize(kNumParams);
  p[kWordEmb] = uniform_init({V, s.word}, 1, rng);
  p[kEncWx] = uniform_init({s.word, s.sentence_hidden}, s.word, rng);
  p[kEncWh] = uniform_init({s.sentence_hidden, s.sentence_hidden}, s.sentence_hidden, rng);
  p[kEncB] = uniform_init({s.sentence_hidden}, s.sentence_hidden, rng);
  // Row 0 stands for "no previous rule".
  p[kRuleEmb] = uniform_init({g.total_rules() + 1, s.rule}, 1, rng);
  p[kAddrEmb] = uniform_init({N, s.address}, 1, rng);
  p[kDecWx] = uniform_init({in, s.decision_hidden}, in, rng);
  p[kDecWh] = uniform_init({s.decision_hidden, s.decision_hidden}, s.decision_hidden, rng);
  p[kDecB] = uniform_init({s.decision_hidden}, s.decision_hidden, rng);
  p[kOutW] = uniform_init({s.decision_hidden, heads}, s.decision_hidden, rng);
  p[kOutB] = uniform_init({heads}, s.decision_hidden, rng);
  return net;
}

Var ParseInferenceNet::encode(std::span<const Var> phi, std::span<const Sentence> xs) const {
  if (phi.size() != kNumParams) throw ShapeError("parse net given the wrong number of parameters");
  Tape& t = phi[0].tape();
  const std::size_t S = xs.size();
  const std::size_t H = sizes_.sentence_hidden;
  std::size_t longest = 0;
  for (const auto& x : xs) longest = std::max(longest, x.size());
  Var h = t.constant(Tensor({S, H}, 0.0));
  std::vector<std::size_t> ids(S);
  for (std::size_t step = 0; step < longest; ++step) {
    Tensor keep({S, H}, 0.0), skip({S, H}, 0.0);
    for (std::size_t i = 0; i < S; ++i) {
      const bool live = step < xs[i].size();
      ids[i] = live ? xs[i][step] : 0;
      if (ids[i] >= grammar_.num_terminals()) throw GrammarError("word id out of range");
      std::fill_n(&(live ? keep : skip)[i * H], H, 1.0);
    }
    Var e = index_rows(phi[kWordEmb], ids);
    Var next = tanh(add(affine(e, phi[kEncWx], phi[kEncB]), matmul(h, phi[kEncWh])));
    h = add(mul(t.constant(std::move(keep)), next), mul(t.constant(std::move(skip)), h));
  }
  return h;
}

ParseInferenceNet::Proposal ParseInferenceNet::propose(std::span<const Var> phi,
                                                       std::span<const Sentence> xs,
                                                       std::size_t K, Rng& rng,
                                                       std::size_t max_expansions) const {
  if (K < 1) throw std::invalid_argument("need at least one particle");
  return run(phi, xs, K, &rng, {}, max_expansions);
}

Var ParseInferenceNet::score(std::span<const Var> phi, std::span<const Sentence> xs,
                             std::span<const ParseTree> trees, std::size_t max_expansions) const {
  if (trees.size() != xs.size()) throw ShapeError("score needs one tree per sentence");
  return run(phi, xs, 1, nullptr, trees, max_expansions).log_q;
}

ParseInferenceNet::Proposal ParseInferenceNet::run(std::span<const Var> phi,
                                                   std::span<const Sentence> xs, std::size_t K,
                                                   Rng* rng, std::span<const ParseTree> given,
                                                   std::size_t max_expansions) const {
  if (xs.empty()) throw std::invalid_argument("no sentences");
  const Grammar& g = grammar_;
  Tape& t = phi[0].tape();
  const std::size_t P = xs.size() * K;
  const std::size_t N = g.num_nonterminals();
  const std::size_t R = g.max_rules();
  const std::size_t H = sizes_.decision_hidden;

  Var code = encode(phi, xs);
  if (K > 1) code = repeat_rows(code, K);

  Proposal out{std::vector<ParseTree>(P), Var{}};
  std::vector<std::vector<std::size_t>> stacks(P, std::vector<std::size_t>{g.start()});
  std::vector<std::size_t> prev(P, 0);
  // Only particles with pending non-terminals are stepped; finished ones
  // never resume, so rows are dropped from the state as they complete.
  std::vector<std::size_t> live(P);
  for (std::size_t p = 0; p < P; ++p) live[p] = p;
  Var h = t.constant(Tensor({P, H}, 0.0));
  std::vector<Var> picked;
  std::vector<std::size_t> owner;  // particle of each picked log-probability

  while (!live.empty()) {
    const std::size_t n = live.size();
    Tensor mask({n, R}, kMasked);
    std::vector<std::size_t> nts(n), heads(n), prev_live(n), chosen(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = live[i];
      nts[i] = stacks[p].back();
      heads[i] = i * N + nts[i];
      prev_live[i] = prev[p];
      if (out.trees[p].steps.size() >= max_expansions) {
        for (std::size_t r : g.forcing_rules(nts[i])) mask.at(i, r) = 0.0;
      } else {
        for (std::size_t r = 0; r < g.num_rules(nts[i]); ++r) mask.at(i, r) = 0.0;
      }
    }
    std::vector<Var> parts{code, index_rows(phi[kRuleEmb], prev_live),
                           index_rows(phi[kAddrEmb], nts)};
    h = tanh(add(affine(concat_last(parts), phi[kDecWx], phi[kDecB]), matmul(h, phi[kDecWh])));
    Var all = reshape(affine(h, phi[kOutW], phi[kOutB]), {n * N, R});
    Var lp = log_softmax(add(index_rows(all, heads), t.constant(std::move(mask))));

    const Tensor& lpv = lp.value();
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = live[i];
      auto& tree = out.trees[p];
      const bool forced = tree.steps.size() >= max_expansions;
      std::size_t r = 0;
      if (rng) {
        r = dist::sample_categorical(lpv.values().subspan(i * R, R), *rng);
      } else {
        const auto& src = given[p].steps;
        if (tree.steps.size() >= src.size()) throw GrammarError("scored tree is incomplete");
        const auto& step = src[tree.steps.size()];
        if (step.nonterminal != nts[i]) throw GrammarError("scored tree expands the wrong symbol");
        r = step.rule;
        if (r >= g.num_rules(nts[i])) throw GrammarError("rule index out of range");
        if (forced) {
          const auto& allowed = g.forcing_rules(nts[i]);
          if (std::find(allowed.begin(), allowed.end(), r) == allowed.end())
            throw GrammarError("scored tree uses a non-forcing rule past the expansion budget");
        }
      }
      chosen[i] = r;
      owner.push_back(p);
      tree.steps.push_back({nts[i], r, forced});
      prev[p] = g.rule_offset(nts[i]) + r + 1;
      stacks[p].pop_back();
      const auto& rhs = g.productions(nts[i])[r].rhs;
      for (auto it = rhs.rbegin(); it != rhs.rend(); ++it)
        if (!it->terminal) stacks[p].push_back(it->id);
      if (!stacks[p].empty()) keep.push_back(i);
    }
    picked.push_back(gather(lp, chosen));
    if (keep.size() < n) {
      std::vector<std::size_t> next;
      for (std::size_t i : keep) next.push_back(live[i]);
      live = std::move(next);
      if (live.empty()) break;
      h = index_rows(h, keep);
      code = index_rows(code, keep);
    }
  }
  // Sum each particle's picked log-probabilities: lay them out in a
  // [P, longest] grid whose padding points at an appended zero.
  std::size_t longest = 0;
  for (const auto& tree : out.trees) longest = std::max(longest, tree.steps.size());
  const std::size_t M = owner.size();
  std::vector<std::size_t> grid(P * longest, M), filled(P, 0);
  for (std::size_t j = 0; j < M; ++j) grid[owner[j] * longest + filled[owner[j]]++] = j;
  picked.push_back(t.constant(Tensor({1}, 0.0)));
  Var steps = reshape(concat_last(picked), {M + 1, 1});
  out.log_q = sum_last(reshape(index_rows(steps, grid), {P, longest}));
  if (!rng) {
    for (std::size_t p = 0; p < P; ++p) {
      if (out.trees[p].steps.size() != given[p].steps.size())
        throw GrammarError("scored tree has steps after completion");
    }
  }
  return out;
}

}  // namespace rws::pcfg
