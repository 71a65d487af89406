#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lfr/error.hpp"
#include "lfr/synthlang.hpp"

using namespace lfr;

namespace {

// Average ranks (1-based), ties sharing their mean rank.
std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j + 1);
    i = j;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

bool licensed(const GoldLexicon& lex, TokenId s, TokenId t) {
  const auto& modes = lex.modes(s);
  return std::any_of(modes.begin(), modes.end(), [&](const LexiconMode& m) { return m.target == t; });
}

}  // namespace

TEST_CASE("lexicon entries are valid distributions over distinct targets") {
  GenConfig g;
  const auto lex = build_lexicon(g);
  REQUIRE(lex.size() == g.source_vocab_size);
  for (TokenId s = 0; s < lex.size(); ++s) {
    const auto& modes = lex.modes(s);
    CHECK(modes.size() >= g.min_modes);
    CHECK(modes.size() <= g.max_modes);
    double sum = 0.0;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      CHECK(modes[k].prob > 0.0);
      CHECK(modes[k].prob <= 1.0);
      sum += modes[k].prob;
      for (std::size_t l = 0; l < k; ++l) CHECK(modes[l].target != modes[k].target);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("single mode without swaps is a deterministic relabeling") {
  GenConfig g;
  g.min_modes = g.max_modes = 1;
  g.swap_prob = 0.0;
  g.num_pairs = 300;
  const auto d = generate(g);
  std::map<TokenId, TokenId> seen;
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    const auto& p = d.corpus[i];
    REQUIRE(p.source.size() == p.target.size());
    for (std::size_t j = 0; j < p.source.size(); ++j) {
      auto [it, fresh] = seen.emplace(p.source[j], p.target[j]);
      CHECK(it->second == p.target[j]);
    }
    SentenceAlignment identity;
    for (std::uint32_t j = 0; j < p.source.size(); ++j) identity.push_back({j, j});
    CHECK(d.gold[i] == identity);
  }
}

TEST_CASE("generation is deterministic for a seed") {
  GenConfig g;
  g.num_pairs = 1000;
  g.seed = 42;
  const auto a = generate(g), b = generate(g);
  CHECK(a.corpus == b.corpus);
  CHECK(a.lexicon == b.lexicon);
  CHECK(a.gold == b.gold);
  g.seed = 43;
  CHECK_FALSE(generate(g).corpus == a.corpus);
}

TEST_CASE("degenerate configurations are rejected") {
  GenConfig g;
  g.source_vocab_size = 0;
  CHECK_THROWS_AS(generate(g), UsageError);
  g = {};
  g.swap_prob = 0.7;
  CHECK_THROWS_AS(generate(g), UsageError);
  g = {};
  g.min_modes = 3;
  g.max_modes = 2;
  CHECK_THROWS_AS(generate(g), UsageError);
}

TEST_CASE("source frequencies are Zipfian") {
  GenConfig g;
  g.num_pairs = 5000;  // about 50k tokens
  g.seed = 3;
  const auto c = generate(g).corpus;
  const Vocab& v = c.source_vocab();
  std::vector<double> freq;
  for (TokenId r = 0; r < v.size(); ++r) {
    if (v.count(r) > 0) freq.push_back(static_cast<double>(v.count(r)));
  }
  // Empirical frequency rank, 1 = most frequent, ties averaged.
  std::vector<double> neg(freq.size());
  std::transform(freq.begin(), freq.end(), neg.begin(), [](double f) { return -f; });
  const auto rank = ranks(neg);
  std::vector<double> log_rank(freq.size()), log_freq(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i) {
    log_rank[i] = std::log(rank[i]);
    log_freq[i] = std::log(freq[i]);
  }
  CHECK(pearson(ranks(log_rank), ranks(log_freq)) <= -0.95);
  // The log-log fit itself is close to a line.
  CHECK(pearson(log_rank, log_freq) <= -0.95);
}

TEST_CASE("modal translation") {
  Vocab sv, tv;
  sv.add("a", 0);
  sv.add("b", 0);
  tv.add("x", 0);
  tv.add("y", 0);
  SUBCASE("argmax") {
    GoldLexicon lex(sv, tv, {{{0, 0.7}, {1, 0.3}}, {{1, 0.3}, {0, 0.7}}});
    CHECK(modal_translation(lex, 0) == 0);
    CHECK(modal_translation(lex, 1) == 0);
  }
  SUBCASE("ties go to the lowest target id") {
    GoldLexicon lex(sv, tv, {{{1, 0.5}, {0, 0.5}}, {{1, 1.0}}});
    CHECK(modal_translation(lex, 0) == 0);
    CHECK(modal_translation(lex, 1) == 1);
  }
  SUBCASE("unknown token") {
    GoldLexicon lex(sv, tv, {{{0, 1.0}}, {{1, 1.0}}});
    CHECK_THROWS_AS(modal_translation(lex, 5), Error);
  }
}

TEST_CASE("modal translation agrees with a brute-force scan") {
  const auto lex = build_lexicon(GenConfig{});
  for (TokenId s = 0; s < lex.size(); ++s) {
    double best = -1.0;
    TokenId arg = 0;
    for (const auto& m : lex.modes(s)) {
      if (m.prob > best || (m.prob == best && m.target < arg)) {
        best = m.prob;
        arg = m.target;
      }
    }
    CHECK(modal_translation(lex, s) == arg);
  }
}

TEST_CASE("every target token is licensed by its gold-aligned source") {
  GenConfig g;
  g.num_pairs = 2000;
  const auto d = generate(g);
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    const auto& p = d.corpus[i];
    REQUIRE(d.gold[i].size() == p.target.size());
    std::vector<int> hits(p.target.size(), 0);
    for (const Link& l : d.gold[i]) {
      CHECK(licensed(d.lexicon, p.source[l.source], p.target[l.target]));
      ++hits[l.target];
    }
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
}

TEST_CASE("gold alignments are position bijections without swaps") {
  GenConfig g;
  g.swap_prob = 0.0;
  g.num_pairs = 500;
  const auto d = generate(g);
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    for (const Link& l : d.gold[i]) CHECK(l.source == l.target);
  }
}

TEST_CASE("empirical mode frequencies approach the lexicon") {
  GenConfig g;
  g.num_pairs = 5000;
  const auto d = generate(g);
  // Frequent source words (ranks 1..10) are seen thousands of times.
  std::map<TokenId, std::map<TokenId, double>> seen;
  std::map<TokenId, double> total;
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    for (const Link& l : d.gold[i]) {
      const TokenId s = d.corpus[i].source[l.source];
      if (s >= 10) continue;
      seen[s][d.corpus[i].target[l.target]] += 1.0;
      total[s] += 1.0;
    }
  }
  for (TokenId s = 0; s < 10; ++s) {
    double l1 = 0.0;
    for (const auto& m : d.lexicon.modes(s)) l1 += std::abs(seen[s][m.target] / total[s] - m.prob);
    CHECK(l1 < 0.05);
  }
}

TEST_CASE("lexicon JSON round-trip") {
  GenConfig g;
  g.source_vocab_size = 50;
  const auto lex = build_lexicon(g);
  CHECK(GoldLexicon::from_json(lex.to_json()) == lex);
}

TEST_CASE("held-out samples share the lexicon and vocabulary ids") {
  GenConfig g;
  g.num_pairs = 200;
  const auto train = generate(g);
  const auto test = sample_pairs(train.lexicon, g, 100, "test");
  CHECK(test.corpus.size() == 100);
  CHECK(test.corpus.source_vocab().size() == train.corpus.source_vocab().size());
  for (TokenId s = 0; s < 20; ++s) {
    CHECK(test.corpus.source_vocab().surface(s) == train.corpus.source_vocab().surface(s));
  }
  CHECK_FALSE(serialize_side(test.corpus, Side::Source) ==
              serialize_side(sample_pairs(train.lexicon, g, 100, "valid").corpus, Side::Source));
}
