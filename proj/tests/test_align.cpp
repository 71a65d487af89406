#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "lfr/align.hpp"
#include "lfr/error.hpp"
#include "lfr/synthlang.hpp"
#include "lfr/util.hpp"
#include "oracles.hpp"

using namespace lfr;
using oracle::from_text;
using oracle::random_corpus;

namespace {

// Dense reference EM: t[e][f] with row Vs as NULL.
struct DenseEm {
  std::vector<std::vector<double>> t;
  std::vector<double> ll;
};

DenseEm dense_em(const ParallelCorpus& c, int iterations, double p0, double lambda) {
  const std::size_t vs = c.source_vocab().size(), vt = c.target_vocab().size();
  DenseEm out;
  out.t.assign(vs + 1, std::vector<double>(vt, 1.0 / static_cast<double>(vt)));
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::vector<double>> counts(vs + 1, std::vector<double>(vt, 0.0));
    double ll = 0.0;
    for (const auto& p : c.pairs()) {
      const double n = static_cast<double>(p.source.size()), m = static_cast<double>(p.target.size());
      for (std::size_t j = 0; j < p.target.size(); ++j) {
        const TokenId f = p.target[j];
        std::vector<double> prior(p.source.size());
        double z = 0.0;
        for (std::size_t i = 0; i < p.source.size(); ++i) {
          prior[i] = std::exp(-lambda * std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m));
          z += prior[i];
        }
        std::vector<double> post(p.source.size() + 1);
        double denom = 0.0;
        for (std::size_t i = 0; i < p.source.size(); ++i) {
          post[i] = (1.0 - p0) * prior[i] / z * out.t[p.source[i]][f];
          denom += post[i];
        }
        post.back() = p0 * out.t[vs][f];
        denom += post.back();
        ll += std::log(denom);
        for (std::size_t i = 0; i < p.source.size(); ++i) counts[p.source[i]][f] += post[i] / denom;
        counts[vs][f] += post.back() / denom;
      }
    }
    out.ll.push_back(ll);
    for (std::size_t e = 0; e <= vs; ++e) {
      double s = 0.0;
      for (double x : counts[e]) s += x;
      if (s > 0.0) {
        for (std::size_t f = 0; f < vt; ++f) out.t[e][f] = counts[e][f] / s;
      }
    }
  }
  return out;
}

AlignConfig model1(int iterations) {
  AlignConfig cfg;
  cfg.iterations = iterations;
  cfg.null_prob = 0.0;
  cfg.diagonal_tension = 0.0;
  return cfg;
}

double table_vs_dense(const TranslationTable& t, const DenseEm& d) {
  double worst = 0.0;
  for (TokenId e = 0; e < d.t.size(); ++e) {
    for (TokenId f = 0; f < d.t[e].size(); ++f) worst = std::max(worst, std::fabs(t.prob(e, f) - d.t[e][f]));
  }
  return worst;
}

}  // namespace

TEST_CASE("hand-derived Model 1 iteration") {
  const auto c = from_text("a\na b\n", "x\nx y\n");
  const auto t = em_train(c, Direction::SourceToTarget, model1(1));
  const auto& sv = c.source_vocab();
  const auto& tv = c.target_vocab();
  const TokenId a = sv.at("a"), b = sv.at("b"), x = tv.at("x"), y = tv.at("y");
  CHECK(std::fabs(t.prob(a, x) - 0.75) <= 1e-12);
  CHECK(std::fabs(t.prob(a, y) - 0.25) <= 1e-12);
  CHECK(std::fabs(t.prob(b, x) - 0.5) <= 1e-12);
  CHECK(std::fabs(t.prob(b, y) - 0.5) <= 1e-12);
}

TEST_CASE("a single pair aligns with certainty") {
  const auto c = from_text("a\n", "x\n");
  for (double p0 : {0.0, 0.08, 0.5}) {
    for (double lambda : {0.0, 4.0}) {
      AlignConfig cfg;
      cfg.iterations = 1;
      cfg.null_prob = p0;
      cfg.diagonal_tension = lambda;
      CHECK(em_train(c, Direction::SourceToTarget, cfg).prob(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero iterations leave a uniform table") {
  const auto c = from_text("a b\n", "x y z\n");
  const auto t = em_train(c, Direction::SourceToTarget, model1(0));
  CHECK(t.log_likelihood().empty());
  for (TokenId e = 0; e <= 2; ++e) {
    for (TokenId f = 0; f < 3; ++f) CHECK(t.prob(e, f) == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("invalid configurations are rejected") {
  const auto c = from_text("a\n", "x\n");
  AlignConfig cfg;
  cfg.null_prob = 1.0;
  CHECK_THROWS_AS(em_train(c, Direction::SourceToTarget, cfg), UsageError);
  cfg = {};
  cfg.diagonal_tension = -1.0;
  CHECK_THROWS_AS(em_train(c, Direction::SourceToTarget, cfg), UsageError);
  cfg = {};
  cfg.iterations = -1;
  CHECK_THROWS_AS(em_train(c, Direction::SourceToTarget, cfg), UsageError);
}

TEST_CASE("lambda 0 and p0 0 is plain Model 1") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_corpus(rng, 15, 6, 7);
    const auto t = em_train(c, Direction::SourceToTarget, model1(4));
    const auto d = dense_em(c, 4, 0.0, 0.0);
    CHECK(table_vs_dense(t, d) <= 1e-12);
  }
}

TEST_CASE("diagonal-prior EM matches a dense reference") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_corpus(rng, 12, 5, 6);
    AlignConfig cfg;
    cfg.iterations = 3;
    cfg.null_prob = 0.3 * rng.uniform();
    cfg.diagonal_tension = 8.0 * rng.uniform();
    const auto t = em_train(c, Direction::SourceToTarget, cfg);
    const auto d = dense_em(c, 3, cfg.null_prob, cfg.diagonal_tension);
    CHECK(table_vs_dense(t, d) <= 1e-12);
    for (std::size_t k = 0; k < d.ll.size(); ++k) {
      CHECK(t.log_likelihood()[k] == doctest::Approx(d.ll[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("log-likelihood never decreases and rows stay stochastic") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_corpus(rng, 5 + rng.below(20), 3 + rng.below(8), 3 + rng.below(8));
    AlignConfig cfg;
    cfg.iterations = 10;
    cfg.null_prob = trial % 3 == 0 ? 0.0 : 0.5 * rng.uniform();
    cfg.diagonal_tension = trial % 2 == 0 ? 0.0 : 10.0 * rng.uniform();
    const Direction d = trial % 4 == 1 ? Direction::TargetToSource : Direction::SourceToTarget;
    const auto t = em_train(c, d, cfg);
    const auto& ll = t.log_likelihood();
    REQUIRE(ll.size() == 10);
    for (std::size_t k = 1; k < ll.size(); ++k) CHECK(ll[k] >= ll[k - 1] - 1e-9);
    for (TokenId e = 0; e <= t.null_id(); ++e) {
      CHECK(t.row_mass(e) == doctest::Approx(1.0).epsilon(1e-9));
      for (const auto& [f, p] : t.row(e)) CHECK(p >= 0.0);
    }
  }
}

TEST_CASE("log-likelihood is monotone on a synthetic corpus") {
  GenConfig g;
  g.num_pairs = 1000;
  const auto d = generate(g);
  AlignConfig cfg;
  cfg.iterations = 10;
  const auto t = em_train(d.corpus, Direction::SourceToTarget, cfg);
  for (std::size_t k = 1; k < t.log_likelihood().size(); ++k) {
    CHECK(t.log_likelihood()[k] >= t.log_likelihood()[k - 1] - 1e-9);
  }
}

TEST_CASE("t->s equals s->t on the swapped corpus") {
  Rng rng(4);
  const auto c = random_corpus(rng, 20, 5, 5);
  AlignConfig cfg;
  const auto ts = em_train(c, Direction::TargetToSource, cfg);
  const auto st = em_train(c.swapped(), Direction::SourceToTarget, cfg);
  for (TokenId e = 0; e <= ts.null_id(); ++e) {
    for (TokenId f = 0; f < ts.conditioned_size(); ++f) CHECK(ts.prob(e, f) == st.prob(e, f));
  }
  const auto a = viterbi_align(ts, c, cfg);
  const auto b = viterbi_align(st, c.swapped(), cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t s = 0; s < a.size(); ++s) {
    SentenceAlignment flipped;
    for (const Link& l : b[s]) flipped.push_back({l.target, l.source});
    std::sort(flipped.begin(), flipped.end());
    CHECK(a[s] == flipped);
  }
}

TEST_CASE("worker count changes results only by rounding") {
  GenConfig g;
  g.num_pairs = 2000;
  const auto c = generate(g).corpus;
  AlignConfig one;
  AlignConfig three;
  three.threads = 3;
  const auto a = em_train(c, Direction::SourceToTarget, one);
  const auto b = em_train(c, Direction::SourceToTarget, three);
  const auto b2 = em_train(c, Direction::SourceToTarget, three);
  for (TokenId e = 0; e <= a.null_id(); ++e) {
    REQUIRE(a.row(e).size() == b.row(e).size());
    for (std::size_t k = 0; k < a.row(e).size(); ++k) {
      const double x = a.row(e)[k].second, y = b.row(e)[k].second;
      CHECK(std::fabs(x - y) <= 1e-9 * std::max(std::fabs(x), 1e-300));
      CHECK(b.row(e)[k] == b2.row(e)[k]);
    }
  }
}

TEST_CASE("Viterbi decisions match a brute-force scan") {
  Rng rng(8);
  std::size_t null_wins = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = random_corpus(rng, 15, 5, 8);
    AlignConfig cfg;
    cfg.iterations = 3;
    cfg.null_prob = trial % 2 ? 0.9 : 0.1 * rng.uniform();
    cfg.diagonal_tension = 5.0 * rng.uniform();
    const auto t = em_train(c, Direction::SourceToTarget, cfg);
    const auto a = viterbi_align(t, c, cfg);
    for (std::size_t s = 0; s < c.size(); ++s) {
      const auto& p = c[s];
      const double n = static_cast<double>(p.source.size()), m = static_cast<double>(p.target.size());
      SentenceAlignment expect;
      for (std::size_t j = 0; j < p.target.size(); ++j) {
        double z = 0.0;
        for (std::size_t i = 0; i < p.source.size(); ++i) {
          z += std::exp(-cfg.diagonal_tension * std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m));
        }
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < p.source.size(); ++i) {
          const double w =
              std::exp(-cfg.diagonal_tension * std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m));
          const double score = (1.0 - cfg.null_prob) * std::max(t.prob(p.source[i], p.target[j]), 1e-12) * w / z;
          if (score > best) {
            best = score;
            arg = i;
          }
        }
        const double null_score = cfg.null_prob * std::max(t.prob(t.null_id(), p.target[j]), 1e-12);
        if (cfg.null_prob > 0.0 && null_score > best) {
          ++null_wins;
          continue;
        }
        expect.push_back({static_cast<std::uint32_t>(arg), static_cast<std::uint32_t>(j)});
      }
      std::sort(expect.begin(), expect.end());
      CHECK(a[s] == expect);
      std::set<std::uint32_t> targets;
      for (const Link& l : a[s]) CHECK(targets.insert(l.target).second);
    }
  }
  CHECK(null_wins > 0);
}

TEST_CASE("ties go to the smaller source index") {
  // Both sources are the same word; without a positional prior they tie.
  const auto c = from_text("a a\n", "x\n");
  const auto t = em_train(c, Direction::SourceToTarget, model1(3));
  const auto a = viterbi_align(t, c, model1(3));
  REQUIRE(a[0].size() == 1);
  CHECK(a[0][0] == Link{0, 0});
}

TEST_CASE("deterministic relabeling aligns to the identity") {
  GenConfig g;
  g.min_modes = g.max_modes = 1;
  g.swap_prob = 0.0;
  g.num_pairs = 2000;
  const auto d = generate(g);
  AlignConfig cfg;
  const auto t = em_train(d.corpus, Direction::SourceToTarget, cfg);
  const auto a = viterbi_align(t, d.corpus, cfg);
  std::size_t exact = 0;
  for (std::size_t s = 0; s < a.size(); ++s) exact += a[s] == d.gold[s];
  CHECK(exact == a.size());
}

TEST_CASE("alignment F1 against gold on the standard benchmark") {
  GenConfig g;
  const auto d = generate(g);
  AlignConfig cfg;
  const auto t = em_train(d.corpus, Direction::SourceToTarget, cfg);
  const auto a = viterbi_align(t, d.corpus, cfg);
  double hit = 0, predicted = 0, gold = 0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    const std::set<Link> ref(d.gold[s].begin(), d.gold[s].end());
    for (const Link& l : a[s]) hit += ref.count(l);
    predicted += static_cast<double>(a[s].size());
    gold += static_cast<double>(ref.size());
  }
  const double p = hit / predicted, r = hit / gold;
  const double f1 = 2 * p * r / (p + r);
  MESSAGE("alignment F1 " << f1);
  CHECK(f1 >= 0.9);
}

TEST_CASE("relabeling token ids leaves alignments unchanged") {
  Rng rng(12);
  const auto c = random_corpus(rng, 40, 8, 8);
  // Rebuild with reversed id order on both sides.
  Vocab sv, tv;
  for (TokenId i = c.source_vocab().size(); i-- > 0;) sv.add(c.source_vocab().surface(i), c.source_vocab().count(i));
  for (TokenId i = c.target_vocab().size(); i-- > 0;) tv.add(c.target_vocab().surface(i), c.target_vocab().count(i));
  std::vector<SentencePair> pairs;
  for (const auto& p : c.pairs()) {
    SentencePair q{p.id, {}, {}};
    for (TokenId x : p.source) q.source.push_back(sv.at(c.source_vocab().surface(x)));
    for (TokenId y : p.target) q.target.push_back(tv.at(c.target_vocab().surface(y)));
    pairs.push_back(q);
  }
  const ParallelCorpus r(sv, tv, pairs, Provenance::Raw);
  AlignConfig cfg;
  for (Direction d : {Direction::SourceToTarget, Direction::TargetToSource}) {
    const auto a = viterbi_align(em_train(c, d, cfg), c, cfg);
    const auto b = viterbi_align(em_train(r, d, cfg), r, cfg);
    CHECK(a == b);
  }
}

TEST_CASE("Pharaoh format") {
  CHECK(format_pharaoh({{0, 0}, {1, 1}}) == "0-0 1-1");
  CHECK(format_pharaoh({}).empty());
  SUBCASE("round-trip of random alignments") {
    Rng rng(31);
    Alignment a(50);
    for (auto& s : a) {
      const std::size_t k = rng.below(6);
      for (std::size_t i = 0; i < k; ++i) {
        s.push_back({static_cast<std::uint32_t>(rng.below(40)), static_cast<std::uint32_t>(rng.below(40))});
      }
    }
    std::ostringstream out;
    write_pharaoh(out, a);
    std::istringstream in(out.str());
    CHECK(read_pharaoh(in) == a);
  }
  SUBCASE("malformed tokens name the line") {
    std::istringstream in("0-0 1-1\n0-0 1x1\n");
    try {
      read_pharaoh(in);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
}
