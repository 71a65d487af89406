#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "lfr/corpus.hpp"
#include "lfr/error.hpp"
#include "lfr/synthlang.hpp"
#include "lfr/util.hpp"

using namespace lfr;

namespace {

ParallelCorpus from_text(const std::string& src, const std::string& tgt) {
  std::istringstream s(src), t(tgt);
  return ingest(s, t);
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("ingest assigns ids in file order and counts tokens") {
  const auto c = from_text("a b\na\n", "x y\nx\n");
  CHECK(c.size() == 2);
  CHECK(c[0].id == 0);
  CHECK(c[1].id == 1);
  CHECK(c.provenance() == Provenance::Raw);
  const Vocab& sv = c.source_vocab();
  CHECK(sv.count(sv.at("a")) == 2);
  CHECK(sv.count(sv.at("b")) == 1);
  CHECK(sv.total() == 3);
  CHECK(c.target_vocab().total() == 3);
}

TEST_CASE("ingest rejects mismatched and empty lines") {
  CHECK(error_of([] { from_text("a\nb\nc\n", "x\ny\n"); }).find("line count mismatch 3≠2") != std::string::npos);
  CHECK(error_of([] { from_text("a\n\n", "x\ny\n"); }).find("empty source line 2") != std::string::npos);
  CHECK(error_of([] { from_text("a\nb\n", "x\n \n"); }).find("empty target line 2") != std::string::npos);
}

TEST_CASE("serialize and ingest round-trip a 10k-line corpus") {
  GenConfig g;
  g.num_pairs = 10000;
  g.seed = 7;
  const auto data = generate(g);
  const std::string src = serialize_side(data.corpus, Side::Source);
  const std::string tgt = serialize_side(data.corpus, Side::Target);
  const auto back = from_text(src, tgt);
  CHECK(back.size() == 10000);
  CHECK(serialize_side(back, Side::Source) == src);
  CHECK(serialize_side(back, Side::Target) == tgt);
}

TEST_CASE("vocab counts sum to the total") {
  const auto c = from_text("a b a\nc a\n", "x\ny z\n");
  for (Side side : {Side::Source, Side::Target}) {
    const Vocab& v = c.vocab(side);
    std::uint64_t sum = 0;
    for (TokenId i = 0; i < v.size(); ++i) sum += v.count(i);
    CHECK(sum == v.total());
  }
}

TEST_CASE("threshold bucketing") {
  SUBCASE("relative frequency 5e-5 is Low") {
    // 1 occurrence out of 20000.
    std::vector<std::uint64_t> counts = {19999, 1};
    const auto b = assign_buckets(counts, {});
    CHECK(b[1] == Bucket::Low);
    CHECK(b[0] == Bucket::High);
  }
  SUBCASE("uniform vocabulary of three is all High") {
    const auto c = from_text("a b c\n", "x y z\n");
    const auto p = build_freq_profile(c, Side::Source);
    for (TokenId i = 0; i < 3; ++i) CHECK(p.bucket(i) == Bucket::High);
  }
  SUBCASE("boundaries") {
    // relfreq exactly 1e-4 is Medium, exactly 1e-3 is High.
    std::vector<std::uint64_t> counts = {1, 10, 9989};
    const auto b = assign_buckets(counts, {});
    CHECK(b[0] == Bucket::Medium);
    CHECK(b[1] == Bucket::High);
  }
}

TEST_CASE("relative frequencies sum to one") {
  GenConfig g;
  g.num_pairs = 2000;
  const auto c = generate(g).corpus;
  for (Side side : {Side::Source, Side::Target}) {
    const auto p = build_freq_profile(c, side);
    double sum = 0.0;
    for (TokenId i = 0; i < p.size(); ++i) sum += p.relfreq(i);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("Low type fraction of a Zipf corpus matches a direct count") {
  GenConfig g;
  g.num_pairs = 5000;  // about 50k tokens
  g.seed = 11;
  const auto c = generate(g).corpus;
  const auto p = build_freq_profile(c, Side::Source);
  // Direct count: Low iff count / total < 1e-4.
  std::size_t low = 0;
  const Vocab& v = c.source_vocab();
  for (TokenId i = 0; i < v.size(); ++i) low += static_cast<double>(v.count(i)) < 1e-4 * static_cast<double>(v.total());
  std::size_t got = 0;
  for (TokenId i = 0; i < p.size(); ++i) got += p.bucket(i) == Bucket::Low;
  CHECK(got == low);
  MESSAGE("Low type fraction: " << static_cast<double>(low) / static_cast<double>(v.size()));
}

TEST_CASE("bucketing partitions and is monotone on random counts") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<std::uint64_t> counts(n);
    for (auto& x : counts) x = rng.below(4) == 0 ? rng.below(5000) : rng.below(20);
    if (std::all_of(counts.begin(), counts.end(), [](auto x) { return x == 0; })) counts[0] = 1;
    BucketingConfig cfg;
    if (trial % 2) {
      cfg.mode = BucketingConfig::Mode::CumulativeMass;
      cfg.high_mass = rng.uniform();
      cfg.low_mass = rng.uniform() * (1.0 - cfg.high_mass);
    }
    const auto b = assign_buckets(counts, cfg);
    REQUIRE(b.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(static_cast<int>(b[i]) <= 2);
      for (std::size_t j = 0; j < n; ++j) {
        if (counts[i] >= counts[j]) CHECK(b[i] >= b[j]);
      }
    }
  }
}

TEST_CASE("cumulative-mass bucketing covers the requested mass") {
  // Counts 50, 30, 10, 5, 3, 2: the top half of the mass is the first word.
  std::vector<std::uint64_t> counts = {5, 50, 2, 30, 10, 3};
  BucketingConfig cfg;
  cfg.mode = BucketingConfig::Mode::CumulativeMass;
  cfg.high_mass = 0.5;
  cfg.low_mass = 0.06;
  const auto b = assign_buckets(counts, cfg);
  CHECK(b[1] == Bucket::High);
  CHECK(b[3] == Bucket::Medium);
  CHECK(b[2] == Bucket::Low);
  CHECK(b[5] == Bucket::Low);
}

TEST_CASE("subsample") {
  const auto c = from_text("a b\nc\nd e f\n", "x y\nz\nu v w\n");
  SUBCASE("all ids is the identity") {
    const std::vector<PairId> ids = {0, 1, 2};
    CHECK(subsample(c, ids) == c);
  }
  SUBCASE("no ids gives an empty corpus") {
    const auto s = subsample(c, std::vector<PairId>{});
    CHECK(s.size() == 0);
    CHECK(s.source_vocab() == c.source_vocab());
  }
  SUBCASE("unknown ids are listed") {
    const std::vector<PairId> ids = {1, 9, 12};
    const std::string msg = error_of([&] { subsample(c, ids); });
    CHECK(msg.find("9") != std::string::npos);
    CHECK(msg.find("12") != std::string::npos);
  }
  SUBCASE("keeps ids, content and provenance") {
    const std::vector<PairId> ids = {2, 0};
    const auto s = subsample(c, ids);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == c[2]);
    CHECK(s[1] == c[0]);
    CHECK(s.provenance() == c.provenance());
  }
}

TEST_CASE("subsample size and content on random id sets") {
  GenConfig g;
  g.num_pairs = 500;
  const auto c = generate(g).corpus;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PairId> ids;
    for (PairId i = 0; i < c.size(); ++i) {
      if (rng.uniform() < 0.3) ids.push_back(i);
    }
    const auto s = subsample(c, ids);
    REQUIRE(s.size() == ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) CHECK(s[k] == c[ids[k]]);
  }
}

TEST_CASE("concat") {
  const auto a = from_text("a b\nc\n", "x y\nz\n");
  const auto b = from_text("c d\n", "z w\n");
  SUBCASE("with an empty corpus keeps the content") {
    const auto e = subsample(b, std::vector<PairId>{});
    const auto ab = concat(a, e);
    CHECK(ab.size() == a.size());
    CHECK(serialize_side(ab, Side::Source) == serialize_side(a, Side::Source));
    CHECK(serialize_side(ab, Side::Target) == serialize_side(a, Side::Target));
    CHECK(ab.provenance() == Provenance::Mixed);
  }
  SUBCASE("sizes add, ids are re-indexed, origins recorded") {
    const auto ab = concat(a, b);
    CHECK(ab.size() == 3);
    for (PairId i = 0; i < 3; ++i) CHECK(ab[i].id == i);
    REQUIRE(ab.origins().size() == 3);
    CHECK(ab.origins()[2].part == 1);
    CHECK(ab.origins()[2].id == 0);
  }
  SUBCASE("merged counts equal a recount by surface") {
    const auto ab = concat(a, b);
    for (Side side : {Side::Source, Side::Target}) {
      std::map<std::string, std::uint64_t> oracle;
      for (const auto* part : {&a, &b}) {
        for (const auto& p : part->pairs()) {
          for (TokenId t : side == Side::Source ? p.source : p.target) ++oracle[part->vocab(side).surface(t)];
        }
      }
      const Vocab& v = ab.vocab(side);
      CHECK(v.size() == oracle.size());
      for (const auto& [w, n] : oracle) CHECK(v.count(v.at(w)) == n);
    }
  }
}

TEST_CASE("digest tracks content") {
  const auto a = from_text("a b\n", "x y\n");
  const auto b = from_text("a b\n", "x z\n");
  CHECK(corpus_digest(a) == corpus_digest(from_text("a b\n", "x y\n")));
  CHECK(corpus_digest(a) != corpus_digest(b));
}
