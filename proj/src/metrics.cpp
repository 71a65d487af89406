#include "lfr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "lfr/error.hpp"
#include "lfr/util.hpp"

namespace lfr {

nlohmann::json BleuScore::to_json() const {
  return {{"bleu", score},
          {"precisions", precisions},
          {"matches", matches},
          {"totals", totals},
          {"brevity_penalty", brevity_penalty},
          {"hypothesis_length", hypothesis_length},
          {"reference_length", reference_length}};
}

namespace {

using NgramCounts = std::map<std::vector<TokenId>, std::uint64_t>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Sentence(s.begin() + i, s.begin() + i + n)];
  return out;
}

// Clipped matches and totals for one sentence pair and order n.
std::pair<std::uint64_t, std::uint64_t> clipped(const Sentence& hyp, const Sentence& ref, std::size_t n) {
  if (hyp.size() < n) return {0, 0};
  const auto h = ngrams(hyp, n);
  const auto r = ngrams(ref, n);
  std::uint64_t match = 0;
  for (const auto& [g, c] : h) {
    auto it = r.find(g);
    if (it != r.end()) match += std::min(c, it->second);
  }
  return {match, hyp.size() - n + 1};
}

}  // namespace

BleuScore bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references, int max_n) {
  if (hypotheses.empty()) throw Error("BLEU of an empty hypothesis set");
  if (hypotheses.size() != references.size()) {
    throw Error("BLEU needs one reference per hypothesis (" + std::to_string(hypotheses.size()) + " vs " +
                std::to_string(references.size()) + ")");
  }
  if (max_n < 1) throw UsageError("BLEU order must be positive");
  BleuScore b;
  const auto N = static_cast<std::size_t>(max_n);
  b.matches.assign(N, 0);
  b.totals.assign(N, 0);
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    b.hypothesis_length += hypotheses[s].size();
    b.reference_length += references[s].size();
    for (std::size_t n = 1; n <= N; ++n) {
      const auto [m, t] = clipped(hypotheses[s], references[s], n);
      b.matches[n - 1] += m;
      b.totals[n - 1] += t;
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < N; ++n) {
    const double p = b.totals[n] ? static_cast<double>(b.matches[n]) / static_cast<double>(b.totals[n]) : 0.0;
    b.precisions.push_back(p);
    if (p == 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  const double c = static_cast<double>(b.hypothesis_length);
  const double r = static_cast<double>(b.reference_length);
  b.brevity_penalty = c == 0.0 ? 0.0 : (c < r ? std::exp(1.0 - r / c) : 1.0);
  b.score = zero ? 0.0 : 100.0 * b.brevity_penalty * std::exp(log_sum / static_cast<double>(N));
  return b;
}

double sentence_bleu(const Sentence& hypothesis, const Sentence& reference, int max_n) {
  if (max_n < 1) throw UsageError("BLEU order must be positive");
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
    auto [m, t] = clipped(hypothesis, reference, n);
    double pm = static_cast<double>(m), pt = static_cast<double>(t);
    if (n >= 2) {
      pm += 1.0;
      pt += 1.0;
    }
    if (pm == 0.0) return 0.0;
    log_sum += std::log(pm / pt);
  }
  const double c = static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / max_n);
}

const LexAccEntry& LexAccReport::at(Bucket b) const {
  switch (b) {
    case Bucket::Low: return low;
    case Bucket::Medium: return medium;
    case Bucket::High: return high;
  }
  return all;
}

nlohmann::json LexAccReport::to_json() const {
  auto entry = [](const LexAccEntry& e) {
    return nlohmann::json{{"accuracy", e.accuracy}, {"correct", e.correct}, {"total", e.total}};
  };
  return {{"All", entry(all)},
          {"High", entry(high)},
          {"Medium", entry(medium)},
          {"Low", entry(low)},
          {"definition", "occurrence-level, lexicon-judged containment with multiset consumption"}};
}

namespace {

void check_set(const LexicalEvalSet& set) {
  if (!set.source_vocab || !set.hypothesis_vocab) throw Error("lexical evaluation needs both vocabularies");
  if (set.sources.size() != set.hypotheses.size()) {
    throw Error("sources and hypotheses differ in line count (" + std::to_string(set.sources.size()) + " vs " +
                std::to_string(set.hypotheses.size()) + ")");
  }
}

void finish(LexAccEntry& e) {
  e.accuracy = e.total ? 100.0 * static_cast<double>(e.correct) / static_cast<double>(e.total) : 0.0;
}

LexAccEntry score_bucket(const LexicalEvalSet& set, const LinkJudge::Bound& bound,
                         const std::vector<Bucket>& buckets, Bucket bucket) {
  LexAccEntry e;
  std::vector<char> used;
  for (std::size_t s = 0; s < set.sources.size(); ++s) {
    const auto& hyp = set.hypotheses[s];
    used.assign(hyp.size(), 0);
    for (TokenId w : set.sources[s]) {
      if (buckets[w] != bucket) continue;
      ++e.total;
      for (std::size_t k = 0; k < hyp.size(); ++k) {
        if (!used[k] && bound.accepts(w, hyp[k])) {
          used[k] = 1;
          ++e.correct;
          break;
        }
      }
    }
  }
  finish(e);
  return e;
}

}  // namespace

LexAccEntry alf(const LexicalEvalSet& set, const LinkJudge& judge, const FreqProfile& source_profile,
                Bucket bucket) {
  check_set(set);
  const auto bound = judge.bind(*set.source_vocab, *set.hypothesis_vocab);
  const auto buckets = source_profile.buckets_for(*set.source_vocab);
  LexAccEntry e = score_bucket(set, bound, buckets, bucket);
  if (e.total == 0) {
    throw Error("no " + std::string(to_string(bucket)) + "-frequency source tokens to evaluate");
  }
  return e;
}

LexAccReport bucketed_lexacc(const LexicalEvalSet& set, const LinkJudge& judge, const FreqProfile& source_profile) {
  check_set(set);
  const auto bound = judge.bind(*set.source_vocab, *set.hypothesis_vocab);
  const auto buckets = source_profile.buckets_for(*set.source_vocab);
  LexAccReport r;
  r.high = score_bucket(set, bound, buckets, Bucket::High);
  r.medium = score_bucket(set, bound, buckets, Bucket::Medium);
  r.low = score_bucket(set, bound, buckets, Bucket::Low);
  r.all.total = r.high.total + r.medium.total + r.low.total;
  r.all.correct = r.high.correct + r.medium.correct + r.low.correct;
  if (r.all.total == 0) throw Error("no source tokens to evaluate");
  finish(r.all);
  return r;
}

double lfw_output_ratio(std::span<const Sentence> hypotheses, const Vocab& hypothesis_vocab,
                        const FreqProfile& target_profile) {
  const auto buckets = target_profile.buckets_for(hypothesis_vocab);
  std::uint64_t low = 0, total = 0;
  for (const auto& h : hypotheses) {
    for (TokenId t : h) {
      ++total;
      low += buckets[t] == Bucket::Low;
    }
  }
  if (total == 0) throw Error("low-frequency output ratio of an empty output");
  return 100.0 * static_cast<double>(low) / static_cast<double>(total);
}

double binomial_two_sided(std::uint64_t k, std::uint64_t n) {
  if (n == 0) throw Error("binomial test with zero trials");
  k = std::min(k, n - k);
  // Sum C(n, i) / 2^n for i <= k in log space.
  const double ln2 = std::log(2.0);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (std::uint64_t i = 0; i <= k; ++i) {
    const double t = lgn - std::lgamma(static_cast<double>(i) + 1.0) - std::lgamma(static_cast<double>(n - i) + 1.0) -
                     static_cast<double>(n) * ln2;
    terms.push_back(t);
    mx = std::max(mx, t);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return std::min(1.0, 2.0 * std::exp(mx) * s);
}

SignTest sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("sign test needs paired scores of equal length");
  SignTest r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) {
      ++r.wins;
    } else if (a[i] < b[i]) {
      ++r.losses;
    } else {
      ++r.ties;
    }
  }
  if (r.wins + r.losses == 0) throw Error("sign test undefined: every pair is tied");
  r.p_value = binomial_two_sided(std::min(r.wins, r.losses), r.wins + r.losses);
  return r;
}

namespace {

std::string pad_right(std::string s, std::size_t w) {
  s.resize(std::max(w, s.size()), ' ');
  return s;
}

std::string pad_left(const std::string& s, std::size_t w) {
  return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
}

std::size_t name_width(std::span<const ResultRow> rows) {
  std::size_t w = 8;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  return w;
}

}  // namespace

std::string render_results_table(std::span<const ResultRow> rows) {
  const std::size_t w = name_width(rows);
  std::ostringstream out;
  out << pad_right("Model", w) << " |   BLEU |    ALF | LFW out %\n";
  out << std::string(w, '-') << "-+--------+--------+----------\n";
  for (const auto& r : rows) {
    out << pad_right(r.name, w) << " | " << pad_left(fixed(r.bleu, 2), 6) << " | " << pad_left(fixed(r.alf, 1), 6)
        << " | " << pad_left(fixed(r.lfw_ratio, 1), 9) << '\n';
  }
  return out.str();
}

std::string render_lexacc_table(std::span<const ResultRow> rows) {
  const std::size_t w = name_width(rows);
  std::ostringstream out;
  out << pad_right("Model", w) << " |    All |   High | Medium |    Low\n";
  out << std::string(w, '-') << "-+--------+--------+--------+-------\n";
  for (const auto& r : rows) {
    out << pad_right(r.name, w);
    for (const auto* e : {&r.lexacc.all, &r.lexacc.high, &r.lexacc.medium, &r.lexacc.low}) {
      out << " | " << pad_left(e->total ? fixed(e->accuracy, 1) : "-", 6);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace lfr
