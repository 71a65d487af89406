#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfr/corpus.hpp"
#include "lfr/lfwlinks.hpp"

namespace lfr {

struct BleuScore {
  double score = 0.0;  // 0..100
  std::vector<double> precisions;  // modified n-gram precision, n = 1..max_n
  std::vector<std::uint64_t> matches;
  std::vector<std::uint64_t> totals;
  double brevity_penalty = 1.0;
  std::uint64_t hypothesis_length = 0;
  std::uint64_t reference_length = 0;

  nlohmann::json to_json() const;
};

// Corpus-level BLEU over token ids, no smoothing.
BleuScore bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references, int max_n = 4);
// Sentence-level BLEU with add-one smoothing of the n >= 2 precisions.
double sentence_bleu(const Sentence& hypothesis, const Sentence& reference, int max_n = 4);

struct LexAccEntry {
  double accuracy = 0.0;  // percent; 0 when total is 0
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
};

struct LexAccReport {
  LexAccEntry all, high, medium, low;

  const LexAccEntry& at(Bucket b) const;
  nlohmann::json to_json() const;
};

// What a lexical accuracy evaluation looks at: source sentences and the
// hypotheses produced for them, each with the vocabulary of its ids.
struct LexicalEvalSet {
  std::span<const Sentence> sources;
  const Vocab* source_vocab = nullptr;
  std::span<const Sentence> hypotheses;
  const Vocab* hypothesis_vocab = nullptr;
};

// Accuracy of lexical choice for source occurrences in `bucket`: an
// occurrence is correct when its sentence's hypothesis still holds an
// unconsumed acceptable translation; each hypothesis token satisfies at most
// one occurrence, in source position order.
LexAccEntry alf(const LexicalEvalSet& set, const LinkJudge& judge, const FreqProfile& source_profile,
                Bucket bucket = Bucket::Low);
// alf per bucket; All is the count-weighted aggregate. Empty buckets report
// zero occurrences; an evaluation set without any occurrence is an error.
LexAccReport bucketed_lexacc(const LexicalEvalSet& set, const LinkJudge& judge, const FreqProfile& source_profile);

// Percentage of hypothesis tokens that are Low under a target-side profile.
double lfw_output_ratio(std::span<const Sentence> hypotheses, const Vocab& hypothesis_vocab,
                        const FreqProfile& target_profile);

struct SignTest {
  std::uint64_t wins = 0;  // a > b
  std::uint64_t losses = 0;
  std::uint64_t ties = 0;
  double p_value = 1.0;
};

// Two-sided exact sign test; ties are discarded.
SignTest sign_test(std::span<const double> a, std::span<const double> b);
// Two-sided exact binomial p-value for k successes out of n at 1/2.
double binomial_two_sided(std::uint64_t k, std::uint64_t n);

// One row of a results table.
struct ResultRow {
  std::string name;
  double bleu = 0.0;
  double alf = 0.0;
  double lfw_ratio = 0.0;
  LexAccReport lexacc;
};

std::string render_results_table(std::span<const ResultRow> rows);  // BLEU / ALF / ratio
std::string render_lexacc_table(std::span<const ResultRow> rows);   // All / High / Medium / Low

}  // namespace lfr
