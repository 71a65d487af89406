#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfr/corpus.hpp"

namespace lfr {

// s->t: the table is t(target | source) and every target position picks at
// most one source position. t->s is the same model on the swapped corpus.
enum class Direction { SourceToTarget, TargetToSource };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view text);
Direction reverse(Direction d);

// One alignment link; indices are 0-based positions, source first.
struct Link {
  std::uint32_t source = 0;
  std::uint32_t target = 0;

  auto operator<=>(const Link&) const = default;
};

using SentenceAlignment = std::vector<Link>;
// One entry per corpus pair, in corpus order.
using Alignment = std::vector<SentenceAlignment>;

struct AlignConfig {
  int iterations = 5;
  double null_prob = 0.08;       // p0, fixed prior mass of the NULL word
  double diagonal_tension = 4.0;  // lambda; 0 selects plain Model 1
  double floor = 1e-12;           // decode-time probability for unseen pairs
  int threads = 1;                // E-step workers

  void validate() const;
  nlohmann::json to_json() const;
};

// Conditional lexical distributions t(conditioned | conditioning). The
// conditioning side carries an extra NULL row at index null_id().
class TranslationTable {
 public:
  TranslationTable() = default;
  TranslationTable(Direction direction, std::size_t conditioning_size,
                   std::size_t conditioned_size);

  Direction direction() const { return direction_; }
  std::size_t conditioning_size() const { return conditioning_size_; }
  std::size_t conditioned_size() const { return conditioned_size_; }
  TokenId null_id() const { return static_cast<TokenId>(conditioning_size_); }

  // Stored probability; zero for pairs that never co-occurred in training.
  // Rows that received no expected counts stay uniform over the vocabulary.
  double prob(TokenId conditioning, TokenId conditioned) const;

  // Explicit entries of one row, sorted by conditioned id.
  const std::vector<std::pair<TokenId, double>>& row(TokenId conditioning) const {
    return rows_.at(conditioning);
  }
  bool trained(TokenId conditioning) const { return trained_.at(conditioning); }

  // Highest-probability conditioned token of a row, lowest id on ties.
  // Rows without explicit entries fall back to the NULL row, then to id 0.
  TokenId argmax(TokenId conditioning) const;

  const std::vector<double>& log_likelihood() const { return log_likelihood_; }

  // Sum of row probabilities over the whole conditioned vocabulary.
  double row_mass(TokenId conditioning) const;

  nlohmann::json to_json(const Vocab& conditioning_vocab, const Vocab& conditioned_vocab) const;

 private:
  friend TranslationTable em_train(const ParallelCorpus&, Direction, const AlignConfig&);

  Direction direction_ = Direction::SourceToTarget;
  std::size_t conditioning_size_ = 0;
  std::size_t conditioned_size_ = 0;
  std::vector<std::vector<std::pair<TokenId, double>>> rows_;
  std::vector<bool> trained_;
  std::vector<double> log_likelihood_;
};

// Diagonal prior exp(-lambda * |i/n - j/m|) between conditioning position i
// (of n) and conditioned position j (of m).
double diagonal_weight(std::size_t i, std::size_t n, std::size_t j, std::size_t m, double tension);

// EM training of the diagonal-prior Model 1 in the given direction. The log-
// likelihood trace holds one value per iteration, evaluated in its E-step.
TranslationTable em_train(const ParallelCorpus& corpus, Direction direction,
                          const AlignConfig& config);

// Hard decoding: every conditioned position links to its best conditioning
// position, or to nothing when NULL wins. Links are returned source-first.
Alignment viterbi_align(const TranslationTable& table, const ParallelCorpus& corpus,
                        const AlignConfig& config);

// Pharaoh format: one line per sentence, space separated "i-j", source first.
std::string format_pharaoh(const SentenceAlignment& links);
void write_pharaoh(std::ostream& out, const Alignment& alignment);
void write_pharaoh(const std::filesystem::path& path, const Alignment& alignment);
Alignment read_pharaoh(std::istream& in);
Alignment read_pharaoh(const std::filesystem::path& path);

}  // namespace lfr
