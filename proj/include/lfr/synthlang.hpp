#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfr/align.hpp"
#include "lfr/corpus.hpp"

namespace lfr {

struct GenConfig {
  std::size_t source_vocab_size = 2000;
  double zipf_exponent = 1.0;
  std::uint32_t min_modes = 1;  // modes per source word, uniform on [min, max]
  std::uint32_t max_modes = 4;
  std::uint32_t min_length = 5;  // sentence length, uniform on [min, max]
  std::uint32_t max_length = 15;
  double swap_prob = 0.1;  // per adjacent target pair, non-overlapping
  std::size_t num_pairs = 20000;
  std::uint64_t seed = 1;

  // Lexicon shape. Each source word owns one target word (its primary
  // mode); further modes reuse other words' targets drawn with Zipfian
  // preference for frequent ones when `shared_mode_prob` fires, uniformly
  // otherwise.
  double shared_mode_prob = 0.5;
  double primary_mass_min = 0.4;  // primary mode probability ~ U[min, max]
  double primary_mass_max = 0.8;

  void validate() const;
  nlohmann::json to_json() const;
};

struct LexiconMode {
  TokenId target = 0;
  double prob = 0.0;

  bool operator==(const LexiconMode&) const = default;
};

// Translation modes per source id, in source-vocabulary id order.
class GoldLexicon {
 public:
  GoldLexicon() = default;
  GoldLexicon(Vocab source_vocab, Vocab target_vocab, std::vector<std::vector<LexiconMode>> entries);

  const Vocab& source_vocab() const { return source_vocab_; }
  const Vocab& target_vocab() const { return target_vocab_; }
  const std::vector<LexiconMode>& modes(TokenId source) const { return entries_.at(source); }
  std::size_t size() const { return entries_.size(); }

  nlohmann::json to_json() const;
  static GoldLexicon from_json(const nlohmann::json& j);

  bool operator==(const GoldLexicon&) const = default;

 private:
  Vocab source_vocab_;  // counts are zero; surfaces only
  Vocab target_vocab_;
  std::vector<std::vector<LexiconMode>> entries_;
};

// Highest-probability mode; lowest target id on ties.
TokenId modal_translation(const GoldLexicon& lexicon, TokenId source);

struct SyntheticData {
  ParallelCorpus corpus;
  GoldLexicon lexicon;
  Alignment gold;  // parallel to corpus pairs
};

GoldLexicon build_lexicon(const GenConfig& config);

// Draws `num_pairs` sentence pairs from a lexicon. `stream` names the random
// sub-stream, so held-out sets can be drawn independently of training data.
// The corpus vocabularies list every lexicon word (ids equal lexicon ids),
// with counts taken from the sample.
SyntheticData sample_pairs(const GoldLexicon& lexicon, const GenConfig& config,
                           std::size_t num_pairs, std::string_view stream);

SyntheticData generate(const GenConfig& config);

}  // namespace lfr
