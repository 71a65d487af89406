#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfr/align.hpp"
#include "lfr/corpus.hpp"
#include "lfr/synthlang.hpp"

namespace lfr {

// Correctness predicate over (source word, target word) by surface form.
class LinkJudge {
 public:
  enum class Kind { GoldLexicon, ReferenceLexicon, AcceptAll };

  static LinkJudge accept_all();
  // Every mode of a source word is acceptable.
  static LinkJudge from_gold(const GoldLexicon& lexicon);
  static LinkJudge from_reference(std::map<std::string, std::set<std::string>> acceptable);
  // JSON gold lexicon ({"entries": ...}), JSON object {source: [targets]},
  // or plain text with one "source target" pair per line.
  static LinkJudge from_file(const std::filesystem::path& path);
  // Word pairs linked at least `min_count` times in a Viterbi alignment of
  // `corpus`, for real data without a reference lexicon.
  static LinkJudge from_alignment(const ParallelCorpus& corpus, const Alignment& alignment,
                                  std::uint64_t min_count = 1);

  Kind kind() const { return kind_; }
  std::string_view kind_name() const;
  bool accepts(std::string_view source, std::string_view target) const;
  // "source target" lines, sorted; readable by from_file. Empty for accept-all.
  std::string to_text() const;

  // Id-level view for one vocabulary pair.
  class Bound {
   public:
    bool accepts(TokenId source, TokenId target) const;
    // Acceptable targets of a source id, ascending; empty under accept-all.
    const std::vector<TokenId>& acceptable(TokenId source) const;
    bool accepts_all() const { return all_; }

   private:
    friend class LinkJudge;
    bool all_ = false;
    std::vector<std::vector<TokenId>> sets_;
  };
  Bound bind(const Vocab& source_vocab, const Vocab& target_vocab) const;

 private:
  Kind kind_ = Kind::AcceptAll;
  std::map<std::string, std::set<std::string>, std::less<>> acceptable_;
};

struct LfwLink {
  PairId pair = 0;
  std::uint32_t source_index = 0;
  std::uint32_t target_index = 0;
  TokenId source_token = 0;
  TokenId target_token = 0;
  Direction direction = Direction::SourceToTarget;

  auto operator<=>(const LfwLink&) const = default;
};

struct LinkReport {
  std::string dataset;
  Direction direction = Direction::SourceToTarget;
  double recall = 0.0;  // percent
  double precision = 0.0;
  double f1 = 0.0;
  std::uint64_t low_total = 0;    // Low occurrences on the frequency side
  std::uint64_t low_aligned = 0;  // ... that take part in at least one link
  std::uint64_t links_correct = 0;
  std::uint64_t links_total = 0;

  nlohmann::json to_json() const;
};

// Harmonic mean of two percentages; zero when both are zero.
double harmonic_f1(double recall, double precision);
double round1(double percent);

// The side whose word frequency defines a link as low-frequency.
inline Side frequency_side(Direction d) {
  return d == Direction::SourceToTarget ? Side::Source : Side::Target;
}

// Every alignment link whose frequency-side token is Low under `profile`.
std::vector<LfwLink> extract_lfw_links(const Alignment& alignment, const ParallelCorpus& corpus,
                                       const FreqProfile& profile, Direction direction);

// Occurrence-level recall, judged precision and F1 on a subset corpus.
LinkReport link_prf(std::span<const LfwLink> links, const ParallelCorpus& subset,
                    const FreqProfile& profile, const LinkJudge& judge, Direction direction);

struct TaggedCorpus {
  std::string tag;
  const ParallelCorpus* corpus = nullptr;
};

struct CompareOptions {
  AlignConfig align;
  BucketingConfig bucketing;
};

// Table-2 style analysis: for every dataset and both directions, align the
// full dataset, keep the matched subset and score its low-frequency links.
// Frequency profiles always come from `origin`. For concatenated datasets the
// subset holds every pair whose origin id is in `subset_ids`.
std::vector<LinkReport> compare_datasets(std::span<const TaggedCorpus> datasets,
                                         const ParallelCorpus& origin,
                                         std::span<const PairId> subset_ids,
                                         const LinkJudge& judge, const CompareOptions& options);

std::string render_link_table(std::span<const LinkReport> reports);
nlohmann::json link_reports_json(std::span<const LinkReport> reports, const LinkJudge& judge,
                                 std::size_t subset_size);

}  // namespace lfr
