#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace lfr {

using TokenId = std::uint32_t;
using PairId = std::uint64_t;
using Sentence = std::vector<TokenId>;

enum class Side { Source, Target };
enum class Provenance { Raw, Kd, Rkd, Mixed };

std::string_view to_string(Side side);
std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view text);

// Surface <-> dense id bijection with per-id occurrence counts.
class Vocab {
 public:
  // Interns `surface` (if new) and adds `count` occurrences.
  TokenId add(std::string_view surface, std::uint64_t count = 1);
  void add_count(TokenId id, std::uint64_t count);

  std::optional<TokenId> find(std::string_view surface) const;
  TokenId at(std::string_view surface) const;  // throws on unknown surface

  const std::string& surface(TokenId id) const { return surfaces_.at(id); }
  std::uint64_t count(TokenId id) const { return counts_.at(id); }
  std::uint64_t total() const { return total_; }
  std::size_t size() const { return surfaces_.size(); }
  bool contains(TokenId id) const { return id < surfaces_.size(); }

  // Same surfaces and ids, all counts zeroed.
  Vocab without_counts() const;

  bool operator==(const Vocab& other) const {
    return surfaces_ == other.surfaces_ && counts_ == other.counts_;
  }

 private:
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::string> surfaces_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct SentencePair {
  PairId id = 0;
  Sentence source;
  Sentence target;

  bool operator==(const SentencePair&) const = default;
};

// Where a pair of a concatenated corpus came from.
struct Origin {
  std::uint32_t part = 0;  // 0 = left operand, 1 = right operand
  PairId id = 0;           // pair id within that operand

  bool operator==(const Origin&) const = default;
};

class ParallelCorpus {
 public:
  ParallelCorpus() = default;
  // Validates: token ids in range, non-empty sides, unique pair ids.
  ParallelCorpus(Vocab source_vocab, Vocab target_vocab, std::vector<SentencePair> pairs,
                 Provenance provenance, std::vector<Origin> origins = {});

  const Vocab& source_vocab() const { return source_vocab_; }
  const Vocab& target_vocab() const { return target_vocab_; }
  const Vocab& vocab(Side side) const {
    return side == Side::Source ? source_vocab_ : target_vocab_;
  }
  const std::vector<SentencePair>& pairs() const { return pairs_; }
  const SentencePair& operator[](std::size_t i) const { return pairs_[i]; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  Provenance provenance() const { return provenance_; }
  // Non-empty only for concatenated corpora; parallel to pairs().
  const std::vector<Origin>& origins() const { return origins_; }

  // Position of a pair id, if present.
  std::optional<std::size_t> index_of(PairId id) const;

  // Source and target exchanged (including vocabularies).
  ParallelCorpus swapped() const;

  bool operator==(const ParallelCorpus& other) const {
    return provenance_ == other.provenance_ && source_vocab_ == other.source_vocab_ &&
           target_vocab_ == other.target_vocab_ && pairs_ == other.pairs_ &&
           origins_ == other.origins_;
  }

 private:
  Vocab source_vocab_;
  Vocab target_vocab_;
  std::vector<SentencePair> pairs_;
  Provenance provenance_ = Provenance::Raw;
  std::vector<Origin> origins_;
  std::unordered_map<PairId, std::size_t> by_id_;
};

// Builds a vocabulary whose counts are recounted from `pairs` on `side`,
// keeping every surface of `base` at its id.
Vocab recount(const Vocab& base, const std::vector<SentencePair>& pairs, Side side);

// Tokenize one line on ASCII whitespace.
std::vector<std::string_view> split_tokens(std::string_view line);

ParallelCorpus ingest(std::istream& source, std::istream& target);
ParallelCorpus ingest(const std::filesystem::path& source_file,
                      const std::filesystem::path& target_file);

// One sentence per line, tokens joined by single spaces, trailing newline.
std::string serialize_side(const ParallelCorpus& corpus, Side side);
void write_corpus(const ParallelCorpus& corpus, const std::filesystem::path& source_file,
                  const std::filesystem::path& target_file);

std::string join_tokens(const Vocab& vocab, std::span<const TokenId> tokens);

ParallelCorpus subsample(const ParallelCorpus& corpus, std::span<const PairId> ids);
ParallelCorpus concat(const ParallelCorpus& a, const ParallelCorpus& b);

// Stable content digest over both sides' surfaces and pair ids.
std::string corpus_digest(const ParallelCorpus& corpus);

nlohmann::json corpus_metadata(const ParallelCorpus& corpus);

// ---------------------------------------------------------------------------
// Frequency profiles

enum class Bucket : std::uint8_t { Low = 0, Medium = 1, High = 2 };
std::string_view to_string(Bucket b);

struct BucketingConfig {
  enum class Mode { Threshold, CumulativeMass };
  Mode mode = Mode::Threshold;
  // Threshold mode: Low iff relfreq < low_below, High iff relfreq >= high_at_least.
  double low_below = 1e-4;
  double high_at_least = 1e-3;
  // Cumulative-mass mode: High takes the most frequent types covering
  // `high_mass` of all tokens, Low the least frequent covering `low_mass`.
  double high_mass = 0.5;
  double low_mass = 0.1;

  void validate() const;
};

class FreqProfile {
 public:
  FreqProfile(Side side, const Vocab& vocab, const BucketingConfig& config);

  Side side() const { return side_; }
  const BucketingConfig& config() const { return config_; }
  std::size_t size() const { return surfaces_.size(); }
  std::uint64_t total() const { return total_; }

  const std::string& surface(TokenId id) const { return surfaces_.at(id); }
  std::uint64_t count(TokenId id) const { return counts_.at(id); }
  double relfreq(TokenId id) const { return relfreq_.at(id); }
  Bucket bucket(TokenId id) const { return buckets_.at(id); }
  const std::vector<Bucket>& buckets() const { return buckets_; }

  // Bucket per id of `vocab`, matched by surface. Surfaces absent from the
  // profiled corpus have frequency zero and land in Low.
  std::vector<Bucket> buckets_for(const Vocab& vocab) const;

  nlohmann::json to_json() const;

 private:
  Side side_;
  BucketingConfig config_;
  std::vector<std::string> surfaces_;
  std::vector<std::uint64_t> counts_;
  std::vector<double> relfreq_;
  std::vector<Bucket> buckets_;
  std::uint64_t total_ = 0;
};

// Buckets from raw counts; the core of FreqProfile, exposed for property tests.
std::vector<Bucket> assign_buckets(std::span<const std::uint64_t> counts,
                                   const BucketingConfig& config);

FreqProfile build_freq_profile(const ParallelCorpus& corpus, Side side,
                               const BucketingConfig& config = {});

}  // namespace lfr
