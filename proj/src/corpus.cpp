#include "lfr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

#include "lfr/error.hpp"
#include "lfr/util.hpp"

namespace lfr {

std::string_view to_string(Side side) { return side == Side::Source ? "source" : "target"; }

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Raw: return "raw";
    case Provenance::Kd: return "kd";
    case Provenance::Rkd: return "rkd";
    case Provenance::Mixed: return "mixed";
  }
  return "?";
}

Provenance provenance_from_string(std::string_view text) {
  if (text == "raw") return Provenance::Raw;
  if (text == "kd") return Provenance::Kd;
  if (text == "rkd") return Provenance::Rkd;
  if (text == "mixed") return Provenance::Mixed;
  throw Error("unknown provenance '" + std::string(text) + "'");
}

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::Low: return "low";
    case Bucket::Medium: return "medium";
    case Bucket::High: return "high";
  }
  return "?";
}

// ---------------------------------------------------------------------------

TokenId Vocab::add(std::string_view surface, std::uint64_t count) {
  auto it = index_.find(std::string(surface));
  TokenId id;
  if (it == index_.end()) {
    id = static_cast<TokenId>(surfaces_.size());
    surfaces_.emplace_back(surface);
    counts_.push_back(0);
    index_.emplace(surfaces_.back(), id);
  } else {
    id = it->second;
  }
  counts_[id] += count;
  total_ += count;
  return id;
}

void Vocab::add_count(TokenId id, std::uint64_t count) {
  counts_.at(id) += count;
  total_ += count;
}

std::optional<TokenId> Vocab::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::at(std::string_view surface) const {
  if (auto id = find(surface)) return *id;
  throw Error("unknown token '" + std::string(surface) + "'");
}

Vocab Vocab::without_counts() const {
  Vocab v = *this;
  std::fill(v.counts_.begin(), v.counts_.end(), 0);
  v.total_ = 0;
  return v;
}

// ---------------------------------------------------------------------------

ParallelCorpus::ParallelCorpus(Vocab source_vocab, Vocab target_vocab,
                               std::vector<SentencePair> pairs, Provenance provenance,
                               std::vector<Origin> origins)
    : source_vocab_(std::move(source_vocab)),
      target_vocab_(std::move(target_vocab)),
      pairs_(std::move(pairs)),
      provenance_(provenance),
      origins_(std::move(origins)) {
  if (!origins_.empty() && origins_.size() != pairs_.size()) {
    throw Error("origin map size " + std::to_string(origins_.size()) + " does not match " +
                std::to_string(pairs_.size()) + " pairs");
  }
  by_id_.reserve(pairs_.size());
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto& p = pairs_[i];
    if (p.source.empty() || p.target.empty()) {
      throw Error("pair " + std::to_string(p.id) + " has an empty side");
    }
    for (TokenId t : p.source) {
      if (!source_vocab_.contains(t)) {
        throw Error("pair " + std::to_string(p.id) + ": source token id " + std::to_string(t) +
                    " outside vocabulary");
      }
    }
    for (TokenId t : p.target) {
      if (!target_vocab_.contains(t)) {
        throw Error("pair " + std::to_string(p.id) + ": target token id " + std::to_string(t) +
                    " outside vocabulary");
      }
    }
    if (!by_id_.emplace(p.id, i).second) {
      throw Error("duplicate pair id " + std::to_string(p.id));
    }
  }
}

std::optional<std::size_t> ParallelCorpus::index_of(PairId id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

ParallelCorpus ParallelCorpus::swapped() const {
  std::vector<SentencePair> pairs;
  pairs.reserve(pairs_.size());
  for (const auto& p : pairs_) pairs.push_back({p.id, p.target, p.source});
  return ParallelCorpus(target_vocab_, source_vocab_, std::move(pairs), provenance_, origins_);
}

Vocab recount(const Vocab& base, const std::vector<SentencePair>& pairs, Side side) {
  Vocab v = base.without_counts();
  for (const auto& p : pairs) {
    for (TokenId t : side == Side::Source ? p.source : p.target) v.add_count(t, 1);
  }
  return v;
}

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

namespace {

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  return lines;
}

}  // namespace

ParallelCorpus ingest(std::istream& source, std::istream& target) {
  const auto src_lines = read_lines(source);
  const auto tgt_lines = read_lines(target);
  if (src_lines.size() != tgt_lines.size()) {
    throw Error("line count mismatch " + std::to_string(src_lines.size()) + "≠" +
                std::to_string(tgt_lines.size()) + " (source vs target)");
  }
  Vocab sv, tv;
  std::vector<SentencePair> pairs;
  pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair p;
    p.id = i;
    for (auto tok : split_tokens(src_lines[i])) p.source.push_back(sv.add(tok));
    for (auto tok : split_tokens(tgt_lines[i])) p.target.push_back(tv.add(tok));
    if (p.source.empty()) throw Error("empty source line " + std::to_string(i + 1));
    if (p.target.empty()) throw Error("empty target line " + std::to_string(i + 1));
    pairs.push_back(std::move(p));
  }
  return ParallelCorpus(std::move(sv), std::move(tv), std::move(pairs), Provenance::Raw);
}

ParallelCorpus ingest(const std::filesystem::path& source_file,
                      const std::filesystem::path& target_file) {
  std::ifstream s(source_file), t(target_file);
  if (!s) throw Error("cannot open source file " + source_file.string());
  if (!t) throw Error("cannot open target file " + target_file.string());
  return ingest(s, t);
}

std::string join_tokens(const Vocab& vocab, std::span<const TokenId> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.surface(tokens[i]);
  }
  return out;
}

std::string serialize_side(const ParallelCorpus& corpus, Side side) {
  std::string out;
  const auto& vocab = corpus.vocab(side);
  for (const auto& p : corpus.pairs()) {
    out += join_tokens(vocab, side == Side::Source ? p.source : p.target);
    out.push_back('\n');
  }
  return out;
}

void write_corpus(const ParallelCorpus& corpus, const std::filesystem::path& source_file,
                  const std::filesystem::path& target_file) {
  write_file_atomic(source_file, serialize_side(corpus, Side::Source));
  write_file_atomic(target_file, serialize_side(corpus, Side::Target));
}

ParallelCorpus subsample(const ParallelCorpus& corpus, std::span<const PairId> ids) {
  std::vector<PairId> missing;
  std::vector<SentencePair> pairs;
  std::vector<Origin> origins;
  std::set<PairId> seen;
  pairs.reserve(ids.size());
  for (PairId id : ids) {
    if (!seen.insert(id).second) continue;
    auto idx = corpus.index_of(id);
    if (!idx) {
      missing.push_back(id);
      continue;
    }
    pairs.push_back(corpus[*idx]);
    if (!corpus.origins().empty()) origins.push_back(corpus.origins()[*idx]);
  }
  if (!missing.empty()) {
    std::string msg = "unknown pair ids:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + std::to_string(missing[i]);
    if (missing.size() > 20) msg += " ... (" + std::to_string(missing.size()) + " total)";
    throw Error(msg);
  }
  return ParallelCorpus(corpus.source_vocab(), corpus.target_vocab(), std::move(pairs),
                        corpus.provenance(), std::move(origins));
}

namespace {

// Merge `b` into a copy of `a` by surface; returns the id map for b.
std::vector<TokenId> merge_vocab(Vocab& merged, const Vocab& b) {
  std::vector<TokenId> map(b.size());
  for (TokenId id = 0; id < b.size(); ++id) map[id] = merged.add(b.surface(id), b.count(id));
  return map;
}

}  // namespace

ParallelCorpus concat(const ParallelCorpus& a, const ParallelCorpus& b) {
  Vocab sv = a.source_vocab();
  Vocab tv = a.target_vocab();
  const auto smap = merge_vocab(sv, b.source_vocab());
  const auto tmap = merge_vocab(tv, b.target_vocab());

  std::vector<SentencePair> pairs;
  std::vector<Origin> origins;
  pairs.reserve(a.size() + b.size());
  origins.reserve(a.size() + b.size());
  PairId next = 0;
  for (const auto& p : a.pairs()) {
    pairs.push_back({next++, p.source, p.target});
    origins.push_back({0, p.id});
  }
  for (const auto& p : b.pairs()) {
    SentencePair q{next++, {}, {}};
    q.source.reserve(p.source.size());
    q.target.reserve(p.target.size());
    for (TokenId t : p.source) q.source.push_back(smap[t]);
    for (TokenId t : p.target) q.target.push_back(tmap[t]);
    pairs.push_back(std::move(q));
    origins.push_back({1, p.id});
  }
  return ParallelCorpus(std::move(sv), std::move(tv), std::move(pairs), Provenance::Mixed,
                        std::move(origins));
}

std::string corpus_digest(const ParallelCorpus& corpus) {
  Digest d;
  for (const auto& p : corpus.pairs()) {
    d.update(p.id);
    d.update(join_tokens(corpus.source_vocab(), p.source));
    d.update(std::string_view("\t"));
    d.update(join_tokens(corpus.target_vocab(), p.target));
    d.update(std::string_view("\n"));
  }
  return d.hex();
}

nlohmann::json corpus_metadata(const ParallelCorpus& corpus) {
  std::uint64_t src_tokens = 0, tgt_tokens = 0;
  for (const auto& p : corpus.pairs()) {
    src_tokens += p.source.size();
    tgt_tokens += p.target.size();
  }
  return {
      {"provenance", to_string(corpus.provenance())},
      {"pairs", corpus.size()},
      {"source_tokens", src_tokens},
      {"target_tokens", tgt_tokens},
      {"source_types", corpus.source_vocab().size()},
      {"target_types", corpus.target_vocab().size()},
      {"digest", corpus_digest(corpus)},
  };
}

// ---------------------------------------------------------------------------

void BucketingConfig::validate() const {
  if (mode == Mode::Threshold) {
    if (!(low_below > 0.0) || !(high_at_least >= low_below) || high_at_least > 1.0) {
      throw UsageError("bucketing thresholds must satisfy 0 < low <= high <= 1");
    }
  } else {
    if (!(high_mass >= 0.0 && high_mass <= 1.0) || !(low_mass >= 0.0 && low_mass <= 1.0)) {
      throw UsageError("bucketing mass fractions must lie in [0, 1]");
    }
  }
}

std::vector<Bucket> assign_buckets(std::span<const std::uint64_t> counts,
                                   const BucketingConfig& config) {
  config.validate();
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  std::vector<Bucket> out(counts.size(), Bucket::Low);
  if (total == 0) return out;

  if (config.mode == BucketingConfig::Mode::Threshold) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double rf = static_cast<double>(counts[i]) / static_cast<double>(total);
      out[i] = rf < config.low_below ? Bucket::Low
               : rf >= config.high_at_least ? Bucket::High
                                            : Bucket::Medium;
    }
    return out;
  }

  // Equal counts are bucketed as a group so ties never straddle a cut.
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  std::uint64_t before = 0;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t h = g;
    std::uint64_t group_mass = 0;
    while (h < order.size() && counts[order[h]] == counts[order[g]]) group_mass += counts[order[h++]];
    const double mass_before = static_cast<double>(before) / static_cast<double>(total);
    Bucket b = mass_before < config.high_mass            ? Bucket::High
               : mass_before >= 1.0 - config.low_mass    ? Bucket::Low
                                                         : Bucket::Medium;
    for (std::size_t k = g; k < h; ++k) out[order[k]] = b;
    before += group_mass;
    g = h;
  }
  return out;
}

FreqProfile::FreqProfile(Side side, const Vocab& vocab, const BucketingConfig& config)
    : side_(side), config_(config), total_(vocab.total()) {
  if (vocab.size() == 0) throw Error("cannot profile an empty vocabulary");
  if (total_ == 0) throw Error("cannot profile a vocabulary with no token occurrences");
  surfaces_.reserve(vocab.size());
  counts_.reserve(vocab.size());
  for (TokenId id = 0; id < vocab.size(); ++id) {
    surfaces_.push_back(vocab.surface(id));
    counts_.push_back(vocab.count(id));
    relfreq_.push_back(static_cast<double>(vocab.count(id)) / static_cast<double>(total_));
  }
  buckets_ = assign_buckets(counts_, config_);
}

std::vector<Bucket> FreqProfile::buckets_for(const Vocab& vocab) const {
  std::vector<Bucket> out(vocab.size(), Bucket::Low);
  std::unordered_map<std::string_view, std::size_t> index;
  for (TokenId id = 0; id < vocab.size(); ++id) {
    if (id < surfaces_.size() && vocab.surface(id) == surfaces_[id]) {
      out[id] = buckets_[id];
      continue;
    }
    // Slow path: the vocabulary does not extend ours id-for-id.
    if (index.empty()) {
      for (std::size_t i = 0; i < surfaces_.size(); ++i) index.emplace(surfaces_[i], i);
    }
    auto it = index.find(vocab.surface(id));
    if (it != index.end()) out[id] = buckets_[it->second];
  }
  return out;
}

nlohmann::json FreqProfile::to_json() const {
  nlohmann::json cfg;
  if (config_.mode == BucketingConfig::Mode::Threshold) {
    cfg = {{"mode", "threshold"}, {"low_below", config_.low_below},
           {"high_at_least", config_.high_at_least}};
  } else {
    cfg = {{"mode", "cumulative-mass"}, {"high_mass", config_.high_mass},
           {"low_mass", config_.low_mass}};
  }
  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    tokens.push_back({{"token", surfaces_[i]},
                      {"count", counts_[i]},
                      {"relfreq", relfreq_[i]},
                      {"bucket", to_string(buckets_[i])}});
  }
  return {{"side", to_string(side_)}, {"total", total_}, {"bucketing", cfg}, {"tokens", tokens}};
}

FreqProfile build_freq_profile(const ParallelCorpus& corpus, Side side,
                               const BucketingConfig& config) {
  if (corpus.empty()) throw Error("cannot profile an empty corpus");
  return FreqProfile(side, corpus.vocab(side), config);
}

}  // namespace lfr
