#include "lfr/lfwlinks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "lfr/error.hpp"
#include "lfr/util.hpp"

namespace lfr {

LinkJudge LinkJudge::accept_all() { return LinkJudge{}; }

LinkJudge LinkJudge::from_gold(const GoldLexicon& lexicon) {
  LinkJudge j;
  j.kind_ = Kind::GoldLexicon;
  for (TokenId s = 0; s < lexicon.size(); ++s) {
    auto& set = j.acceptable_[lexicon.source_vocab().surface(s)];
    for (const auto& m : lexicon.modes(s)) set.insert(lexicon.target_vocab().surface(m.target));
  }
  return j;
}

LinkJudge LinkJudge::from_reference(std::map<std::string, std::set<std::string>> acceptable) {
  LinkJudge j;
  j.kind_ = Kind::ReferenceLexicon;
  for (auto& [s, t] : acceptable) j.acceptable_.emplace(s, std::move(t));
  return j;
}

LinkJudge LinkJudge::from_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error("cannot parse lexicon " + path.string() + ": " + e.what());
    }
    if (j.contains("entries")) return from_gold(GoldLexicon::from_json(j));
    std::map<std::string, std::set<std::string>> acc;
    for (auto it = j.begin(); it != j.end(); ++it) {
      for (const auto& t : it.value()) acc[it.key()].insert(t.get<std::string>());
    }
    return from_reference(std::move(acc));
  }
  std::map<std::string, std::set<std::string>> acc;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    auto toks = split_tokens(line);
    if (toks.empty()) continue;
    if (toks.size() != 2) {
      throw Error("lexicon " + path.string() + " line " + std::to_string(no) + ": expected 'source target'");
    }
    acc[std::string(toks[0])].insert(std::string(toks[1]));
  }
  return from_reference(std::move(acc));
}

LinkJudge LinkJudge::from_alignment(const ParallelCorpus& corpus, const Alignment& alignment,
                                    std::uint64_t min_count) {
  if (alignment.size() != corpus.size()) throw Error("alignment and corpus differ in sentence count");
  std::map<std::pair<TokenId, TokenId>, std::uint64_t> counts;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& p = corpus[s];
    for (const Link& l : alignment[s]) {
      if (l.source >= p.source.size() || l.target >= p.target.size()) {
        throw Error("alignment link out of bounds in pair " + std::to_string(p.id));
      }
      ++counts[{p.source[l.source], p.target[l.target]}];
    }
  }
  std::map<std::string, std::set<std::string>> acc;
  for (const auto& [st, n] : counts) {
    if (n >= min_count) acc[corpus.source_vocab().surface(st.first)].insert(corpus.target_vocab().surface(st.second));
  }
  return from_reference(std::move(acc));
}

std::string LinkJudge::to_text() const {
  std::string out;
  for (const auto& [s, targets] : acceptable_) {
    for (const auto& t : targets) out += s + " " + t + "\n";
  }
  return out;
}

std::string_view LinkJudge::kind_name() const {
  switch (kind_) {
    case Kind::GoldLexicon: return "gold-lexicon";
    case Kind::ReferenceLexicon: return "reference-lexicon";
    case Kind::AcceptAll: return "accept-all";
  }
  return "?";
}

bool LinkJudge::accepts(std::string_view source, std::string_view target) const {
  if (kind_ == Kind::AcceptAll) return true;
  auto it = acceptable_.find(source);
  if (it == acceptable_.end()) return false;
  return it->second.count(std::string(target)) > 0;
}

LinkJudge::Bound LinkJudge::bind(const Vocab& source_vocab, const Vocab& target_vocab) const {
  Bound b;
  b.all_ = kind_ == Kind::AcceptAll;
  b.sets_.resize(source_vocab.size());
  if (b.all_) return b;
  for (TokenId s = 0; s < source_vocab.size(); ++s) {
    auto it = acceptable_.find(source_vocab.surface(s));
    if (it == acceptable_.end()) continue;
    for (const auto& t : it->second) {
      if (auto id = target_vocab.find(t)) b.sets_[s].push_back(*id);
    }
    std::sort(b.sets_[s].begin(), b.sets_[s].end());
  }
  return b;
}

bool LinkJudge::Bound::accepts(TokenId source, TokenId target) const {
  if (all_) return true;
  if (source >= sets_.size()) return false;
  const auto& s = sets_[source];
  return std::binary_search(s.begin(), s.end(), target);
}

const std::vector<TokenId>& LinkJudge::Bound::acceptable(TokenId source) const {
  static const std::vector<TokenId> none;
  return source < sets_.size() ? sets_[source] : none;
}

// ---------------------------------------------------------------------------

double harmonic_f1(double recall, double precision) {
  if (recall + precision <= 0.0) return 0.0;
  return 2.0 * recall * precision / (recall + precision);
}

double round1(double percent) { return std::round(percent * 10.0) / 10.0; }

nlohmann::json LinkReport::to_json() const {
  return {{"dataset", dataset},
          {"direction", to_string(direction)},
          {"recall", round1(recall)},
          {"precision", round1(precision)},
          {"f1", round1(f1)},
          {"low_total", low_total},
          {"low_aligned", low_aligned},
          {"links_correct", links_correct},
          {"links_total", links_total}};
}

std::vector<LfwLink> extract_lfw_links(const Alignment& alignment, const ParallelCorpus& corpus,
                                       const FreqProfile& profile, Direction direction) {
  const Side side = frequency_side(direction);
  if (profile.side() != side) {
    throw Error("frequency profile is for the " + std::string(to_string(profile.side())) + " side but " +
                std::string(to_string(direction)) + " links need the " + std::string(to_string(side)) + " side");
  }
  if (alignment.size() != corpus.size()) {
    throw Error("alignment has " + std::to_string(alignment.size()) + " sentences, corpus has " +
                std::to_string(corpus.size()));
  }
  const auto buckets = profile.buckets_for(corpus.vocab(side));
  std::vector<LfwLink> out;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& p = corpus[s];
    for (const Link& l : alignment[s]) {
      if (l.source >= p.source.size() || l.target >= p.target.size()) {
        throw Error("alignment link " + std::to_string(l.source) + "-" + std::to_string(l.target) +
                    " out of bounds in pair " + std::to_string(p.id));
      }
      const TokenId freq_tok = side == Side::Source ? p.source[l.source] : p.target[l.target];
      if (buckets[freq_tok] != Bucket::Low) continue;
      out.push_back({p.id, l.source, l.target, p.source[l.source], p.target[l.target], direction});
    }
  }
  return out;
}

LinkReport link_prf(std::span<const LfwLink> links, const ParallelCorpus& subset,
                    const FreqProfile& profile, const LinkJudge& judge, Direction direction) {
  const Side side = frequency_side(direction);
  if (profile.side() != side) throw Error("frequency profile side does not match the link direction");
  const auto buckets = profile.buckets_for(subset.vocab(side));

  LinkReport r;
  r.direction = direction;
  for (const auto& p : subset.pairs()) {
    for (TokenId t : side == Side::Source ? p.source : p.target) r.low_total += buckets[t] == Bucket::Low;
  }
  if (r.low_total == 0) throw Error("no low-frequency tokens in subset");

  const auto bound = judge.bind(subset.source_vocab(), subset.target_vocab());
  std::set<std::pair<PairId, std::uint32_t>> aligned;
  for (const auto& l : links) {
    auto idx = subset.index_of(l.pair);
    if (!idx) throw Error("link from pair " + std::to_string(l.pair) + " which is not in the subset");
    const auto& p = subset[*idx];
    if (l.source_index >= p.source.size() || l.target_index >= p.target.size() ||
        p.source[l.source_index] != l.source_token || p.target[l.target_index] != l.target_token) {
      throw Error("link does not match pair " + std::to_string(l.pair));
    }
    aligned.emplace(l.pair, side == Side::Source ? l.source_index : l.target_index);
    ++r.links_total;
    r.links_correct += bound.accepts(l.source_token, l.target_token);
  }
  r.low_aligned = aligned.size();
  r.recall = 100.0 * static_cast<double>(r.low_aligned) / static_cast<double>(r.low_total);
  r.precision = r.links_total ? 100.0 * static_cast<double>(r.links_correct) / static_cast<double>(r.links_total)
                              : 0.0;
  r.f1 = harmonic_f1(r.recall, r.precision);
  return r;
}

std::vector<LinkReport> compare_datasets(std::span<const TaggedCorpus> datasets,
                                         const ParallelCorpus& origin,
                                         std::span<const PairId> subset_ids,
                                         const LinkJudge& judge, const CompareOptions& options) {
  options.align.validate();
  const FreqProfile src_profile = build_freq_profile(origin, Side::Source, options.bucketing);
  const FreqProfile tgt_profile = build_freq_profile(origin, Side::Target, options.bucketing);
  for (PairId id : subset_ids) {
    if (!origin.index_of(id)) throw Error("subset id " + std::to_string(id) + " not in the origin corpus");
  }
  const std::unordered_set<PairId> wanted(subset_ids.begin(), subset_ids.end());

  std::vector<LinkReport> out;
  for (const auto& ds : datasets) {
    const ParallelCorpus& c = *ds.corpus;
    // Matched subset, by pair id (or by origin id for concatenations).
    std::vector<std::size_t> rows;
    std::vector<PairId> ids;
    for (std::size_t s = 0; s < c.size(); ++s) {
      const PairId key = c.origins().empty() ? c[s].id : c.origins()[s].id;
      if (wanted.count(key)) {
        rows.push_back(s);
        ids.push_back(c[s].id);
      }
    }
    if (c.origins().empty() && rows.size() != wanted.size()) {
      throw Error("dataset '" + ds.tag + "' lacks some subset ids");
    }
    const ParallelCorpus sub = subsample(c, ids);

    for (Direction d : {Direction::SourceToTarget, Direction::TargetToSource}) {
      const TranslationTable table = em_train(c, d, options.align);
      const Alignment full = viterbi_align(table, c, options.align);
      Alignment sub_align;
      sub_align.reserve(rows.size());
      for (std::size_t s : rows) sub_align.push_back(full[s]);
      const FreqProfile& prof = d == Direction::SourceToTarget ? src_profile : tgt_profile;
      const auto links = extract_lfw_links(sub_align, sub, prof, d);
      LinkReport r = link_prf(links, sub, prof, judge, d);
      r.dataset = ds.tag;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string render_link_table(std::span<const LinkReport> reports) {
  // Rows keyed by dataset in first-seen order.
  std::vector<std::string> names;
  for (const auto& r : reports) {
    if (std::find(names.begin(), names.end(), r.dataset) == names.end()) names.push_back(r.dataset);
  }
  std::size_t w = 4;
  for (const auto& n : names) w = std::max(w, n.size());
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(n, s.size()), ' ');
    return s;
  };
  auto cell = [](double v) {
    std::string s = fixed(round1(v), 1);
    return std::string(6 - std::min<std::size_t>(6, s.size()), ' ') + s;
  };
  std::ostringstream out;
  out << pad("Data", w) << " |    s->t LFW Links    |    t->s LFW Links\n";
  out << pad("", w) << " |      R      P     F1 |      R      P     F1\n";
  out << std::string(w, '-') << "-+----------------------+----------------------\n";
  for (const auto& n : names) {
    out << pad(n, w) << " |";
    for (Direction d : {Direction::SourceToTarget, Direction::TargetToSource}) {
      auto it = std::find_if(reports.begin(), reports.end(),
                             [&](const LinkReport& r) { return r.dataset == n && r.direction == d; });
      if (it == reports.end()) {
        out << "      -      -      -";
      } else {
        out << ' ' << cell(it->recall) << ' ' << cell(it->precision) << ' ' << cell(it->f1);
      }
      if (d == Direction::SourceToTarget) out << " |";
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json link_reports_json(std::span<const LinkReport> reports, const LinkJudge& judge,
                                 std::size_t subset_size) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) rows.push_back(r.to_json());
  return {{"reports", std::move(rows)},
          {"judge", judge.kind_name()},
          {"recall_level", "token-occurrence"},
          {"subset_balance", "identical pair-id sets"},
          {"subset_pairs", subset_size}};
}

}  // namespace lfr
