#include "lfr/synthlang.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lfr/error.hpp"
#include "lfr/util.hpp"

namespace lfr {

void GenConfig::validate() const {
  if (source_vocab_size == 0) throw UsageError("source vocabulary size must be positive");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) {
    throw UsageError("Zipf exponent must be a finite non-negative number");
  }
  if (min_modes < 1 || max_modes < min_modes) throw UsageError("modes per word must satisfy 1 <= min <= max");
  if (max_modes > source_vocab_size) throw UsageError("more modes per word than target words");
  if (min_length < 1 || max_length < min_length) throw UsageError("sentence lengths must satisfy 1 <= min <= max");
  if (!(swap_prob >= 0.0 && swap_prob <= 0.5)) throw UsageError("swap probability must lie in [0, 0.5]");
  if (!(shared_mode_prob >= 0.0 && shared_mode_prob <= 1.0)) {
    throw UsageError("shared-mode probability must lie in [0, 1]");
  }
  if (!(primary_mass_min > 0.0 && primary_mass_min <= primary_mass_max && primary_mass_max <= 1.0)) {
    throw UsageError("primary mode mass range must satisfy 0 < min <= max <= 1");
  }
}

nlohmann::json GenConfig::to_json() const {
  return {{"source_vocab_size", source_vocab_size},
          {"zipf_exponent", zipf_exponent},
          {"min_modes", min_modes},
          {"max_modes", max_modes},
          {"min_length", min_length},
          {"max_length", max_length},
          {"swap_prob", swap_prob},
          {"num_pairs", num_pairs},
          {"seed", seed},
          {"shared_mode_prob", shared_mode_prob},
          {"primary_mass_min", primary_mass_min},
          {"primary_mass_max", primary_mass_max}};
}

GoldLexicon::GoldLexicon(Vocab source_vocab, Vocab target_vocab,
                         std::vector<std::vector<LexiconMode>> entries)
    : source_vocab_(std::move(source_vocab)),
      target_vocab_(std::move(target_vocab)),
      entries_(std::move(entries)) {
  if (entries_.size() != source_vocab_.size()) {
    throw Error("lexicon has " + std::to_string(entries_.size()) + " entries for " +
                std::to_string(source_vocab_.size()) + " source words");
  }
  for (TokenId s = 0; s < entries_.size(); ++s) {
    const auto& modes = entries_[s];
    if (modes.empty()) throw Error("lexicon entry '" + source_vocab_.surface(s) + "' has no modes");
    double total = 0.0;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      if (!(modes[k].prob > 0.0 && modes[k].prob <= 1.0)) {
        throw Error("lexicon entry '" + source_vocab_.surface(s) + "' has a mode probability outside (0, 1]");
      }
      if (!target_vocab_.contains(modes[k].target)) throw Error("lexicon target id out of range");
      for (std::size_t l = 0; l < k; ++l) {
        if (modes[l].target == modes[k].target) {
          throw Error("lexicon entry '" + source_vocab_.surface(s) + "' repeats a target");
        }
      }
      total += modes[k].prob;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error("lexicon entry '" + source_vocab_.surface(s) + "' probabilities sum to " + std::to_string(total));
    }
  }
}

nlohmann::json GoldLexicon::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (TokenId s = 0; s < entries_.size(); ++s) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : entries_[s]) {
      modes.push_back({{"target", target_vocab_.surface(m.target)}, {"prob", m.prob}});
    }
    entries.push_back({{"source", source_vocab_.surface(s)}, {"modes", std::move(modes)}});
  }
  nlohmann::json targets = nlohmann::json::array();
  for (TokenId t = 0; t < target_vocab_.size(); ++t) targets.push_back(target_vocab_.surface(t));
  return {{"entries", std::move(entries)}, {"targets", std::move(targets)}};
}

GoldLexicon GoldLexicon::from_json(const nlohmann::json& j) {
  Vocab sv, tv;
  if (j.contains("targets")) {
    for (const auto& t : j.at("targets")) tv.add(t.get<std::string>(), 0);
  }
  std::vector<std::vector<LexiconMode>> entries;
  for (const auto& e : j.at("entries")) {
    const TokenId s = sv.add(e.at("source").get<std::string>(), 0);
    if (s != entries.size()) throw Error("duplicate lexicon source '" + e.at("source").get<std::string>() + "'");
    std::vector<LexiconMode> modes;
    for (const auto& m : e.at("modes")) {
      modes.push_back({tv.add(m.at("target").get<std::string>(), 0), m.at("prob").get<double>()});
    }
    entries.push_back(std::move(modes));
  }
  return GoldLexicon(std::move(sv), std::move(tv), std::move(entries));
}

TokenId modal_translation(const GoldLexicon& lexicon, TokenId source) {
  if (source >= lexicon.size()) throw Error("token id " + std::to_string(source) + " not in lexicon");
  const auto& modes = lexicon.modes(source);
  LexiconMode best = modes.front();
  for (const auto& m : modes) {
    if (m.prob > best.prob || (m.prob == best.prob && m.target < best.target)) best = m;
  }
  return best.target;
}

namespace {

std::vector<double> zipf_cdf(std::size_t n, double exponent) {
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    cdf[r] = acc;
  }
  for (auto& c : cdf) c /= acc;
  cdf.back() = 1.0;
  return cdf;
}

std::size_t draw(const std::vector<double>& cdf, double u) {
  return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

}  // namespace

GoldLexicon build_lexicon(const GenConfig& config) {
  config.validate();
  const std::size_t V = config.source_vocab_size;
  Rng rng = Rng::stream(config.seed, "synthlang.lexicon");

  // Target ids are a random relabeling of source ranks so that id order
  // carries no frequency information.
  std::vector<TokenId> primary(V);
  std::iota(primary.begin(), primary.end(), TokenId{0});
  rng.shuffle(primary);

  Vocab sv, tv;
  for (std::size_t r = 0; r < V; ++r) sv.add("s" + std::to_string(r), 0);
  for (std::size_t t = 0; t < V; ++t) tv.add("t" + std::to_string(t), 0);

  const auto cdf = zipf_cdf(V, config.zipf_exponent);
  std::vector<std::vector<LexiconMode>> entries(V);
  for (std::size_t r = 0; r < V; ++r) {
    const std::uint32_t k =
        config.min_modes + static_cast<std::uint32_t>(rng.below(config.max_modes - config.min_modes + 1));
    auto& modes = entries[r];
    const double p1 = k == 1 ? 1.0
                             : config.primary_mass_min +
                                   (config.primary_mass_max - config.primary_mass_min) * rng.uniform();
    modes.push_back({primary[r], p1});

    std::vector<double> w;
    double wsum = 0.0;
    while (modes.size() < k) {
      const bool shared = rng.uniform() < config.shared_mode_prob;
      const std::size_t rank = shared ? draw(cdf, rng.uniform()) : rng.below(V);
      const TokenId t = primary[rank];
      if (std::any_of(modes.begin(), modes.end(), [&](const LexiconMode& m) { return m.target == t; })) continue;
      double u;
      do {
        u = rng.uniform();
      } while (u <= 0.0);
      w.push_back(-std::log(u));  // Dirichlet(1) split of the remaining mass
      wsum += w.back();
      modes.push_back({t, 0.0});
    }
    for (std::size_t m = 1; m < modes.size(); ++m) modes[m].prob = (1.0 - p1) * w[m - 1] / wsum;
    // Exact normalization against rounding drift.
    double total = 0.0;
    for (const auto& m : modes) total += m.prob;
    for (auto& m : modes) m.prob /= total;
  }
  return GoldLexicon(std::move(sv), std::move(tv), std::move(entries));
}

SyntheticData sample_pairs(const GoldLexicon& lexicon, const GenConfig& config,
                           std::size_t num_pairs, std::string_view stream) {
  config.validate();
  if (lexicon.size() == 0) throw Error("empty lexicon");
  Rng rng = Rng::stream(config.seed, stream);
  const auto cdf = zipf_cdf(lexicon.size(), config.zipf_exponent);

  std::vector<std::vector<double>> mode_cdf(lexicon.size());
  for (TokenId s = 0; s < lexicon.size(); ++s) {
    double acc = 0.0;
    for (const auto& m : lexicon.modes(s)) mode_cdf[s].push_back(acc += m.prob);
    mode_cdf[s].back() = 1.0;
  }

  std::vector<SentencePair> pairs;
  Alignment gold;
  pairs.reserve(num_pairs);
  gold.reserve(num_pairs);
  for (std::size_t i = 0; i < num_pairs; ++i) {
    const std::uint32_t n =
        config.min_length + static_cast<std::uint32_t>(rng.below(config.max_length - config.min_length + 1));
    SentencePair p{i, {}, {}};
    std::vector<std::uint32_t> origin(n);
    for (std::uint32_t j = 0; j < n; ++j) {
      const TokenId s = static_cast<TokenId>(draw(cdf, rng.uniform()));
      p.source.push_back(s);
      p.target.push_back(lexicon.modes(s)[draw(mode_cdf[s], rng.uniform())].target);
      origin[j] = j;
    }
    for (std::uint32_t j = 0; j + 1 < n;) {
      if (rng.uniform() < config.swap_prob) {
        std::swap(p.target[j], p.target[j + 1]);
        std::swap(origin[j], origin[j + 1]);
        j += 2;
      } else {
        j += 1;
      }
    }
    SentenceAlignment links;
    for (std::uint32_t j = 0; j < n; ++j) links.push_back({origin[j], j});
    std::sort(links.begin(), links.end());
    gold.push_back(std::move(links));
    pairs.push_back(std::move(p));
  }
  Vocab sv = recount(lexicon.source_vocab(), pairs, Side::Source);
  Vocab tv = recount(lexicon.target_vocab(), pairs, Side::Target);
  return {ParallelCorpus(std::move(sv), std::move(tv), std::move(pairs), Provenance::Raw), lexicon,
          std::move(gold)};
}

SyntheticData generate(const GenConfig& config) {
  return sample_pairs(build_lexicon(config), config, config.num_pairs, "synthlang.pairs");
}

}  // namespace lfr
