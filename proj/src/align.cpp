#include "lfr/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "lfr/error.hpp"
#include "lfr/util.hpp"

namespace lfr {

std::string_view to_string(Direction d) {
  return d == Direction::SourceToTarget ? "s->t" : "t->s";
}

Direction direction_from_string(std::string_view text) {
  if (text == "s->t" || text == "s2t" || text == "st") return Direction::SourceToTarget;
  if (text == "t->s" || text == "t2s" || text == "ts") return Direction::TargetToSource;
  throw UsageError("unknown direction '" + std::string(text) + "' (expected s->t or t->s)");
}

Direction reverse(Direction d) {
  return d == Direction::SourceToTarget ? Direction::TargetToSource : Direction::SourceToTarget;
}

void AlignConfig::validate() const {
  if (iterations < 0) throw UsageError("EM iterations must be non-negative");
  if (!(null_prob >= 0.0 && null_prob < 1.0)) throw UsageError("NULL probability must lie in [0, 1)");
  if (!(diagonal_tension >= 0.0) || !std::isfinite(diagonal_tension)) {
    throw UsageError("diagonal tension must be a finite non-negative number");
  }
  if (!(floor > 0.0)) throw UsageError("probability floor must be positive");
  if (threads < 1) throw UsageError("thread count must be at least 1");
}

nlohmann::json AlignConfig::to_json() const {
  return {{"iterations", iterations},
          {"null_prob", null_prob},
          {"diagonal_tension", diagonal_tension},
          {"floor", floor}};
}

TranslationTable::TranslationTable(Direction direction, std::size_t conditioning_size,
                                   std::size_t conditioned_size)
    : direction_(direction),
      conditioning_size_(conditioning_size),
      conditioned_size_(conditioned_size),
      rows_(conditioning_size + 1),
      trained_(conditioning_size + 1, false) {}

double TranslationTable::prob(TokenId conditioning, TokenId conditioned) const {
  if (!trained_.at(conditioning)) {
    return conditioned_size_ ? 1.0 / static_cast<double>(conditioned_size_) : 0.0;
  }
  const auto& r = rows_[conditioning];
  auto it = std::lower_bound(r.begin(), r.end(), conditioned,
                             [](const auto& e, TokenId id) { return e.first < id; });
  return (it != r.end() && it->first == conditioned) ? it->second : 0.0;
}

TokenId TranslationTable::argmax(TokenId conditioning) const {
  auto best_of = [](const std::vector<std::pair<TokenId, double>>& r) {
    TokenId best = r.front().first;
    double p = r.front().second;
    for (const auto& [id, q] : r) {
      if (q > p) {
        p = q;
        best = id;
      }
    }
    return best;
  };
  if (trained_.at(conditioning) && !rows_[conditioning].empty()) return best_of(rows_[conditioning]);
  if (trained_[null_id()] && !rows_[null_id()].empty()) return best_of(rows_[null_id()]);
  return 0;
}

double TranslationTable::row_mass(TokenId conditioning) const {
  if (!trained_.at(conditioning)) return conditioned_size_ ? 1.0 : 0.0;
  double s = 0.0;
  for (const auto& e : rows_[conditioning]) s += e.second;
  return s;
}

nlohmann::json TranslationTable::to_json(const Vocab& conditioning_vocab,
                                         const Vocab& conditioned_vocab) const {
  nlohmann::json rows = nlohmann::json::object();
  for (TokenId e = 0; e <= conditioning_size_; ++e) {
    if (!trained_[e]) continue;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [f, p] : rows_[e]) entries.push_back({conditioned_vocab.surface(f), p});
    rows[e == null_id() ? std::string("<null>") : conditioning_vocab.surface(e)] = std::move(entries);
  }
  return {{"direction", to_string(direction_)},
          {"log_likelihood", log_likelihood_},
          {"rows", std::move(rows)}};
}

double diagonal_weight(std::size_t i, std::size_t n, std::size_t j, std::size_t m, double tension) {
  if (tension == 0.0) return 1.0;
  const double d = static_cast<double>(i) / static_cast<double>(n) -
                   static_cast<double>(j) / static_cast<double>(m);
  return std::exp(-tension * std::abs(d));
}

namespace {

// Flattened per-sentence lookup structures shared by all EM iterations.
struct EmLayout {
  std::vector<TokenId> slot_row;        // conditioning id (or NULL) per slot
  std::vector<TokenId> slot_col;        // conditioned id per slot
  std::vector<std::uint32_t> slots;     // per sentence: (n + 1) x m, NULL row last
  std::vector<double> weights;          // per sentence: n x m, (1-p0) * w_ij / Z_j
  std::vector<std::size_t> slot_offset;
  std::vector<std::size_t> weight_offset;
};

EmLayout build_layout(const ParallelCorpus& c, const AlignConfig& config, TokenId null_id) {
  EmLayout L;
  std::unordered_map<std::uint64_t, std::uint32_t> index;
  index.reserve(c.size() * 16);
  auto slot_of = [&](TokenId e, TokenId f) {
    const std::uint64_t key = (static_cast<std::uint64_t>(e) << 32) | f;
    auto [it, inserted] = index.try_emplace(key, static_cast<std::uint32_t>(L.slot_row.size()));
    if (inserted) {
      L.slot_row.push_back(e);
      L.slot_col.push_back(f);
    }
    return it->second;
  };
  L.slot_offset.reserve(c.size() + 1);
  L.weight_offset.reserve(c.size() + 1);
  for (const auto& p : c.pairs()) {
    const auto& e = p.source;
    const auto& f = p.target;
    const std::size_t n = e.size(), m = f.size();
    L.slot_offset.push_back(L.slots.size());
    L.weight_offset.push_back(L.weights.size());
    for (std::size_t i = 0; i <= n; ++i) {
      const TokenId ei = i < n ? e[i] : null_id;
      for (std::size_t j = 0; j < m; ++j) L.slots.push_back(slot_of(ei, f[j]));
    }
    for (std::size_t j = 0; j < m; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += diagonal_weight(i, n, j, m, config.diagonal_tension);
      for (std::size_t i = 0; i < n; ++i) {
        // stored transposed (j-major) for the E-step loop
        L.weights.push_back((1.0 - config.null_prob) *
                            diagonal_weight(i, n, j, m, config.diagonal_tension) / z);
      }
    }
  }
  L.slot_offset.push_back(L.slots.size());
  L.weight_offset.push_back(L.weights.size());
  return L;
}

// E-step over pairs [begin, end); accumulates posteriors into `counts`.
double expectation(const ParallelCorpus& c, const EmLayout& L, const std::vector<double>& t,
                   double p0, std::size_t begin, std::size_t end, std::vector<double>& counts) {
  double ll = 0.0;
  std::vector<double> post;
  for (std::size_t s = begin; s < end; ++s) {
    const std::size_t n = c[s].source.size(), m = c[s].target.size();
    const std::uint32_t* slots = L.slots.data() + L.slot_offset[s];
    const double* w = L.weights.data() + L.weight_offset[s];
    post.resize(n + 1);
    for (std::size_t j = 0; j < m; ++j) {
      double denom = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        post[i] = t[slots[i * m + j]] * w[j * n + i];
        denom += post[i];
      }
      post[n] = p0 > 0.0 ? p0 * t[slots[n * m + j]] : 0.0;
      denom += post[n];
      if (!(denom > 0.0)) continue;  // every candidate has zero probability
      ll += std::log(denom);
      for (std::size_t i = 0; i <= n; ++i) counts[slots[i * m + j]] += post[i] / denom;
    }
  }
  return ll;
}

}  // namespace

TranslationTable em_train(const ParallelCorpus& corpus, Direction direction,
                          const AlignConfig& config) {
  config.validate();
  if (corpus.empty()) throw Error("cannot train alignment on an empty corpus");
  const ParallelCorpus swapped = direction == Direction::TargetToSource ? corpus.swapped()
                                                                        : ParallelCorpus();
  const ParallelCorpus& c = direction == Direction::TargetToSource ? swapped : corpus;

  TranslationTable table(direction, c.source_vocab().size(), c.target_vocab().size());
  const TokenId null_id = table.null_id();
  if (config.iterations == 0) return table;

  const EmLayout L = build_layout(c, config, null_id);
  const std::size_t num_slots = L.slot_row.size();
  std::vector<double> t(num_slots, 1.0 / static_cast<double>(c.target_vocab().size()));
  std::vector<bool> trained(null_id + 1, false);

  const std::size_t workers = std::min<std::size_t>(config.threads, c.size());
  std::vector<std::vector<double>> partial(workers, std::vector<double>(num_slots));
  std::vector<double> partial_ll(workers);
  std::vector<double> row_sum(null_id + 1);

  for (int it = 0; it < config.iterations; ++it) {
    for (auto& buf : partial) std::fill(buf.begin(), buf.end(), 0.0);
    auto chunk = [&](std::size_t w) {
      const std::size_t b = c.size() * w / workers, e = c.size() * (w + 1) / workers;
      partial_ll[w] = expectation(c, L, t, config.null_prob, b, e, partial[w]);
    };
    if (workers == 1) {
      chunk(0);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(chunk, w);
    }
    // Merge in worker order so results depend only on the worker count.
    std::vector<double>& counts = partial[0];
    double ll = partial_ll[0];
    for (std::size_t w = 1; w < workers; ++w) {
      for (std::size_t k = 0; k < num_slots; ++k) counts[k] += partial[w][k];
      ll += partial_ll[w];
    }
    table.log_likelihood_.push_back(ll);

    std::fill(row_sum.begin(), row_sum.end(), 0.0);
    for (std::size_t k = 0; k < num_slots; ++k) row_sum[L.slot_row[k]] += counts[k];
    for (std::size_t k = 0; k < num_slots; ++k) {
      const double z = row_sum[L.slot_row[k]];
      if (z > 0.0) t[k] = counts[k] / z;
    }
    for (TokenId e = 0; e <= null_id; ++e) {
      if (row_sum[e] > 0.0) trained[e] = true;
    }
  }

  for (std::size_t k = 0; k < num_slots; ++k) {
    if (trained[L.slot_row[k]] && t[k] > 0.0) table.rows_[L.slot_row[k]].emplace_back(L.slot_col[k], t[k]);
  }
  for (TokenId e = 0; e <= null_id; ++e) {
    table.trained_[e] = trained[e];
    std::sort(table.rows_[e].begin(), table.rows_[e].end());
  }
  return table;
}

Alignment viterbi_align(const TranslationTable& table, const ParallelCorpus& corpus,
                        const AlignConfig& config) {
  config.validate();
  const bool swap = table.direction() == Direction::TargetToSource;
  const std::size_t cond_vocab = swap ? corpus.target_vocab().size() : corpus.source_vocab().size();
  const std::size_t out_vocab = swap ? corpus.source_vocab().size() : corpus.target_vocab().size();
  if (cond_vocab > table.conditioning_size() || out_vocab > table.conditioned_size()) {
    throw Error("translation table vocabulary is smaller than the corpus vocabulary");
  }
  const double p0 = config.null_prob;
  Alignment out;
  out.reserve(corpus.size());
  std::vector<double> w;
  for (const auto& p : corpus.pairs()) {
    const auto& e = swap ? p.target : p.source;
    const auto& f = swap ? p.source : p.target;
    const std::size_t n = e.size(), m = f.size();
    SentenceAlignment links;
    w.resize(n);
    for (std::size_t j = 0; j < m; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += (w[i] = diagonal_weight(i, n, j, m, config.diagonal_tension));
      std::size_t best_i = n;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = (1.0 - p0) * std::max(table.prob(e[i], f[j]), config.floor) * w[i] / z;
        if (s > best) {
          best = s;
          best_i = i;
        }
      }
      if (p0 > 0.0 && p0 * std::max(table.prob(table.null_id(), f[j]), config.floor) > best) continue;
      if (best_i == n) continue;
      const auto i32 = static_cast<std::uint32_t>(best_i), j32 = static_cast<std::uint32_t>(j);
      links.push_back(swap ? Link{j32, i32} : Link{i32, j32});
    }
    std::sort(links.begin(), links.end());
    out.push_back(std::move(links));
  }
  return out;
}

std::string format_pharaoh(const SentenceAlignment& links) {
  std::string s;
  for (std::size_t k = 0; k < links.size(); ++k) {
    if (k) s.push_back(' ');
    s += std::to_string(links[k].source);
    s.push_back('-');
    s += std::to_string(links[k].target);
  }
  return s;
}

void write_pharaoh(std::ostream& out, const Alignment& alignment) {
  for (const auto& links : alignment) out << format_pharaoh(links) << '\n';
}

void write_pharaoh(const std::filesystem::path& path, const Alignment& alignment) {
  std::ostringstream ss;
  write_pharaoh(ss, alignment);
  write_file_atomic(path, ss.str());
}

namespace {

std::uint32_t parse_index(std::string_view text, std::size_t line_no, std::string_view token) {
  if (text.empty() || text.size() > 9) {
    throw Error("malformed alignment token '" + std::string(token) + "' on line " + std::to_string(line_no));
  }
  std::uint32_t v = 0;
  for (char ch : text) {
    if (ch < '0' || ch > '9') {
      throw Error("malformed alignment token '" + std::string(token) + "' on line " +
                  std::to_string(line_no));
    }
    v = v * 10 + static_cast<std::uint32_t>(ch - '0');
  }
  return v;
}

}  // namespace

Alignment read_pharaoh(std::istream& in) {
  Alignment out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    SentenceAlignment links;
    for (auto tok : split_tokens(line)) {
      const auto dash = tok.find('-');
      if (dash == std::string_view::npos) {
        throw Error("malformed alignment token '" + std::string(tok) + "' on line " + std::to_string(line_no));
      }
      links.push_back({parse_index(tok.substr(0, dash), line_no, tok),
                       parse_index(tok.substr(dash + 1), line_no, tok)});
    }
    out.push_back(std::move(links));
  }
  return out;
}

Alignment read_pharaoh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open alignment file " + path.string());
  return read_pharaoh(in);
}

}  // namespace lfr
