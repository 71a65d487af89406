#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Deliberately naive: loops and scans, no library code
// beyond corpus construction.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "lfr/corpus.hpp"
#include "lfr/toynmt.hpp"
#include "lfr/util.hpp"

namespace lfr::oracle {

inline ParallelCorpus from_text(const std::string& src, const std::string& tgt) {
  std::istringstream s(src), t(tgt);
  return ingest(s, t);
}

inline ParallelCorpus random_corpus(Rng& rng, std::size_t pairs, std::size_t vs, std::size_t vt) {
  std::string src, tgt;
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t n = 1 + rng.below(5), m = 1 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) src += (i ? " s" : "s") + std::to_string(rng.below(vs));
    for (std::size_t j = 0; j < m; ++j) tgt += (j ? " t" : "t") + std::to_string(rng.below(vt));
    src += "\n";
    tgt += "\n";
  }
  return from_text(src, tgt);
}

// Occurrences of hyp[i..i+n) inside s.
inline std::uint64_t occurrences(const Sentence& s, const Sentence& hyp, std::size_t i, std::size_t n) {
  std::uint64_t c = 0;
  for (std::size_t k = 0; k + n <= s.size(); ++k) c += std::equal(hyp.begin() + i, hyp.begin() + i + n, s.begin() + k);
  return c;
}

// Corpus BLEU-4, clipped counts, no smoothing.
inline double bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  double product = 1.0;
  double c = 0, r = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    c += static_cast<double>(hyps[s].size());
    r += static_cast<double>(refs[s].size());
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    double match = 0, total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
      const auto& h = hyps[s];
      for (std::size_t i = 0; i + n <= h.size(); ++i) {
        ++total;
        // Each distinct n-gram contributes min(count_h, count_r) once, at its first position.
        bool first = true;
        for (std::size_t k = 0; k < i; ++k) first &= !std::equal(h.begin() + i, h.begin() + i + n, h.begin() + k);
        if (first) match += static_cast<double>(std::min(occurrences(h, h, i, n), occurrences(refs[s], h, i, n)));
      }
    }
    if (total == 0 || match == 0) return 0.0;
    product *= match / total;
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::pow(product, 0.25);
}

// Two-sided binomial p-value at 1/2 from Pascal's triangle.
inline double binomial_two_sided(std::uint64_t k, std::uint64_t n) {
  std::vector<double> row = {1.0};
  for (std::uint64_t i = 0; i < n; ++i) {
    std::vector<double> next(row.size() + 1, 0.0);
    for (std::size_t j = 0; j < row.size(); ++j) {
      next[j] += row[j] / 2;
      next[j + 1] += row[j] / 2;
    }
    row = next;
  }
  const std::uint64_t lo = std::min(k, n - k);
  double tail = 0.0;
  for (std::uint64_t i = 0; i <= lo; ++i) tail += row[i];
  return std::min(1.0, 2.0 * tail);
}

// Mean label-smoothed cross-entropy of the student over all target positions.
inline double student_loss(const NatStudent& st, const std::vector<const SentencePair*>& batch) {
  const double eps = st.config().label_smoothing;
  const std::size_t V = st.target_vocab_size();
  double total = 0.0;
  std::size_t positions = 0;
  for (const SentencePair* p : batch) {
    const std::size_t n = p->source.size(), T = p->target.size();
    for (std::size_t j = 0; j < T; ++j) {
      const auto m = std::min<std::size_t>(
          static_cast<std::size_t>(std::floor(static_cast<double>(j * n) / static_cast<double>(T) + 0.5)), n - 1);
      const TokenId w = p->source[m];
      const TokenId row = w < st.source_vocab_size() ? w : st.pad_row();
      std::vector<double> z(V);
      double mx = -1e300;
      for (std::size_t v = 0; v < V; ++v) {
        z[v] = st.bias()(static_cast<Eigen::Index>(v));
        for (int k = 0; k < st.config().dim; ++k) {
          z[v] += st.embedding()(row, k) * st.output()(k, static_cast<Eigen::Index>(v));
        }
        mx = std::max(mx, z[v]);
      }
      double s = 0.0;
      for (double x : z) s += std::exp(x - mx);
      const double lse = mx + std::log(s);
      double smooth = 0.0;
      for (double x : z) smooth += x - lse;
      total += -(1.0 - eps) * (z[p->target[j]] - lse) - eps / static_cast<double>(V) * smooth;
      ++positions;
    }
  }
  return total / static_cast<double>(positions);
}

}  // namespace lfr::oracle
