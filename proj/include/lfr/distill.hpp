#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfr/align.hpp"
#include "lfr/corpus.hpp"

namespace lfr {

// A sentence translator used as a distillation teacher. Input ids are in
// the vocabulary of the side being translated from; output ids are in
// output_vocab() and get mapped into the result corpus by surface form.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual Sentence translate(std::span<const TokenId> input) = 0;
  virtual Direction direction() const = 0;
  virtual std::string description() const = 0;
  virtual const Vocab& output_vocab() const = 0;
};

// Replays precomputed translations, one per call, in order. Lets outputs of
// an external system be distilled without running it here.
class ReplayTranslator : public Translator {
 public:
  ReplayTranslator(Direction direction, Vocab output_vocab, std::vector<Sentence> outputs,
                   std::string description = "replay");
  // One translation per line of `path`, tokens interned on top of `base`.
  static ReplayTranslator from_file(Direction direction, const Vocab& base,
                                    const std::filesystem::path& path);

  Sentence translate(std::span<const TokenId> input) override;
  Direction direction() const override { return direction_; }
  std::string description() const override { return description_; }
  const Vocab& output_vocab() const override { return vocab_; }
  void rewind() { cursor_ = 0; }

 private:
  Direction direction_;
  Vocab vocab_;
  std::vector<Sentence> outputs_;
  std::string description_;
  std::size_t cursor_ = 0;
};

// (x_i, teacher(x_i)) for every pair; source side untouched, ids preserved.
ParallelCorpus distill_forward(const ParallelCorpus& raw, Translator& teacher);
// (teacher(y_i), y_i) for every pair; target side untouched, ids preserved.
ParallelCorpus distill_reverse(const ParallelCorpus& raw, Translator& teacher);
// concat(forward, reverse); origin part 0 is the forward half.
ParallelCorpus build_bidirectional(const ParallelCorpus& raw, Translator& forward_teacher,
                                   Translator& reverse_teacher);

nlohmann::json distill_manifest(const ParallelCorpus& distilled, const ParallelCorpus& origin,
                                const std::string& teacher_description);

}  // namespace lfr
