#include "lfr/distill.hpp"

#include <fstream>
#include <optional>

#include "lfr/error.hpp"

namespace lfr {

ReplayTranslator::ReplayTranslator(Direction direction, Vocab output_vocab,
                                   std::vector<Sentence> outputs, std::string description)
    : direction_(direction),
      vocab_(std::move(output_vocab)),
      outputs_(std::move(outputs)),
      description_(std::move(description)) {}

ReplayTranslator ReplayTranslator::from_file(Direction direction, const Vocab& base,
                                             const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open translations " + path.string());
  Vocab v = base.without_counts();
  std::vector<Sentence> outputs;
  std::string line;
  while (std::getline(in, line)) {
    Sentence s;
    for (auto tok : split_tokens(line)) s.push_back(v.add(tok));
    outputs.push_back(std::move(s));
  }
  return ReplayTranslator(direction, std::move(v), std::move(outputs), "replay:" + path.filename().string());
}

Sentence ReplayTranslator::translate(std::span<const TokenId>) {
  if (cursor_ >= outputs_.size()) {
    throw Error("replay exhausted after " + std::to_string(outputs_.size()) + " translations");
  }
  return outputs_[cursor_++];
}

namespace {

// Maps teacher output ids into `into` by surface, interning unseen words.
class VocabMapper {
 public:
  VocabMapper(const Vocab& from, Vocab& into) : from_(from), into_(into), map_(from.size()) {}

  TokenId operator()(TokenId id) {
    if (id >= from_.size()) throw Error("teacher produced token id " + std::to_string(id) + " outside its vocabulary");
    if (!map_[id]) map_[id] = into_.add(from_.surface(id), 0);
    return *map_[id];
  }

 private:
  const Vocab& from_;
  Vocab& into_;
  std::vector<std::optional<TokenId>> map_;
};

ParallelCorpus distill(const ParallelCorpus& raw, Translator& teacher, Side replaced) {
  const Direction needed = replaced == Side::Target ? Direction::SourceToTarget : Direction::TargetToSource;
  if (teacher.direction() != needed) {
    throw UsageError(std::string(replaced == Side::Target ? "forward" : "reverse") +
                     " distillation needs a " + std::string(to_string(needed)) + " teacher, got " +
                     std::string(to_string(teacher.direction())));
  }
  Vocab out_vocab = raw.vocab(replaced).without_counts();
  VocabMapper map(teacher.output_vocab(), out_vocab);
  std::vector<SentencePair> pairs;
  pairs.reserve(raw.size());
  for (const auto& p : raw.pairs()) {
    const Sentence& input = replaced == Side::Target ? p.source : p.target;
    Sentence produced;
    try {
      produced = teacher.translate(input);
    } catch (const std::exception& e) {
      throw Error("teacher failed on pair " + std::to_string(p.id) + ": " + e.what());
    }
    if (produced.empty()) throw Error("teacher produced an empty translation for pair " + std::to_string(p.id));
    for (auto& t : produced) t = map(t);
    if (replaced == Side::Target) {
      pairs.push_back({p.id, p.source, std::move(produced)});
    } else {
      pairs.push_back({p.id, std::move(produced), p.target});
    }
  }
  Vocab sv = replaced == Side::Source ? recount(out_vocab, pairs, Side::Source)
                                      : recount(raw.source_vocab(), pairs, Side::Source);
  Vocab tv = replaced == Side::Target ? recount(out_vocab, pairs, Side::Target)
                                      : recount(raw.target_vocab(), pairs, Side::Target);
  return ParallelCorpus(std::move(sv), std::move(tv), std::move(pairs),
                        replaced == Side::Target ? Provenance::Kd : Provenance::Rkd);
}

}  // namespace

ParallelCorpus distill_forward(const ParallelCorpus& raw, Translator& teacher) {
  return distill(raw, teacher, Side::Target);
}

ParallelCorpus distill_reverse(const ParallelCorpus& raw, Translator& teacher) {
  return distill(raw, teacher, Side::Source);
}

ParallelCorpus build_bidirectional(const ParallelCorpus& raw, Translator& forward_teacher,
                                   Translator& reverse_teacher) {
  return concat(distill_forward(raw, forward_teacher), distill_reverse(raw, reverse_teacher));
}

nlohmann::json distill_manifest(const ParallelCorpus& distilled, const ParallelCorpus& origin,
                                const std::string& teacher_description) {
  return {{"provenance", to_string(distilled.provenance())},
          {"teacher", teacher_description},
          {"origin_digest", corpus_digest(origin)},
          {"digest", corpus_digest(distilled)},
          {"pairs", distilled.size()}};
}

}  // namespace lfr
