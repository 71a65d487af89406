#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lfr/align.hpp"
#include "lfr/corpus.hpp"
#include "lfr/distill.hpp"
#include "lfr/synthlang.hpp"

namespace lfr {

// Word-by-word argmax translator. Output length equals input length; input
// ids outside the known vocabulary translate to the NULL-row argmax.
class LexicalTeacher : public Translator {
 public:
  LexicalTeacher(Direction direction, Vocab output_vocab, std::vector<TokenId> lookup,
                 TokenId fallback, std::string description);

  // Argmax of each conditioning row of an EM table. Vocabularies are those
  // of the corpus the table was trained on, in table orientation.
  static LexicalTeacher from_table(const TranslationTable& table, const Vocab& output_vocab,
                                   std::string description = "lexical-argmax");
  // Modal translation of every source word (s->t only). `input_vocab` is the
  // vocabulary the teacher will be fed; surfaces are matched against the lexicon.
  static LexicalTeacher from_lexicon(const GoldLexicon& lexicon, const Vocab& input_vocab);

  Sentence translate(std::span<const TokenId> input) override;
  Direction direction() const override { return direction_; }
  std::string description() const override { return description_; }
  const Vocab& output_vocab() const override { return vocab_; }

  TokenId translate_token(TokenId input) const;

 private:
  Direction direction_;
  Vocab vocab_;
  std::vector<TokenId> lookup_;
  TokenId fallback_;
  std::string description_;
};

// em_train on `corpus` in `direction`, wrapped as an argmax translator.
LexicalTeacher teacher_fit(const ParallelCorpus& corpus, Direction direction, const AlignConfig& config);

struct StudentConfig {
  int dim = 16;
  double learning_rate = 8.0;
  int batch_size = 8;  // sentences per step
  std::uint64_t seed = 1;
  double label_smoothing = 0.1;
  double init_scale = 0.1;  // std of the Gaussian initialization
  bool zero_init = false;

  void validate() const;
  nlohmann::json to_json() const;
  std::string digest() const;
};

// Per-position log-linear NAT student. Target position j reads the source
// word at m(j) = round(j * n / T); all positions are predicted independently.
class NatStudent {
 public:
  NatStudent(std::size_t source_vocab_size, std::size_t target_vocab_size, StudentConfig config);

  const StudentConfig& config() const { return config_; }
  std::size_t source_vocab_size() const { return source_vocab_size_; }
  std::size_t target_vocab_size() const { return target_vocab_size_; }
  // Row of the embedding used for padding and out-of-vocabulary words.
  TokenId pad_row() const { return static_cast<TokenId>(source_vocab_size_); }
  TokenId row_of(TokenId source) const { return source < source_vocab_size_ ? source : pad_row(); }

  Eigen::MatrixXd& embedding() { return embedding_; }  // (|Vs|+1) x d
  Eigen::MatrixXd& output() { return output_; }        // d x |Vt|
  Eigen::VectorXd& bias() { return bias_; }            // |Vt|
  const Eigen::MatrixXd& embedding() const { return embedding_; }
  const Eigen::MatrixXd& output() const { return output_; }
  const Eigen::VectorXd& bias() const { return bias_; }

  // Counts of (target length - source length).
  const std::map<int, std::uint64_t>& length_counts() const { return length_counts_; }
  void observe_length(std::size_t source_length, std::size_t target_length);
  int predicted_delta() const;
  std::size_t predicted_length(std::size_t source_length) const;

  bool finite() const;
  nlohmann::json to_json() const;
  static NatStudent from_json(const nlohmann::json& j);

 private:
  StudentConfig config_;
  std::size_t source_vocab_size_;
  std::size_t target_vocab_size_;
  Eigen::MatrixXd embedding_;
  Eigen::MatrixXd output_;
  Eigen::VectorXd bias_;
  std::map<int, std::uint64_t> length_counts_;
};

std::size_t position_map(std::size_t j, std::size_t n, std::size_t T);

struct StudentOutput {
  Eigen::MatrixXd probs;  // T x |Vt|
  double loss = 0.0;      // NaN without a reference
  std::size_t oov = 0;    // source words mapped to the pad row
};

// Distributions for a target of length T; with a reference (of length T)
// also the mean label-smoothed cross-entropy.
StudentOutput student_forward(const NatStudent& student, std::span<const TokenId> source, std::size_t T,
                              const Sentence* reference = nullptr);

struct StudentGradient {
  double loss = 0.0;  // mean over target positions
  std::size_t positions = 0;
  std::vector<TokenId> rows;   // embedding rows touched, ascending
  Eigen::MatrixXd embedding;   // rows.size() x d
  Eigen::MatrixXd output;      // d x |Vt|
  Eigen::VectorXd bias;        // |Vt|
};

// Mean label-smoothed loss over every target position of the batch and its
// exact gradient. Target positions use the reference length.
StudentGradient loss_and_gradient(const NatStudent& student, std::span<const SentencePair* const> batch);

struct TraceEval {
  std::int64_t step = 0;
  double bleu = 0.0;
};

struct TrainTrace {
  std::vector<double> loss;  // one per executed step
  std::vector<TraceEval> evals;
  std::int64_t steps = 0;
  bool stopped_early = false;

  std::string to_jsonl(std::int64_t step_offset = 0) const;
};

struct TrainHooks {
  std::int64_t eval_every = 0;  // 0 disables evaluation
  std::function<double(const NatStudent&)> validate;
  // Consulted after each evaluation; true ends training.
  std::function<bool(const TrainTrace&)> should_stop;
};

// Plain mini-batch SGD for `steps` steps (fewer only if should_stop fires).
// Batches follow a permutation drawn from the seed and `stream`, redrawn on
// every pass through the data.
TrainTrace student_train(NatStudent& student, const ParallelCorpus& corpus, std::int64_t steps,
                         const TrainHooks& hooks = {}, std::string_view stream = "toynmt.train");

Sentence student_decode(const NatStudent& student, std::span<const TokenId> source);
std::vector<Sentence> student_decode_all(const NatStudent& student, std::span<const Sentence> sources);

}  // namespace lfr
