#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfr/corpus.hpp"
#include "lfr/distill.hpp"
#include "lfr/lfwlinks.hpp"
#include "lfr/metrics.hpp"
#include "lfr/toynmt.hpp"

namespace lfr {

enum class Atom { Raw, Kd, Rkd };
std::string_view to_string(Atom a);

struct Stage {
  std::vector<Atom> atoms;  // concatenated in order
  bool operator==(const Stage&) const = default;
};

struct Strategy {
  std::string name;
  std::vector<Stage> stages;
  bool operator==(const Strategy& o) const { return stages == o.stages; }
};

// stage_list := stage ('->' stage)* ; stage := atom ('+' atom)* ;
// atom := raw | kd | rkd. The arrow may also be written as U+2192.
Strategy parse_strategy(std::string_view text);
std::string render_strategy(const Strategy& strategy);
std::string render_stage(const Stage& stage);

// Presets "#1".."#7" in the order of the strategy comparison table.
const std::vector<std::string>& preset_expressions();
// Accepts "7" or "#7".
Strategy preset_strategy(std::string_view name);

struct BudgetWeights {
  std::vector<std::int64_t> three_stage = {2, 2, 3};
  std::vector<std::int64_t> two_stage = {2, 5};
  void validate() const;
};

// Integer split of `total` by the stage weights (equal weights beyond three
// stages); rounding residue goes to the last stage.
std::vector<std::int64_t> plan_budgets(std::int64_t total_steps, const Strategy& strategy,
                                       const BudgetWeights& weights = {});

struct EarlyStopRule {
  enum class Kind { FixedStep, BleuThreshold };
  Kind kind = Kind::FixedStep;
  std::int64_t fixed_steps = 0;      // 0: the stage budget
  double theta = 0.9;                 // fraction of the reference score
  std::optional<double> reference;   // best raw validation BLEU
  int patience = 0;                   // running-max fallback, in evaluations

  void validate() const;
  nlohmann::json to_json() const;
};

struct StopDecision {
  bool stop = false;
  std::string reason;
  double value = 0.0;  // triggering validation score, or step count
};

StopDecision early_stop_check(const TrainTrace& trace, const EarlyStopRule& rule);

struct RunConfig {
  std::int64_t total_steps = 6000;
  BudgetWeights weights;
  EarlyStopRule early_stop;
  std::int64_t eval_every = 0;  // 0: max(total / 50, 10)
  StudentConfig student;
  bool analyze_links = false;
  std::size_t link_subset = 1000;
  CompareOptions link_options;

  void validate() const;
  nlohmann::json to_json() const;
  std::string digest() const;
  std::int64_t cadence() const;
};

struct Teachers {
  Translator* forward = nullptr;  // s->t, for kd
  Translator* reverse = nullptr;  // t->s, for rkd
};

struct EvalData {
  const ParallelCorpus* validation = nullptr;  // raw; drives evaluation hooks and early stop
  const ParallelCorpus* test = nullptr;        // final metrics
  const LinkJudge* judge = nullptr;
  BucketingConfig bucketing;
};

struct StageReport {
  std::string expression;
  std::int64_t budget = 0;
  std::int64_t executed = 0;
  bool stopped_early = false;
  std::string stop_reason;
  std::string dataset_digest;
  std::size_t pairs = 0;
  TrainTrace trace;
};

struct FinalMetrics {
  BleuScore bleu;
  LexAccEntry alf;
  LexAccReport lexacc;
  double lfw_output_ratio = 0.0;
};

struct ExperimentReport {
  Strategy strategy;
  std::vector<StageReport> stages;
  std::int64_t total_steps = 0;
  std::int64_t executed_steps = 0;
  FinalMetrics metrics;
  std::vector<LinkReport> links;
  std::string config_digest;
  std::uint64_t seed = 0;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

// Stage datasets: each atom materialized once, '+' via concat.
struct StageData {
  ParallelCorpus raw;
  std::optional<ParallelCorpus> kd;
  std::optional<ParallelCorpus> rkd;
  std::vector<ParallelCorpus> stages;
};
StageData materialize(const Strategy& strategy, const ParallelCorpus& raw, const Teachers& teachers);

ExperimentReport run(const Strategy& strategy, const ParallelCorpus& raw, const Teachers& teachers,
                     const EvalData& eval, const RunConfig& config);

// Decoding plus every final metric for a trained student on `test`, whose
// vocabularies may differ from the student's.
struct StudentVocab {
  Vocab source;
  Vocab target;
};
FinalMetrics evaluate_student(const NatStudent& student, const StudentVocab& vocab, const ParallelCorpus& test,
                              const FreqProfile& source_profile, const FreqProfile& target_profile,
                              const LinkJudge& judge, std::vector<Sentence>* hypotheses = nullptr);

// Re-expresses a corpus in the given vocabularies by surface; unknown words
// are appended, so ids past the original sizes mark out-of-vocabulary words.
ParallelCorpus remap_corpus(const ParallelCorpus& corpus, Vocab& source_vocab, Vocab& target_vocab);

}  // namespace lfr
