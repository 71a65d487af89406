#include "lfr/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "lfr/error.hpp"
#include "lfr/util.hpp"

namespace lfr {

std::string_view to_string(Atom a) {
  switch (a) {
    case Atom::Raw: return "raw";
    case Atom::Kd: return "kd";
    case Atom::Rkd: return "rkd";
  }
  return "?";
}

namespace {

class StrategyParser {
 public:
  explicit StrategyParser(std::string_view text) : text_(text) {}

  Strategy parse() {
    Strategy s;
    s.stages.push_back(stage());
    while (true) {
      skip_space();
      if (at_end()) break;
      if (!arrow()) fail("expected '->' or '+'");
      s.stages.push_back(stage());
    }
    return s;
  }

 private:
  Stage stage() {
    Stage st;
    st.atoms.push_back(atom());
    while (true) {
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '+') {
        ++pos_;
        st.atoms.push_back(atom());
      } else {
        return st;
      }
    }
  }

  Atom atom() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string_view word = text_.substr(start, pos_ - start);
    if (word.empty()) {
      pos_ = start;
      fail("expected a dataset name");
    }
    std::string lower(word);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "raw") return Atom::Raw;
    if (lower == "kd") return Atom::Kd;
    if (lower == "rkd") return Atom::Rkd;
    pos_ = start;
    fail("unknown dataset '" + std::string(word) + "' (expected raw, kd or rkd)");
  }

  bool arrow() {
    if (text_.substr(pos_, 2) == "->") {
      pos_ += 2;
      return true;
    }
    if (text_.substr(pos_, 3) == "\xE2\x86\x92") {
      pos_ += 3;
      return true;
    }
    return false;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw UsageError("strategy syntax error at position " + std::to_string(pos_) + ": " + what + " in '" +
                     std::string(text_) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Strategy parse_strategy(std::string_view text) {
  Strategy s = StrategyParser(text).parse();
  s.name = render_strategy(s);
  return s;
}

std::string render_stage(const Stage& stage) {
  std::string out;
  for (std::size_t i = 0; i < stage.atoms.size(); ++i) {
    if (i) out += '+';
    out += to_string(stage.atoms[i]);
  }
  return out;
}

std::string render_strategy(const Strategy& strategy) {
  std::string out;
  for (std::size_t i = 0; i < strategy.stages.size(); ++i) {
    if (i) out += "->";
    out += render_stage(strategy.stages[i]);
  }
  return out;
}

const std::vector<std::string>& preset_expressions() {
  static const std::vector<std::string> presets = {
      "raw", "kd", "raw+kd", "raw->kd", "raw+rkd+kd", "raw->rkd+kd", "raw->rkd+kd->kd",
  };
  return presets;
}

Strategy preset_strategy(std::string_view name) {
  std::string_view digits = name;
  if (!digits.empty() && digits.front() == '#') digits.remove_prefix(1);
  const auto& presets = preset_expressions();
  if (digits.size() == 1 && digits[0] >= '1' && digits[0] < static_cast<char>('1' + presets.size())) {
    Strategy s = parse_strategy(presets[static_cast<std::size_t>(digits[0] - '1')]);
    s.name = "#" + std::string(digits);
    return s;
  }
  throw UsageError("unknown preset '" + std::string(name) + "' (expected 1-" + std::to_string(presets.size()) + ")");
}

void BudgetWeights::validate() const {
  auto check = [](const std::vector<std::int64_t>& w, std::size_t n, const char* what) {
    if (w.size() != n) throw UsageError(std::string(what) + " weights need " + std::to_string(n) + " entries");
    for (auto x : w) {
      if (x <= 0) throw UsageError(std::string(what) + " weights must be positive");
    }
  };
  check(three_stage, 3, "three-stage");
  check(two_stage, 2, "two-stage");
}

std::vector<std::int64_t> plan_budgets(std::int64_t total_steps, const Strategy& strategy,
                                       const BudgetWeights& weights) {
  weights.validate();
  const std::size_t k = strategy.stages.size();
  if (k == 0) throw UsageError("strategy has no stages");
  if (total_steps <= 0) throw UsageError("total steps must be positive");
  if (total_steps < static_cast<std::int64_t>(k)) {
    throw UsageError("cannot give each of " + std::to_string(k) + " stages a step out of " +
                     std::to_string(total_steps));
  }
  std::vector<std::int64_t> w = k == 3 ? weights.three_stage : k == 2 ? weights.two_stage
                                                                     : std::vector<std::int64_t>(k, 1);
  const std::int64_t W = std::accumulate(w.begin(), w.end(), std::int64_t{0});
  std::vector<std::int64_t> out(k);
  std::int64_t used = 0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    out[i] = total_steps / W * w[i] + total_steps % W * w[i] / W;
    used += out[i];
  }
  out[k - 1] = total_steps - used;
  for (auto b : out) {
    if (b < 1) throw UsageError("total steps too small for the stage weights");
  }
  return out;
}

void EarlyStopRule::validate() const {
  if (fixed_steps < 0) throw UsageError("fixed early-stop step must be non-negative");
  if (kind == Kind::BleuThreshold) {
    if (!(theta > 0.0 && theta <= 1.0)) throw UsageError("early-stop threshold must lie in (0, 1]");
    if (!reference && patience <= 0) {
      throw UsageError("bleu-threshold early stop needs a reference score or a positive patience");
    }
  }
}

nlohmann::json EarlyStopRule::to_json() const {
  nlohmann::json j = {{"kind", kind == Kind::FixedStep ? "fixed-step" : "bleu-threshold"}};
  if (kind == Kind::FixedStep) {
    j["fixed_steps"] = fixed_steps;
  } else {
    j["theta"] = theta;
    j["reference"] = reference ? nlohmann::json(*reference) : nlohmann::json(nullptr);
    j["patience"] = patience;
    j["validation"] = "raw";
  }
  return j;
}

StopDecision early_stop_check(const TrainTrace& trace, const EarlyStopRule& rule) {
  rule.validate();
  StopDecision d;
  if (rule.kind == EarlyStopRule::Kind::FixedStep) {
    if (rule.fixed_steps > 0 && trace.steps >= rule.fixed_steps) {
      d = {true, "fixed step " + std::to_string(rule.fixed_steps) + " reached", static_cast<double>(trace.steps)};
    }
    return d;
  }
  if (trace.evals.empty()) return d;
  const double last = trace.evals.back().bleu;
  if (rule.reference) {
    const double target = rule.theta * *rule.reference;
    if (last >= target) {
      d = {true, "validation BLEU " + fixed(last, 2) + " >= " + fixed(target, 2), last};
    }
    return d;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.evals.size(); ++i) {
    if (trace.evals[i].bleu > trace.evals[best].bleu) best = i;
  }
  const std::size_t since = trace.evals.size() - 1 - best;
  if (since >= static_cast<std::size_t>(rule.patience)) {
    d = {true,
         "no improvement over " + fixed(trace.evals[best].bleu, 2) + " for " + std::to_string(since) + " evaluations",
         last};
  }
  return d;
}

void RunConfig::validate() const {
  if (total_steps <= 0) throw UsageError("total steps must be positive");
  if (eval_every < 0) throw UsageError("evaluation cadence must be non-negative");
  weights.validate();
  early_stop.validate();
  student.validate();
  link_options.align.validate();
}

std::int64_t RunConfig::cadence() const {
  return eval_every > 0 ? eval_every : std::max<std::int64_t>(total_steps / 50, 10);
}

nlohmann::json RunConfig::to_json() const {
  return {{"total_steps", total_steps},
          {"weights", {{"three_stage", weights.three_stage}, {"two_stage", weights.two_stage}}},
          {"early_stop", early_stop.to_json()},
          {"eval_every", cadence()},
          {"student", student.to_json()},
          {"analyze_links", analyze_links},
          {"link_subset", link_subset},
          {"link_align", link_options.align.to_json()}};
}

std::string RunConfig::digest() const {
  Digest d;
  d.update(to_json().dump());
  return d.hex();
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json stages_json = nlohmann::json::array();
  for (const auto& s : stages) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : s.trace.evals) evals.push_back({{"step", e.step}, {"bleu", e.bleu}});
    stages_json.push_back({{"expression", s.expression},
                           {"budget", s.budget},
                           {"executed", s.executed},
                           {"stopped_early", s.stopped_early},
                           {"stop_reason", s.stop_reason},
                           {"dataset_digest", s.dataset_digest},
                           {"pairs", s.pairs},
                           {"loss", s.trace.loss},
                           {"evals", std::move(evals)}});
  }
  nlohmann::json j = {{"strategy", render_strategy(strategy)},
                      {"name", strategy.name},
                      {"stages", std::move(stages_json)},
                      {"total_steps", total_steps},
                      {"executed_steps", executed_steps},
                      {"metrics",
                       {{"bleu", metrics.bleu.to_json()},
                        {"alf", {{"accuracy", metrics.alf.accuracy}, {"correct", metrics.alf.correct},
                                 {"total", metrics.alf.total}}},
                        {"lexacc", metrics.lexacc.to_json()},
                        {"lfw_output_ratio", metrics.lfw_output_ratio}}},
                      {"config", config},
                      {"config_digest", config_digest},
                      {"seed", seed}};
  if (!links.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : links) rows.push_back(r.to_json());
    j["links"] = std::move(rows);
  }
  return j;
}

StageData materialize(const Strategy& strategy, const ParallelCorpus& raw, const Teachers& teachers) {
  if (strategy.stages.empty()) throw UsageError("strategy has no stages");
  StageData d{raw, std::nullopt, std::nullopt, {}};
  auto atom_data = [&](Atom a) -> const ParallelCorpus& {
    switch (a) {
      case Atom::Raw: return d.raw;
      case Atom::Kd:
        if (!d.kd) {
          if (!teachers.forward) throw UsageError("strategy uses kd but no forward teacher was given");
          d.kd = distill_forward(raw, *teachers.forward);
        }
        return *d.kd;
      case Atom::Rkd:
        if (!d.rkd) {
          if (!teachers.reverse) throw UsageError("strategy uses rkd but no reverse teacher was given");
          d.rkd = distill_reverse(raw, *teachers.reverse);
        }
        return *d.rkd;
    }
    throw Error("bad atom");
  };
  for (const auto& st : strategy.stages) {
    ParallelCorpus c = atom_data(st.atoms.front());
    for (std::size_t i = 1; i < st.atoms.size(); ++i) c = concat(c, atom_data(st.atoms[i]));
    d.stages.push_back(std::move(c));
  }
  return d;
}

ParallelCorpus remap_corpus(const ParallelCorpus& corpus, Vocab& source_vocab, Vocab& target_vocab) {
  std::vector<TokenId> smap(corpus.source_vocab().size()), tmap(corpus.target_vocab().size());
  for (TokenId i = 0; i < smap.size(); ++i) smap[i] = source_vocab.add(corpus.source_vocab().surface(i), 0);
  for (TokenId i = 0; i < tmap.size(); ++i) tmap[i] = target_vocab.add(corpus.target_vocab().surface(i), 0);
  std::vector<SentencePair> pairs;
  pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs()) {
    SentencePair q{p.id, {}, {}};
    for (TokenId t : p.source) q.source.push_back(smap[t]);
    for (TokenId t : p.target) q.target.push_back(tmap[t]);
    pairs.push_back(std::move(q));
  }
  return ParallelCorpus(recount(source_vocab, pairs, Side::Source), recount(target_vocab, pairs, Side::Target),
                        std::move(pairs), corpus.provenance(), corpus.origins());
}

FinalMetrics evaluate_student(const NatStudent& student, const StudentVocab& vocab, const ParallelCorpus& test,
                              const FreqProfile& source_profile, const FreqProfile& target_profile,
                              const LinkJudge& judge, std::vector<Sentence>* hypotheses) {
  Vocab sv = vocab.source.without_counts();
  Vocab tv = vocab.target.without_counts();
  const ParallelCorpus mapped = remap_corpus(test, sv, tv);
  std::vector<Sentence> sources, references;
  for (const auto& p : mapped.pairs()) {
    sources.push_back(p.source);
    references.push_back(p.target);
  }
  std::vector<Sentence> hyps = student_decode_all(student, sources);
  FinalMetrics m;
  m.bleu = bleu(hyps, references);
  const LexicalEvalSet set{sources, &sv, hyps, &tv};
  m.lexacc = bucketed_lexacc(set, judge, source_profile);
  m.alf = m.lexacc.low;
  m.lfw_output_ratio = lfw_output_ratio(hyps, tv, target_profile);
  if (hypotheses) *hypotheses = std::move(hyps);
  return m;
}

ExperimentReport run(const Strategy& strategy, const ParallelCorpus& raw, const Teachers& teachers,
                     const EvalData& eval, const RunConfig& config) {
  config.validate();
  if (!eval.validation || !eval.test || !eval.judge) throw UsageError("run needs validation, test and a judge");
  const auto budgets = plan_budgets(config.total_steps, strategy, config.weights);
  StageData data = materialize(strategy, raw, teachers);

  // One vocabulary space for every stage; raw ids come first.
  StudentVocab vocab{raw.source_vocab().without_counts(), raw.target_vocab().without_counts()};
  std::vector<ParallelCorpus> stage_sets;
  for (const auto& c : data.stages) stage_sets.push_back(remap_corpus(c, vocab.source, vocab.target));
  NatStudent student(vocab.source.size(), vocab.target.size(), config.student);

  Vocab vsv = vocab.source.without_counts();
  Vocab vtv = vocab.target.without_counts();
  const ParallelCorpus valid = remap_corpus(*eval.validation, vsv, vtv);
  std::vector<Sentence> valid_src, valid_ref;
  for (const auto& p : valid.pairs()) {
    valid_src.push_back(p.source);
    valid_ref.push_back(p.target);
  }
  auto validate = [&](const NatStudent& s) { return bleu(student_decode_all(s, valid_src), valid_ref).score; };

  ExperimentReport report;
  report.strategy = strategy;
  report.total_steps = config.total_steps;
  report.seed = config.student.seed;
  report.config = config.to_json();
  report.config["strategy"] = render_strategy(strategy);
  report.config_digest = config.digest();

  const std::size_t k = strategy.stages.size();
  std::int64_t carry = 0;
  for (std::size_t i = 0; i < k; ++i) {
    StageReport sr;
    sr.expression = render_stage(strategy.stages[i]);
    sr.budget = budgets[i];
    sr.dataset_digest = corpus_digest(data.stages[i]);
    sr.pairs = data.stages[i].size();
    std::int64_t steps = budgets[i] + (i + 1 == k ? carry : 0);

    TrainHooks hooks;
    hooks.eval_every = config.cadence();
    hooks.validate = validate;
    const bool leading_raw = i == 0 && k > 1 && strategy.stages[0].atoms == std::vector<Atom>{Atom::Raw};
    if (leading_raw) {
      const auto& rule = config.early_stop;
      if (rule.kind == EarlyStopRule::Kind::FixedStep) {
        if (rule.fixed_steps > 0 && rule.fixed_steps < steps) {
          steps = rule.fixed_steps;
          sr.stopped_early = true;
          sr.stop_reason = "fixed step " + std::to_string(rule.fixed_steps) + " reached";
        }
      } else {
        hooks.should_stop = [&rule, &sr](const TrainTrace& t) {
          const StopDecision d = early_stop_check(t, rule);
          if (d.stop) sr.stop_reason = d.reason;
          return d.stop;
        };
      }
    }
    const std::string stream = i == 0 ? std::string("toynmt.train") : "toynmt.train.stage" + std::to_string(i);
    try {
      sr.trace = student_train(student, stage_sets[i], steps, hooks, stream);
    } catch (const Error& e) {
      throw Error("stage " + std::to_string(i + 1) + " (" + sr.expression + "): " + e.what());
    }
    sr.executed = sr.trace.steps;
    sr.stopped_early = sr.stopped_early || sr.trace.stopped_early;
    if (i + 1 < k) carry += budgets[i] - sr.executed;
    report.executed_steps += sr.executed;
    report.stages.push_back(std::move(sr));
  }
  if (report.executed_steps != config.total_steps) {
    throw Error("executed " + std::to_string(report.executed_steps) + " steps instead of " +
                std::to_string(config.total_steps));
  }

  const FreqProfile sp = build_freq_profile(raw, Side::Source, eval.bucketing);
  const FreqProfile tp = build_freq_profile(raw, Side::Target, eval.bucketing);
  report.metrics = evaluate_student(student, vocab, *eval.test, sp, tp, *eval.judge);

  if (config.analyze_links) {
    std::vector<TaggedCorpus> sets = {{"raw", &data.raw}};
    if (data.kd) sets.push_back({"kd", &*data.kd});
    if (data.rkd) sets.push_back({"rkd", &*data.rkd});
    std::vector<PairId> ids;
    for (const auto& p : raw.pairs()) ids.push_back(p.id);
    Rng rng = Rng::stream(config.student.seed, "pipeline.link_subset");
    rng.shuffle(ids);
    ids.resize(std::min(ids.size(), config.link_subset));
    std::sort(ids.begin(), ids.end());
    CompareOptions opts = config.link_options;
    opts.bucketing = eval.bucketing;
    report.links = compare_datasets(sets, raw, ids, *eval.judge, opts);
  }
  return report;
}

}  // namespace lfr
