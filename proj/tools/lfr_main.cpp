#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lfr/align.hpp"
#include "lfr/corpus.hpp"
#include "lfr/distill.hpp"
#include "lfr/error.hpp"
#include "lfr/lfwlinks.hpp"
#include "lfr/metrics.hpp"
#include "lfr/pipeline.hpp"
#include "lfr/synthlang.hpp"
#include "lfr/toynmt.hpp"
#include "lfr/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lfr;

namespace {

struct Global {
  bool json = false;
  int threads = 1;
};

// Files are only written once every result is computed, so a failure
// leaves no output behind.
class Outputs {
 public:
  void add(fs::path path, std::string contents) { files_.emplace_back(std::move(path), std::move(contents)); }
  void commit() {
    for (const auto& [path, contents] : files_) {
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      write_file_atomic(path, contents);
    }
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void emit(const Global& g, const json& j, const std::string& text) { std::cout << (g.json ? dump(j) : text); }

fs::path src_of(const std::string& prefix) { return prefix + ".src"; }
fs::path tgt_of(const std::string& prefix) { return prefix + ".tgt"; }

ParallelCorpus load_corpus(const std::string& prefix) {
  for (const auto& p : {src_of(prefix), tgt_of(prefix)}) {
    if (!fs::is_regular_file(p)) throw UsageError("corpus file " + p.string() + " not found");
  }
  return ingest(src_of(prefix), tgt_of(prefix));
}

void add_corpus(Outputs& out, const ParallelCorpus& c, const std::string& prefix) {
  out.add(src_of(prefix), serialize_side(c, Side::Source));
  out.add(tgt_of(prefix), serialize_side(c, Side::Target));
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::vector<PairId> load_ids(const fs::path& path) {
  json j = parse_json_file(path);
  if (j.is_object() && j.contains("ids")) j = j.at("ids");
  if (!j.is_array()) throw Error(path.string() + ": expected a JSON array of pair ids");
  std::vector<PairId> ids;
  for (const auto& v : j) {
    if (!v.is_number_unsigned()) throw Error(path.string() + ": pair ids must be non-negative integers");
    ids.push_back(v.get<PairId>());
  }
  return ids;
}

std::vector<PairId> sample_ids(const ParallelCorpus& c, std::size_t n, std::uint64_t seed) {
  std::vector<PairId> ids;
  for (const auto& p : c.pairs()) ids.push_back(p.id);
  Rng rng = Rng::stream(seed, "cli.subset");
  rng.shuffle(ids);
  ids.resize(std::min(n, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Shared option groups.

struct AlignFlags {
  AlignConfig config;
  void attach(CLI::App* app) {
    app->add_option("--iterations", config.iterations, "EM iterations")->capture_default_str();
    app->add_option("--p0", config.null_prob, "NULL prior mass")->capture_default_str();
    app->add_option("--lambda", config.diagonal_tension, "diagonal tension, 0 for plain Model 1")
        ->capture_default_str();
  }
  AlignConfig get(const Global& g) const {
    AlignConfig c = config;
    c.threads = g.threads;
    c.validate();
    return c;
  }
};

struct BucketFlags {
  std::string mode = "threshold";
  BucketingConfig config;
  void attach(CLI::App* app) {
    app->add_option("--bucketing", mode, "threshold or mass")
        ->check(CLI::IsMember({"threshold", "mass"}))
        ->capture_default_str();
    app->add_option("--low-below", config.low_below, "Low iff relative frequency is below")->capture_default_str();
    app->add_option("--high-at-least", config.high_at_least, "High iff relative frequency is at least")
        ->capture_default_str();
    app->add_option("--high-mass", config.high_mass, "mass mode: token share of High")->capture_default_str();
    app->add_option("--low-mass", config.low_mass, "mass mode: token share of Low")->capture_default_str();
  }
  BucketingConfig get() const {
    BucketingConfig c = config;
    c.mode = mode == "mass" ? BucketingConfig::Mode::CumulativeMass : BucketingConfig::Mode::Threshold;
    c.validate();
    return c;
  }
};

struct JudgeFlags {
  std::string path;
  bool accept_all = false;
  void attach(CLI::App* app) {
    auto* j = app->add_option("--judge", path, "lexicon judging correctness (gold JSON, map JSON or text pairs)")
                  ->check(CLI::ExistingFile);
    app->add_flag("--accept-all", accept_all, "judge every pair correct")->excludes(j);
  }
  LinkJudge get() const {
    if (accept_all) return LinkJudge::accept_all();
    if (path.empty()) throw UsageError("a judge is required: pass --judge FILE or --accept-all");
    return LinkJudge::from_file(path);
  }
};

struct StudentFlags {
  StudentConfig config;
  void attach(CLI::App* app) {
    app->add_option("--dim", config.dim, "embedding size")->capture_default_str();
    app->add_option("--lr", config.learning_rate, "SGD learning rate")->capture_default_str();
    app->add_option("--batch", config.batch_size, "sentences per step")->capture_default_str();
    app->add_option("--label-smoothing", config.label_smoothing)->capture_default_str();
    app->add_option("--init-scale", config.init_scale, "std of the initial weights")->capture_default_str();
    app->add_flag("--zero-init", config.zero_init, "start from all-zero weights");
  }
  StudentConfig get(std::uint64_t seed) const {
    StudentConfig c = config;
    c.seed = seed;
    c.validate();
    return c;
  }
};

// Student checkpoint with the vocabularies it was trained in.
json vocab_json(const Vocab& v) {
  json a = json::array();
  for (TokenId i = 0; i < v.size(); ++i) a.push_back(v.surface(i));
  return a;
}

Vocab vocab_from_json(const json& a) {
  Vocab v;
  for (const auto& s : a) v.add(s.get<std::string>(), 0);
  return v;
}

std::string hypothesis_text(const std::vector<Sentence>& hyps, const Vocab& vocab) {
  std::string out;
  for (const auto& h : hyps) out += join_tokens(vocab, h) + "\n";
  return out;
}

// Subcommands.

struct SynthCmd {
  GenConfig gen;
  std::string out;
  std::size_t valid = 500, test = 2000;
  std::uint64_t seed = 1;

  void attach(CLI::App* app) {
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--vocab", gen.source_vocab_size, "source vocabulary size")->capture_default_str();
    app->add_option("--zipf", gen.zipf_exponent, "Zipf exponent")->capture_default_str();
    app->add_option("--min-modes", gen.min_modes)->capture_default_str();
    app->add_option("--max-modes", gen.max_modes)->capture_default_str();
    app->add_option("--min-length", gen.min_length)->capture_default_str();
    app->add_option("--max-length", gen.max_length)->capture_default_str();
    app->add_option("--swap", gen.swap_prob, "adjacent swap probability")->capture_default_str();
    app->add_option("--pairs", gen.num_pairs, "training pairs")->capture_default_str();
    app->add_option("--shared-mode-prob", gen.shared_mode_prob)->capture_default_str();
    app->add_option("--primary-mass-min", gen.primary_mass_min)->capture_default_str();
    app->add_option("--primary-mass-max", gen.primary_mass_max)->capture_default_str();
    app->add_option("--valid", valid, "validation pairs")->capture_default_str();
    app->add_option("--test", test, "test pairs")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
  }

  int run(const Global& g) {
    gen.seed = seed;
    gen.validate();
    const SyntheticData train = generate(gen);
    const SyntheticData dev = sample_pairs(train.lexicon, gen, valid, "synthlang.valid");
    const SyntheticData eval = sample_pairs(train.lexicon, gen, test, "synthlang.test");

    const fs::path dir(out);
    Outputs files;
    add_corpus(files, train.corpus, (dir / "train").string());
    add_corpus(files, dev.corpus, (dir / "valid").string());
    add_corpus(files, eval.corpus, (dir / "test").string());
    std::ostringstream gold;
    write_pharaoh(gold, train.gold);
    files.add(dir / "train.align", gold.str());
    files.add(dir / "gold.json", dump(train.lexicon.to_json()));
    json manifest = {{"config", gen.to_json()},
                     {"train", corpus_metadata(train.corpus)},
                     {"valid", corpus_metadata(dev.corpus)},
                     {"test", corpus_metadata(eval.corpus)}};
    files.add(dir / "synth.json", dump(manifest));
    files.commit();

    std::ostringstream text;
    text << "wrote " << train.corpus.size() << " training, " << dev.corpus.size() << " validation and "
         << eval.corpus.size() << " test pairs to " << dir.string() << "\n";
    emit(g, manifest, text.str());
    return 0;
  }
};

struct StatsCmd {
  std::string corpus, out;
  BucketFlags bucket;

  void attach(CLI::App* app) {
    app->add_option("--corpus", corpus, "corpus prefix (PREFIX.src, PREFIX.tgt)")->required();
    app->add_option("--out", out, "write both frequency profiles as JSON");
    bucket.attach(app);
  }

  int run(const Global& g) {
    const ParallelCorpus c = load_corpus(corpus);
    const BucketingConfig bc = bucket.get();
    json j = {{"corpus", corpus_metadata(c)}};
    std::ostringstream text;
    text << "pairs " << c.size() << "\n";
    json profiles;
    for (Side side : {Side::Source, Side::Target}) {
      const FreqProfile p = build_freq_profile(c, side, bc);
      std::uint64_t types[3] = {0, 0, 0}, tokens[3] = {0, 0, 0};
      for (TokenId t = 0; t < p.size(); ++t) {
        const auto b = static_cast<int>(p.bucket(t));
        ++types[b];
        tokens[b] += p.count(t);
      }
      json summary;
      text << to_string(side) << ": " << p.size() << " types, " << p.total() << " tokens\n";
      for (Bucket b : {Bucket::High, Bucket::Medium, Bucket::Low}) {
        const auto i = static_cast<int>(b);
        const double share = 100.0 * static_cast<double>(tokens[i]) / static_cast<double>(p.total());
        text << "  " << to_string(b) << ": " << types[i] << " types, " << fixed(share, 2) << "% of tokens\n";
        summary[std::string(to_string(b))] = {{"types", types[i]}, {"tokens", tokens[i]}};
      }
      j["buckets"][std::string(to_string(side))] = summary;
      profiles[std::string(to_string(side))] = p.to_json();
    }
    if (!out.empty()) {
      Outputs files;
      files.add(out, dump(profiles));
      files.commit();
    }
    emit(g, j, text.str());
    return 0;
  }
};

struct AlignCmd {
  std::string corpus, direction = "s->t", out, table, lexicon;
  std::uint64_t min_links = 1;
  AlignFlags align;

  void attach(CLI::App* app) {
    app->add_option("--corpus", corpus, "corpus prefix")->required();
    app->add_option("--direction", direction, "s->t or t->s")->capture_default_str();
    app->add_option("--out", out, "Pharaoh alignment output")->required();
    app->add_option("--table", table, "also write the translation table as JSON");
    app->add_option("--lexicon", lexicon, "also write the linked word pairs as a judge lexicon");
    app->add_option("--min-links", min_links, "links a word pair needs to enter the lexicon")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    align.attach(app);
  }

  int run(const Global& g) {
    const ParallelCorpus c = load_corpus(corpus);
    const Direction d = direction_from_string(direction);
    const AlignConfig cfg = align.get(g);
    const TranslationTable t = em_train(c, d, cfg);
    const Alignment a = viterbi_align(t, c, cfg);

    Outputs files;
    std::ostringstream pharaoh;
    write_pharaoh(pharaoh, a);
    files.add(out, pharaoh.str());
    if (!table.empty()) {
      const bool st = d == Direction::SourceToTarget;
      files.add(table, dump(t.to_json(st ? c.source_vocab() : c.target_vocab(),
                                       st ? c.target_vocab() : c.source_vocab())));
    }
    if (!lexicon.empty()) files.add(lexicon, LinkJudge::from_alignment(c, a, min_links).to_text());
    files.commit();

    std::size_t links = 0;
    for (const auto& s : a) links += s.size();
    json j = {{"direction", to_string(d)},
              {"config", cfg.to_json()},
              {"log_likelihood", t.log_likelihood()},
              {"pairs", c.size()},
              {"links", links}};
    std::ostringstream text;
    text << "aligned " << c.size() << " pairs " << to_string(d) << ", " << links << " links";
    if (!t.log_likelihood().empty()) text << ", final log-likelihood " << fixed(t.log_likelihood().back(), 4);
    text << "\n";
    emit(g, j, text.str());
    return 0;
  }
};

struct LfwCmd {
  std::string raw, kd, rkd, subset, out;
  std::size_t subset_size = 1000;
  std::uint64_t seed = 1;
  bool bidirectional = false;
  AlignFlags align;
  BucketFlags bucket;
  JudgeFlags judge;

  void attach(CLI::App* app) {
    app->add_option("--raw", raw, "raw corpus prefix")->required();
    app->add_option("--kd", kd, "forward-distilled corpus prefix");
    app->add_option("--rkd", rkd, "reverse-distilled corpus prefix");
    auto* s = app->add_option("--subset", subset, "JSON array of pair ids to analyze")->check(CLI::ExistingFile);
    app->add_option("--subset-size", subset_size, "pairs sampled with --seed when --subset is absent")
        ->excludes(s)
        ->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_flag("--bidirectional", bidirectional, "also analyze the kd+rkd concatenation");
    app->add_option("--out", out, "write the JSON report");
    align.attach(app);
    bucket.attach(app);
    judge.attach(app);
  }

  int run(const Global& g) {
    const LinkJudge j = judge.get();
    CompareOptions opts{align.get(g), bucket.get()};
    if (bidirectional && (kd.empty() || rkd.empty())) throw UsageError("--bidirectional needs both --kd and --rkd");
    const ParallelCorpus r = load_corpus(raw);
    std::optional<ParallelCorpus> k, v, both;
    std::vector<TaggedCorpus> sets = {{"Raw", &r}};
    if (!kd.empty()) sets.push_back({"KD", &k.emplace(load_corpus(kd))});
    if (!rkd.empty()) sets.push_back({"revKD", &v.emplace(load_corpus(rkd))});
    if (bidirectional) sets.push_back({"KD+revKD", &both.emplace(concat(*k, *v))});
    const std::vector<PairId> ids = subset.empty() ? sample_ids(r, subset_size, seed) : load_ids(subset);
    const auto reports = compare_datasets(sets, r, ids, j, opts);
    const json report = link_reports_json(reports, j, ids.size());
    if (!out.empty()) {
      Outputs files;
      files.add(out, dump(report));
      files.commit();
    }
    emit(g, report, render_link_table(reports));
    return 0;
  }
};

struct DistillCmd {
  std::string corpus, direction = "forward", teacher = "em", lexicon, translations, reverse_translations, out;
  AlignFlags align;

  void attach(CLI::App* app) {
    app->add_option("--corpus", corpus, "raw corpus prefix")->required();
    app->add_option("--direction", direction, "forward, reverse or both")
        ->check(CLI::IsMember({"forward", "reverse", "both"}))
        ->capture_default_str();
    app->add_option("--teacher", teacher, "em (argmax of a trained table), gold (modal lexicon) or replay")
        ->check(CLI::IsMember({"em", "gold", "replay"}))
        ->capture_default_str();
    app->add_option("--lexicon", lexicon, "gold lexicon JSON for --teacher gold")->check(CLI::ExistingFile);
    app->add_option("--translations", translations, "forward translations, one per line, for --teacher replay")
        ->check(CLI::ExistingFile);
    app->add_option("--reverse-translations", reverse_translations, "reverse translations for --teacher replay")
        ->check(CLI::ExistingFile);
    app->add_option("--out", out, "output prefix")->required();
    align.attach(app);
  }

  std::unique_ptr<Translator> make(const ParallelCorpus& raw, Direction d, const Global& g) const {
    if (teacher == "em") return std::make_unique<LexicalTeacher>(teacher_fit(raw, d, align.get(g)));
    if (teacher == "gold") {
      if (d != Direction::SourceToTarget) throw UsageError("the gold teacher only translates s->t");
      if (lexicon.empty()) throw UsageError("--teacher gold needs --lexicon");
      return std::make_unique<LexicalTeacher>(
          LexicalTeacher::from_lexicon(GoldLexicon::from_json(parse_json_file(lexicon)), raw.source_vocab()));
    }
    const std::string& file = d == Direction::SourceToTarget ? translations : reverse_translations;
    if (file.empty()) {
      throw UsageError(d == Direction::SourceToTarget ? "--teacher replay needs --translations"
                                                      : "--teacher replay needs --reverse-translations");
    }
    const Vocab& base = d == Direction::SourceToTarget ? raw.target_vocab() : raw.source_vocab();
    return std::make_unique<ReplayTranslator>(ReplayTranslator::from_file(d, base, file));
  }

  int run(const Global& g) {
    const ParallelCorpus raw = load_corpus(corpus);
    std::unique_ptr<Translator> fwd, rev;
    if (direction != "reverse") fwd = make(raw, Direction::SourceToTarget, g);
    if (direction != "forward") rev = make(raw, Direction::TargetToSource, g);
    ParallelCorpus result;
    std::string description;
    if (direction == "forward") {
      result = distill_forward(raw, *fwd);
      description = fwd->description();
    } else if (direction == "reverse") {
      result = distill_reverse(raw, *rev);
      description = rev->description();
    } else {
      result = build_bidirectional(raw, *fwd, *rev);
      description = fwd->description() + " + " + rev->description();
    }
    const json manifest = distill_manifest(result, raw, description);
    Outputs files;
    add_corpus(files, result, out);
    files.add(out + ".manifest.json", dump(manifest));
    files.commit();
    emit(g, manifest,
         "distilled " + std::to_string(result.size()) + " pairs (" + std::string(to_string(result.provenance())) +
             ") to " + out + ".{src,tgt}\n");
    return 0;
  }
};

struct TrainCmd {
  std::string data, valid, out, trace;
  std::int64_t steps = 6000, eval_every = 0;
  std::uint64_t seed = 1;
  StudentFlags student;

  void attach(CLI::App* app) {
    app->add_option("--data", data, "training corpus prefix")->required();
    app->add_option("--valid", valid, "validation corpus prefix for BLEU evaluations");
    app->add_option("--steps", steps)->capture_default_str();
    app->add_option("--eval-every", eval_every, "steps between validation evaluations, 0 for none")
        ->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--out", out, "student checkpoint JSON")->required();
    app->add_option("--trace", trace, "per-step loss as JSON lines");
    student.attach(app);
  }

  int run(const Global& g) {
    if (steps < 0) throw UsageError("--steps must be non-negative");
    const StudentConfig cfg = student.get(seed);
    const ParallelCorpus c = load_corpus(data);
    NatStudent s(c.source_vocab().size(), c.target_vocab().size(), cfg);

    TrainHooks hooks;
    std::vector<Sentence> vsrc, vref;
    if (!valid.empty()) {
      Vocab sv = c.source_vocab().without_counts(), tv = c.target_vocab().without_counts();
      const ParallelCorpus v = remap_corpus(load_corpus(valid), sv, tv);
      for (const auto& p : v.pairs()) {
        vsrc.push_back(p.source);
        vref.push_back(p.target);
      }
      hooks.eval_every = eval_every;
      hooks.validate = [&](const NatStudent& m) { return bleu(student_decode_all(m, vsrc), vref).score; };
    }
    const TrainTrace t = student_train(s, c, steps, hooks);

    const json checkpoint = {{"student", s.to_json()},
                             {"source_vocab", vocab_json(c.source_vocab())},
                             {"target_vocab", vocab_json(c.target_vocab())},
                             {"corpus_digest", corpus_digest(c)}};
    Outputs files;
    files.add(out, dump(checkpoint));
    if (!trace.empty()) files.add(trace, t.to_jsonl());
    files.commit();

    json evals = json::array();
    for (const auto& e : t.evals) evals.push_back({{"step", e.step}, {"bleu", e.bleu}});
    const json j = {{"steps", t.steps},
                    {"final_loss", t.loss.empty() ? json(nullptr) : json(t.loss.back())},
                    {"evals", evals},
                    {"config", cfg.to_json()}};
    std::ostringstream text;
    text << "trained " << t.steps << " steps";
    if (!t.loss.empty()) text << ", final loss " << fixed(t.loss.back(), 4);
    if (!t.evals.empty()) text << ", last validation BLEU " << fixed(t.evals.back().bleu, 2);
    text << "\n";
    emit(g, j, text.str());
    return 0;
  }
};

json metrics_json(const FinalMetrics& m) {
  return {{"bleu", m.bleu.to_json()},
          {"alf", {{"accuracy", m.alf.accuracy}, {"correct", m.alf.correct}, {"total", m.alf.total}}},
          {"lexacc", m.lexacc.to_json()},
          {"lfw_output_ratio", m.lfw_output_ratio}};
}

std::string metrics_text(const std::string& name, const FinalMetrics& m) {
  const ResultRow row{name, m.bleu.score, m.alf.accuracy, m.lfw_output_ratio, m.lexacc};
  return render_results_table(std::span(&row, 1)) + "\n" + render_lexacc_table(std::span(&row, 1));
}

struct EvalCmd {
  std::string model, test, raw, hyp, out;
  BucketFlags bucket;
  JudgeFlags judge;

  void attach(CLI::App* app) {
    app->add_option("--model", model, "student checkpoint")->required()->check(CLI::ExistingFile);
    app->add_option("--test", test, "test corpus prefix")->required();
    app->add_option("--raw", raw, "raw training corpus prefix defining word frequencies")->required();
    app->add_option("--hyp", hyp, "write decoded hypotheses");
    app->add_option("--out", out, "write the JSON metrics");
    bucket.attach(app);
    judge.attach(app);
  }

  int run(const Global& g) {
    const LinkJudge j = judge.get();
    const BucketingConfig bc = bucket.get();
    const json ck = parse_json_file(model);
    NatStudent s = [&] {
      try {
        return NatStudent::from_json(ck.at("student"));
      } catch (const json::exception& e) {
        throw Error("malformed checkpoint " + model + ": " + e.what());
      }
    }();
    const StudentVocab vocab{vocab_from_json(ck.at("source_vocab")), vocab_from_json(ck.at("target_vocab"))};
    const ParallelCorpus r = load_corpus(raw);
    const ParallelCorpus t = load_corpus(test);
    std::vector<Sentence> hyps;
    const FinalMetrics m =
        evaluate_student(s, vocab, t, build_freq_profile(r, Side::Source, bc), build_freq_profile(r, Side::Target, bc),
                         j, &hyps);
    const json report = metrics_json(m);
    Outputs files;
    if (!hyp.empty()) {
      Vocab tv = vocab.target;
      Vocab sv = vocab.source;
      remap_corpus(t, sv, tv);  // extends tv so every hypothesis id has a surface
      files.add(hyp, hypothesis_text(hyps, tv));
    }
    if (!out.empty()) files.add(out, dump(report));
    files.commit();
    emit(g, report, metrics_text(fs::path(model).stem().string(), m));
    return 0;
  }
};

struct RunStrategyCmd {
  std::string preset, expression, raw, valid, test, out;
  std::int64_t total_steps = RunConfig{}.total_steps, eval_every = 0;
  std::uint64_t seed = 1;
  std::string early_stop = "fixed";
  std::int64_t fixed_steps = 0;
  double theta = 0.9;
  std::optional<double> reference;
  int patience = 0;
  bool analyze_links = false;
  std::size_t link_subset = 1000;
  AlignFlags teacher;
  StudentFlags student;
  BucketFlags bucket;
  JudgeFlags judge;

  void attach(CLI::App* app) {
    auto* p = app->add_option("--preset", preset, "strategy preset 1..7");
    app->add_option("--strategy", expression, "strategy expression, e.g. raw->kd+rkd->kd")->excludes(p);
    app->add_option("--total-steps", total_steps, "step budget shared by all stages")->capture_default_str();
    app->add_option("--raw", raw, "raw training corpus prefix; without it only the budget plan is printed");
    app->add_option("--valid", valid, "raw validation corpus prefix");
    app->add_option("--test", test, "test corpus prefix");
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--eval-every", eval_every, "validation cadence, 0 for max(total/50, 10)")
        ->capture_default_str();
    app->add_option("--early-stop", early_stop, "rule for a leading raw stage: fixed or bleu")
        ->check(CLI::IsMember({"fixed", "bleu"}))
        ->capture_default_str();
    app->add_option("--fixed-steps", fixed_steps, "fixed rule: raw steps, 0 for the whole stage budget")
        ->capture_default_str();
    app->add_option("--theta", theta, "bleu rule: fraction of the reference score")->capture_default_str();
    app->add_option("--reference", reference, "bleu rule: best raw-trained validation BLEU");
    app->add_option("--patience", patience, "bleu rule without reference: evaluations without improvement")
        ->capture_default_str();
    app->add_flag("--analyze-links", analyze_links, "add the low-frequency link analysis to the report");
    app->add_option("--link-subset", link_subset, "pairs in the link analysis subset")->capture_default_str();
    app->add_option("--out", out, "write the JSON report");
    teacher.attach(app);
    student.attach(app);
    bucket.attach(app);
    judge.attach(app);
  }

  Strategy strategy() const {
    if (!preset.empty()) return preset_strategy(preset);
    if (!expression.empty()) return parse_strategy(expression);
    throw UsageError("pass --preset or --strategy");
  }

  int run(const Global& g) {
    const Strategy s = strategy();
    RunConfig cfg;
    cfg.total_steps = total_steps;
    cfg.eval_every = eval_every;
    cfg.early_stop.kind = early_stop == "bleu" ? EarlyStopRule::Kind::BleuThreshold : EarlyStopRule::Kind::FixedStep;
    cfg.early_stop.fixed_steps = fixed_steps;
    cfg.early_stop.theta = theta;
    cfg.early_stop.reference = reference;
    cfg.early_stop.patience = patience;
    cfg.student = student.get(seed);
    cfg.analyze_links = analyze_links;
    cfg.link_subset = link_subset;
    cfg.link_options.align = teacher.get(g);
    cfg.validate();
    const auto budgets = plan_budgets(total_steps, s, cfg.weights);

    if (raw.empty()) {
      json stages = json::array();
      std::ostringstream text;
      text << (s.name.empty() ? "" : s.name + " ") << render_strategy(s) << "\n";
      for (std::size_t i = 0; i < budgets.size(); ++i) {
        stages.push_back({{"expression", render_stage(s.stages[i])}, {"budget", budgets[i]}});
        text << "  stage " << i + 1 << ": " << render_stage(s.stages[i]) << "  " << budgets[i] << " steps\n";
      }
      emit(g, {{"strategy", render_strategy(s)}, {"total_steps", total_steps}, {"stages", stages}}, text.str());
      return 0;
    }
    if (valid.empty() || test.empty()) throw UsageError("training needs --valid and --test");
    const LinkJudge j = judge.get();
    const ParallelCorpus r = load_corpus(raw);
    const ParallelCorpus v = load_corpus(valid);
    const ParallelCorpus t = load_corpus(test);

    bool need_kd = false, need_rkd = false;
    for (const auto& st : s.stages) {
      for (Atom a : st.atoms) {
        need_kd = need_kd || a == Atom::Kd;
        need_rkd = need_rkd || a == Atom::Rkd;
      }
    }
    std::optional<LexicalTeacher> fwd, rev;
    if (need_kd) fwd.emplace(teacher_fit(r, Direction::SourceToTarget, teacher.get(g)));
    if (need_rkd) rev.emplace(teacher_fit(r, Direction::TargetToSource, teacher.get(g)));
    const Teachers th{fwd ? &*fwd : nullptr, rev ? &*rev : nullptr};
    const EvalData ev{&v, &t, &j, bucket.get()};

    const ExperimentReport rep = lfr::run(s, r, th, ev, cfg);
    const json report = rep.to_json();
    if (!out.empty()) {
      Outputs files;
      files.add(out, dump(report));
      files.commit();
    }
    std::string text = metrics_text(s.name.empty() ? render_strategy(s) : s.name, rep.metrics);
    if (!rep.links.empty()) text += "\n" + render_link_table(rep.links);
    emit(g, report, text);
    return 0;
  }
};

struct ReportCmd {
  std::vector<std::string> inputs;
  std::vector<std::string> hyps;
  std::string ref;

  void attach(CLI::App* app) {
    app->add_option("reports", inputs, "run-strategy JSON reports")->check(CLI::ExistingFile);
    app->add_option("--hyp", hyps, "two hypothesis files for a paired sign test")
        ->expected(2)
        ->check(CLI::ExistingFile);
    app->add_option("--ref", ref, "reference file for the sign test")->check(CLI::ExistingFile);
  }

  static LexAccEntry entry(const json& j) {
    return {j.at("accuracy").get<double>(), j.at("correct").get<std::uint64_t>(), j.at("total").get<std::uint64_t>()};
  }

  static std::vector<Sentence> read_lines(const fs::path& path, Vocab& vocab) {
    std::vector<Sentence> out;
    std::istringstream in(read_file(path));
    for (std::string line; std::getline(in, line);) {
      Sentence s;
      for (auto tok : split_tokens(line)) s.push_back(vocab.add(tok, 0));
      out.push_back(std::move(s));
    }
    return out;
  }

  int run(const Global& g) {
    if (inputs.empty() && hyps.empty()) throw UsageError("nothing to report: pass report files or --hyp A B --ref R");
    json j;
    std::string text;
    if (!inputs.empty()) {
      std::vector<ResultRow> rows;
      std::vector<LinkReport> links;
      for (const auto& path : inputs) {
        const json r = parse_json_file(path);
        try {
          const json& m = r.at("metrics");
          const json& lx = m.at("lexacc");
          ResultRow row;
          row.name = r.value("name", "");
          if (row.name.empty()) row.name = r.at("strategy").get<std::string>();
          row.bleu = m.at("bleu").at("bleu").get<double>();
          row.alf = m.at("alf").at("accuracy").get<double>();
          row.lfw_ratio = m.at("lfw_output_ratio").get<double>();
          row.lexacc = {entry(lx.at("All")), entry(lx.at("High")), entry(lx.at("Medium")), entry(lx.at("Low"))};
          rows.push_back(row);
          j["rows"].push_back({{"name", row.name},
                               {"bleu", row.bleu},
                               {"alf", row.alf},
                               {"lfw_output_ratio", row.lfw_ratio},
                               {"lexacc", lx}});
          if (r.contains("links")) {
            for (const auto& l : r.at("links")) {
              LinkReport lr;
              lr.dataset = row.name + " " + l.at("dataset").get<std::string>();
              lr.direction = direction_from_string(l.at("direction").get<std::string>());
              lr.recall = l.at("recall").get<double>();
              lr.precision = l.at("precision").get<double>();
              lr.f1 = l.at("f1").get<double>();
              links.push_back(lr);
            }
          }
        } catch (const json::exception& e) {
          throw Error(path + " is not a run-strategy report: " + e.what());
        }
      }
      text += render_results_table(rows) + "\n" + render_lexacc_table(rows);
      if (!links.empty()) text += "\n" + render_link_table(links);
    }
    if (!hyps.empty()) {
      if (ref.empty()) throw UsageError("--hyp needs --ref");
      Vocab vocab;
      const auto a = read_lines(hyps[0], vocab);
      const auto b = read_lines(hyps[1], vocab);
      const auto r = read_lines(ref, vocab);
      if (a.size() != r.size() || b.size() != r.size()) throw Error("hypothesis and reference line counts differ");
      std::vector<double> sa, sb;
      for (std::size_t i = 0; i < r.size(); ++i) {
        sa.push_back(sentence_bleu(a[i], r[i]));
        sb.push_back(sentence_bleu(b[i], r[i]));
      }
      const SignTest st = sign_test(sa, sb);
      const double ba = bleu(a, r).score, bb = bleu(b, r).score;
      j["sign_test"] = {{"bleu_a", ba},         {"bleu_b", bb},         {"wins", st.wins},
                        {"losses", st.losses}, {"ties", st.ties}, {"p_value", st.p_value}};
      text += (text.empty() ? "" : "\n") + std::string("BLEU ") + fixed(ba, 2) + " vs " + fixed(bb, 2) +
              "; sentence wins " + std::to_string(st.wins) + ", losses " + std::to_string(st.losses) + ", ties " +
              std::to_string(st.ties) + ", sign test p = " + fixed(st.p_value, 4) + "\n";
    }
    emit(g, j, text);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-frequency word rejuvenation toolkit for distilled NAT data"};
  app.name("lfr");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI file with option values");
  Global g;
  app.add_flag("--json", g.json, "machine-readable report on standard output");
  app.add_option("--threads", g.threads, "worker cap")->check(CLI::PositiveNumber)->capture_default_str();

  SynthCmd synth;
  StatsCmd stats;
  AlignCmd align;
  LfwCmd lfw;
  DistillCmd distill;
  TrainCmd train;
  EvalCmd eval;
  RunStrategyCmd run_strategy;
  ReportCmd report;
  std::function<int()> action;
  auto sub = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* s = app.add_subcommand(name, help);
    cmd.attach(s);
    s->callback([&] { action = [&] { return cmd.run(g); }; });
  };
  sub("synth", "generate a synthetic parallel corpus with its gold lexicon", synth);
  sub("stats", "corpus statistics and frequency buckets", stats);
  sub("align", "EM word alignment to Pharaoh format", align);
  sub("lfw", "low-frequency link recall, precision and F1 per dataset and direction", lfw);
  sub("distill", "build forward, reverse or bidirectional distilled data", distill);
  sub("train", "train the NAT student on one corpus", train);
  sub("eval", "decode a test set and score BLEU and lexical accuracy", eval);
  sub("run-strategy", "plan or run a staged training strategy", run_strategy);
  sub("report", "tables from run reports, paired sign test", report);

  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    std::cerr << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
