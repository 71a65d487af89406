#include "lfr/toynmt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "lfr/error.hpp"
#include "lfr/util.hpp"

namespace lfr {

LexicalTeacher::LexicalTeacher(Direction direction, Vocab output_vocab, std::vector<TokenId> lookup,
                               TokenId fallback, std::string description)
    : direction_(direction),
      vocab_(std::move(output_vocab)),
      lookup_(std::move(lookup)),
      fallback_(fallback),
      description_(std::move(description)) {
  if (vocab_.size() == 0) throw Error("teacher has an empty output vocabulary");
  for (TokenId t : lookup_) {
    if (!vocab_.contains(t)) throw Error("teacher lookup points outside its output vocabulary");
  }
  if (!vocab_.contains(fallback_)) throw Error("teacher fallback outside its output vocabulary");
}

LexicalTeacher LexicalTeacher::from_table(const TranslationTable& table, const Vocab& output_vocab,
                                          std::string description) {
  if (table.conditioned_size() != output_vocab.size()) {
    throw Error("output vocabulary does not match the translation table");
  }
  std::vector<TokenId> lookup(table.conditioning_size());
  for (TokenId s = 0; s < lookup.size(); ++s) lookup[s] = table.argmax(s);
  return LexicalTeacher(table.direction(), output_vocab.without_counts(), std::move(lookup),
                        table.argmax(table.null_id()), std::move(description));
}

LexicalTeacher LexicalTeacher::from_lexicon(const GoldLexicon& lexicon, const Vocab& input_vocab) {
  std::vector<TokenId> lookup(input_vocab.size());
  for (TokenId s = 0; s < input_vocab.size(); ++s) {
    auto id = lexicon.source_vocab().find(input_vocab.surface(s));
    if (!id) throw Error("source word '" + input_vocab.surface(s) + "' missing from the gold lexicon");
    lookup[s] = modal_translation(lexicon, *id);
  }
  return LexicalTeacher(Direction::SourceToTarget, lexicon.target_vocab().without_counts(), std::move(lookup),
                        0, "gold-modal");
}

TokenId LexicalTeacher::translate_token(TokenId input) const {
  return input < lookup_.size() ? lookup_[input] : fallback_;
}

Sentence LexicalTeacher::translate(std::span<const TokenId> input) {
  Sentence out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = translate_token(input[i]);
  return out;
}

LexicalTeacher teacher_fit(const ParallelCorpus& corpus, Direction direction, const AlignConfig& config) {
  if (corpus.empty()) throw Error("cannot fit a teacher on an empty corpus");
  const TranslationTable table = em_train(corpus, direction, config);
  const Vocab& out = direction == Direction::SourceToTarget ? corpus.target_vocab() : corpus.source_vocab();
  return LexicalTeacher::from_table(table, out, "lexical-argmax " + std::string(to_string(direction)));
}

// ---------------------------------------------------------------------------

void StudentConfig::validate() const {
  if (dim < 1) throw UsageError("student dimension must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be positive");
  if (batch_size < 1) throw UsageError("batch size must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw UsageError("label smoothing must lie in [0, 1)");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw UsageError("init scale must be non-negative");
}

nlohmann::json StudentConfig::to_json() const {
  return {{"dim", dim},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"seed", seed},
          {"label_smoothing", label_smoothing},
          {"init_scale", init_scale},
          {"zero_init", zero_init}};
}

std::string StudentConfig::digest() const {
  Digest d;
  d.update(to_json().dump());
  return d.hex();
}

NatStudent::NatStudent(std::size_t source_vocab_size, std::size_t target_vocab_size, StudentConfig config)
    : config_(config), source_vocab_size_(source_vocab_size), target_vocab_size_(target_vocab_size) {
  config_.validate();
  if (target_vocab_size == 0) throw Error("student needs a non-empty target vocabulary");
  const auto d = static_cast<Eigen::Index>(config_.dim);
  embedding_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(source_vocab_size + 1), d);
  output_ = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(target_vocab_size));
  bias_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(target_vocab_size));
  if (config_.zero_init) return;
  Rng rng = Rng::stream(config_.seed, "toynmt.init");
  for (Eigen::Index c = 0; c < embedding_.cols(); ++c) {
    for (Eigen::Index r = 0; r < embedding_.rows(); ++r) embedding_(r, c) = config_.init_scale * rng.normal();
  }
  for (Eigen::Index c = 0; c < output_.cols(); ++c) {
    for (Eigen::Index r = 0; r < output_.rows(); ++r) output_(r, c) = config_.init_scale * rng.normal();
  }
}

void NatStudent::observe_length(std::size_t source_length, std::size_t target_length) {
  ++length_counts_[static_cast<int>(target_length) - static_cast<int>(source_length)];
}

int NatStudent::predicted_delta() const {
  int best = 0;
  std::uint64_t best_count = 0;
  for (const auto& [delta, count] : length_counts_) {
    if (count > best_count || (count == best_count && std::abs(delta) < std::abs(best))) {
      best = delta;
      best_count = count;
    }
  }
  return best;
}

std::size_t NatStudent::predicted_length(std::size_t source_length) const {
  const long t = static_cast<long>(source_length) + predicted_delta();
  return static_cast<std::size_t>(std::max(1L, t));
}

bool NatStudent::finite() const {
  return embedding_.allFinite() && output_.allFinite() && bias_.allFinite();
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::MatrixXd>(flat.data(), m.rows(), m.cols()) = m;
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw Error("checkpoint matrix has the wrong size");
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows, cols);
}

}  // namespace

nlohmann::json NatStudent::to_json() const {
  nlohmann::json lengths = nlohmann::json::array();
  for (const auto& [delta, count] : length_counts_) lengths.push_back({delta, count});
  std::vector<double> b(bias_.data(), bias_.data() + bias_.size());
  return {{"config", config_.to_json()},
          {"config_digest", config_.digest()},
          {"source_vocab_size", source_vocab_size_},
          {"target_vocab_size", target_vocab_size_},
          {"embedding", matrix_json(embedding_)},
          {"output", matrix_json(output_)},
          {"bias", b},
          {"length_counts", lengths}};
}

NatStudent NatStudent::from_json(const nlohmann::json& j) {
  try {
    const auto& c = j.at("config");
    StudentConfig config;
    config.dim = c.at("dim").get<int>();
    config.learning_rate = c.at("learning_rate").get<double>();
    config.batch_size = c.at("batch_size").get<int>();
    config.seed = c.at("seed").get<std::uint64_t>();
    config.label_smoothing = c.at("label_smoothing").get<double>();
    config.init_scale = c.at("init_scale").get<double>();
    config.zero_init = true;  // parameters are overwritten below
    if (j.at("config_digest").get<std::string>() != [&] {
          StudentConfig probe = config;
          probe.zero_init = c.at("zero_init").get<bool>();
          return probe.digest();
        }()) {
      throw Error("checkpoint config digest mismatch");
    }
    NatStudent s(j.at("source_vocab_size").get<std::size_t>(), j.at("target_vocab_size").get<std::size_t>(),
                 config);
    s.config_.zero_init = c.at("zero_init").get<bool>();
    s.embedding_ = matrix_from(j.at("embedding"));
    s.output_ = matrix_from(j.at("output"));
    const auto b = j.at("bias").get<std::vector<double>>();
    s.bias_ = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    if (s.embedding_.rows() != static_cast<Eigen::Index>(s.source_vocab_size_ + 1) ||
        s.embedding_.cols() != config.dim || s.output_.rows() != config.dim ||
        s.output_.cols() != static_cast<Eigen::Index>(s.target_vocab_size_) ||
        s.bias_.size() != static_cast<Eigen::Index>(s.target_vocab_size_)) {
      throw Error("checkpoint parameter shapes do not match its vocabulary sizes");
    }
    for (const auto& e : j.at("length_counts")) {
      s.length_counts_[e.at(0).get<int>()] = e.at(1).get<std::uint64_t>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed student checkpoint: ") + e.what());
  }
}

std::size_t position_map(std::size_t j, std::size_t n, std::size_t T) {
  // round(j * n / T), halves rounding up, clamped to the last source word.
  const std::size_t m = (2 * j * n + T) / (2 * T);
  return std::min(m, n - 1);
}

namespace {

// Row-wise log-softmax in place; returns the log-normalizers.
Eigen::VectorXd log_softmax_rows(Eigen::MatrixXd& z) {
  Eigen::VectorXd lse(z.rows());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    const double s = (z.row(r).array() - mx).exp().sum();
    lse(r) = mx + std::log(s);
    z.row(r).array() -= lse(r);
  }
  return lse;
}

}  // namespace

StudentOutput student_forward(const NatStudent& student, std::span<const TokenId> source, std::size_t T,
                              const Sentence* reference) {
  if (T == 0) throw Error("target length must be positive");
  if (reference && reference->size() != T) throw Error("reference length differs from T");
  StudentOutput out;
  const auto V = static_cast<Eigen::Index>(student.target_vocab_size());
  Eigen::MatrixXd h(static_cast<Eigen::Index>(T), student.embedding().cols());
  for (std::size_t j = 0; j < T; ++j) {
    TokenId row = student.pad_row();
    if (!source.empty()) {
      const TokenId w = source[position_map(j, source.size(), T)];
      row = student.row_of(w);
    }
    h.row(static_cast<Eigen::Index>(j)) = student.embedding().row(row);
  }
  for (TokenId w : source) out.oov += w >= student.source_vocab_size();
  Eigen::MatrixXd z = h * student.output();
  z.rowwise() += student.bias().transpose();
  log_softmax_rows(z);
  out.loss = std::numeric_limits<double>::quiet_NaN();
  if (reference) {
    const double eps = student.config().label_smoothing;
    double total = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      const TokenId y = (*reference)[j];
      if (y >= student.target_vocab_size()) throw Error("reference token outside the student vocabulary");
      const auto r = static_cast<Eigen::Index>(j);
      total += -(1.0 - eps) * z(r, y) - eps / static_cast<double>(V) * z.row(r).sum();
    }
    out.loss = total / static_cast<double>(T);
  }
  out.probs = z.array().exp().matrix();
  return out;
}

StudentGradient loss_and_gradient(const NatStudent& student, std::span<const SentencePair* const> batch) {
  const Eigen::Index d = student.embedding().cols();
  const auto V = static_cast<Eigen::Index>(student.target_vocab_size());
  const double eps = student.config().label_smoothing;

  // Logits depend on the source word only, so positions are grouped by the
  // embedding row they read.
  std::unordered_map<TokenId, Eigen::Index> slot;
  std::vector<TokenId> rows;
  std::vector<std::pair<Eigen::Index, TokenId>> labels;  // (slot, gold target)
  for (const SentencePair* p : batch) {
    const std::size_t n = p->source.size();
    const std::size_t T = p->target.size();
    for (std::size_t j = 0; j < T; ++j) {
      const TokenId row = n ? student.row_of(p->source[position_map(j, n, T)]) : student.pad_row();
      auto [it, fresh] = slot.try_emplace(row, static_cast<Eigen::Index>(rows.size()));
      if (fresh) rows.push_back(row);
      const TokenId y = p->target[j];
      if (y >= student.target_vocab_size()) throw Error("target token outside the student vocabulary");
      labels.emplace_back(it->second, y);
    }
  }
  StudentGradient g;
  g.positions = labels.size();
  if (labels.empty()) throw Error("batch has no target positions");

  // Canonical row order keeps results independent of hash iteration.
  std::vector<Eigen::Index> order(rows.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return rows[a] < rows[b]; });
  std::vector<Eigen::Index> rank(rows.size());
  for (std::size_t k = 0; k < order.size(); ++k) rank[order[k]] = static_cast<Eigen::Index>(k);
  const auto U = static_cast<Eigen::Index>(rows.size());
  g.rows.resize(rows.size());
  Eigen::MatrixXd h(U, d);
  for (Eigen::Index k = 0; k < U; ++k) {
    g.rows[k] = rows[order[k]];
    h.row(k) = student.embedding().row(g.rows[k]);
  }
  Eigen::VectorXd count = Eigen::VectorXd::Zero(U);
  for (auto& [s, y] : labels) {
    s = rank[s];
    count(s) += 1.0;
  }

  Eigen::MatrixXd z = h * student.output();
  z.rowwise() += student.bias().transpose();
  log_softmax_rows(z);

  const double inv = 1.0 / static_cast<double>(labels.size());
  const double smooth = eps / static_cast<double>(V);
  double loss = 0.0;
  for (Eigen::Index k = 0; k < U; ++k) loss -= count(k) * smooth * z.row(k).sum();
  for (const auto& [s, y] : labels) loss -= (1.0 - eps) * z(s, y);
  g.loss = loss * inv;

  // dL/dz = count * softmax - (1-eps) onehot - count * eps/V, all over N.
  Eigen::MatrixXd dz = z.array().exp().matrix();
  for (Eigen::Index k = 0; k < U; ++k) dz.row(k) = count(k) * (dz.row(k).array() - smooth).matrix();
  for (const auto& [s, y] : labels) dz(s, y) -= 1.0 - eps;
  dz *= inv;

  g.output.noalias() = h.transpose() * dz;
  g.bias = dz.colwise().sum().transpose();
  g.embedding.noalias() = dz * student.output().transpose();
  return g;
}

std::string TrainTrace::to_jsonl(std::int64_t step_offset) const {
  std::ostringstream out;
  std::size_t e = 0;
  for (std::size_t i = 0; i < loss.size(); ++i) {
    const std::int64_t step = static_cast<std::int64_t>(i) + 1;
    nlohmann::json row = {{"step", step + step_offset}, {"loss", loss[i]}};
    if (e < evals.size() && evals[e].step == step) row["bleu"] = evals[e++].bleu;
    out << row.dump() << '\n';
  }
  return out.str();
}

TrainTrace student_train(NatStudent& student, const ParallelCorpus& corpus, std::int64_t steps,
                         const TrainHooks& hooks, std::string_view stream) {
  if (steps < 0) throw UsageError("step count must be non-negative");
  TrainTrace trace;
  if (steps == 0) return trace;
  if (corpus.empty()) throw Error("cannot train on an empty corpus");
  for (const auto& p : corpus.pairs()) student.observe_length(p.source.size(), p.target.size());

  Rng rng = Rng::stream(student.config().seed, stream);
  std::vector<std::size_t> perm(corpus.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t cursor = perm.size();
  const auto B = static_cast<std::size_t>(student.config().batch_size);
  const double lr = student.config().learning_rate;
  std::vector<const SentencePair*> batch;
  trace.loss.reserve(static_cast<std::size_t>(steps));

  for (std::int64_t step = 1; step <= steps; ++step) {
    batch.clear();
    while (batch.size() < std::min(B, corpus.size())) {
      if (cursor == perm.size()) {
        rng.shuffle(perm);
        cursor = 0;
      }
      batch.push_back(&corpus[perm[cursor++]]);
    }
    const StudentGradient g = loss_and_gradient(student, batch);
    if (!std::isfinite(g.loss)) throw Error("non-finite loss at step " + std::to_string(step));
    student.output() -= lr * g.output;
    student.bias() -= lr * g.bias;
    for (std::size_t k = 0; k < g.rows.size(); ++k) {
      student.embedding().row(g.rows[k]) -= lr * g.embedding.row(static_cast<Eigen::Index>(k));
    }
    trace.loss.push_back(g.loss);
    trace.steps = step;
    if (hooks.eval_every > 0 && step % hooks.eval_every == 0 && hooks.validate) {
      trace.evals.push_back({step, hooks.validate(student)});
      if (hooks.should_stop && hooks.should_stop(trace)) {
        trace.stopped_early = step < steps;
        break;
      }
    }
  }
  if (!student.finite()) throw Error("parameters became non-finite during training");
  return trace;
}

namespace {

std::vector<TokenId> argmax_rows(const NatStudent& student, const std::vector<TokenId>& rows) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(rows.size()), student.embedding().cols());
  for (std::size_t k = 0; k < rows.size(); ++k) h.row(static_cast<Eigen::Index>(k)) = student.embedding().row(rows[k]);
  Eigen::MatrixXd z = h * student.output();
  z.rowwise() += student.bias().transpose();
  std::vector<TokenId> best(rows.size());
  for (Eigen::Index k = 0; k < z.rows(); ++k) {
    Eigen::Index arg = 0;
    double mx = z(k, 0);
    for (Eigen::Index v = 1; v < z.cols(); ++v) {
      if (z(k, v) > mx) {
        mx = z(k, v);
        arg = v;
      }
    }
    best[static_cast<std::size_t>(k)] = static_cast<TokenId>(arg);
  }
  return best;
}

}  // namespace

std::vector<Sentence> student_decode_all(const NatStudent& student, std::span<const Sentence> sources) {
  std::vector<TokenId> rows;
  std::unordered_map<TokenId, std::size_t> slot;
  auto row_for = [&](TokenId row) {
    auto [it, fresh] = slot.try_emplace(row, rows.size());
    if (fresh) rows.push_back(row);
    return it->second;
  };
  std::vector<std::vector<std::size_t>> plan(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& src = sources[s];
    const std::size_t T = student.predicted_length(src.size());
    for (std::size_t j = 0; j < T; ++j) {
      const TokenId row = src.empty() ? student.pad_row() : student.row_of(src[position_map(j, src.size(), T)]);
      plan[s].push_back(row_for(row));
    }
  }
  const auto best = argmax_rows(student, rows);
  std::vector<Sentence> out(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t k : plan[s]) out[s].push_back(best[k]);
  }
  return out;
}

Sentence student_decode(const NatStudent& student, std::span<const TokenId> source) {
  const Sentence src(source.begin(), source.end());
  return student_decode_all(student, std::span<const Sentence>(&src, 1)).front();
}

}  // namespace lfr
