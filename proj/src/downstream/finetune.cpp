#include "uer/downstream/finetune.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "uer/error.hpp"
#include "uer/pipeline/checkpoint.hpp"
#include "uer/pipeline/train.hpp"

namespace uer::downstream {

using pipeline::Model;
using targets::TargetKind;

namespace {

std::vector<std::vector<double>> snapshot(const Model& model) {
  std::vector<std::vector<double>> out;
  for (const auto& p : model.parameters()) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

void restore(Model& model, const std::vector<std::vector<double>>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i].mutable_data().begin());
  }
}

std::string describe(const Metrics& m) {
  std::ostringstream s;
  s << std::setprecision(6) << "dev_acc=" << m.accuracy;
  if (m.tagging) s << " dev_p=" << m.entities.precision << " dev_r=" << m.entities.recall << " dev_f1=" << m.entities.f1;
  return s.str();
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::unique_ptr<Model> prepare_model(const std::optional<std::filesystem::path>& pretrained,
                                     const pipeline::ModelSpec& base, TaskKind kind,
                                     const std::vector<std::string>& labels, const text::Vocabulary& vocab,
                                     bool allow_vocab_mismatch) {
  if (!pretrained) return pipeline::assemble(task_spec(base, kind, labels), vocab);
  if (!std::filesystem::exists(*pretrained)) {
    throw DataError("pre-trained checkpoint " + pretrained->string() + " does not exist");
  }
  const auto stored = pipeline::read_checkpoint(*pretrained).spec;
  auto loaded = pipeline::load_model(*pretrained, vocab, task_spec(stored, kind, labels), allow_vocab_mismatch);
  return std::move(loaded.model);
}

FineTuneResult fine_tune(Model& model, const TaskConfig& task, const Dataset& train, const Dataset& dev,
                         const std::filesystem::path& output, std::ostream& log) {
  if (task.epochs == 0) throw ConfigError("fine-tuning needs at least one epoch");
  if (task.batch_size == 0) throw ConfigError("batch size must be positive");
  if (train.rows.empty()) throw DataError("empty training set");
  if (dev.rows.empty()) throw DataError("empty dev set");
  const std::size_t eval_every = std::max<std::size_t>(1, task.eval_every);
  if (task.strategy == Strategy::kFeature) model.freeze_except("target.");

  pipeline::ExampleSource source(train.rows, model.spec().vocab_size, false);
  pipeline::TrainConfig cfg;
  cfg.steps = (train.rows.size() + task.batch_size - 1) / task.batch_size;
  cfg.batch_size = task.batch_size;
  cfg.lr = task.lr;
  cfg.warmup = task.warmup;
  cfg.clip = task.clip;
  cfg.log_every = 0;

  FineTuneResult result;
  std::optional<AdamState> state;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> best;
  for (std::size_t epoch = 1; epoch <= task.epochs; ++epoch) {
    cfg.seed = task.seed + epoch - 1;
    auto r = pipeline::train(model, source, cfg, log, state ? &*state : nullptr, step);
    state = std::move(r.optimizer);
    step += cfg.steps;
    result.losses.insert(result.losses.end(), r.losses.begin(), r.losses.end());

    if (epoch % eval_every != 0 && epoch != task.epochs) continue;
    const Metrics m = evaluate(model, dev);
    result.history.push_back(m);
    const bool improved = best.empty() || m.score() > result.best_dev.score();
    log << "epoch=" << epoch << ' ' << describe(m) << (improved ? " best" : "") << '\n';
    if (!improved) continue;
    result.best_dev = m;
    result.best_epoch = epoch;
    best = snapshot(model);
    if (!output.empty()) pipeline::save_checkpoint(output, model, step);
  }
  restore(model, best);
  return result;
}

std::vector<Prediction> predict(const Model& model, std::span<const text::Example> rows, std::size_t batch_size) {
  const auto* cls = dynamic_cast<const targets::SentenceTarget*>(model.targets().find(TargetKind::kCls));
  const auto* tag = dynamic_cast<const targets::TagTarget*>(model.targets().find(TargetKind::kTag));
  if (!cls && !tag) throw ConfigError("model has no classification or tagging head");
  std::vector<Prediction> out;
  out.reserve(rows.size());
  const Context ctx{};
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const auto chunk = rows.subspan(start, std::min(batch_size, rows.size() - start));
    const text::Batch batch = text::collate(chunk);
    const Tensor mask = batch.pad_mask();
    const Tensor hidden = model.encode(batch, ctx);
    if (cls) {
      const Tensor probs = softmax(cls->logits(hidden, mask), -1);
      const std::size_t C = probs.dim(1);
      for (std::size_t b = 0; b < chunk.size(); ++b) {
        Prediction p;
        p.probs.assign(probs.data().begin() + b * C, probs.data().begin() + (b + 1) * C);
        p.label = static_cast<int>(argmax(p.probs));
        out.push_back(std::move(p));
      }
    } else {
      const Tensor logits = tag->logits(hidden);
      const std::size_t T = logits.dim(1), C = logits.dim(2);
      for (std::size_t b = 0; b < chunk.size(); ++b) {
        Prediction p;
        const std::size_t n = chunk[b].tokens.size();
        for (std::size_t t = 1; t + 1 < n; ++t) {
          p.tags.push_back(static_cast<int>(argmax(logits.data().subspan((b * T + t) * C, C))));
        }
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

Metrics evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  Metrics m;
  m.rows = data.rows.size();
  if (data.rows.empty()) return m;
  const auto preds = predict(model, data.rows, batch_size);
  if (data.kind != TaskKind::kNer) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i].label == data.rows[i].class_label;
    m.accuracy = static_cast<double>(hits) / static_cast<double>(preds.size());
    return m;
  }
  m.tagging = true;
  const auto& labels = model.spec().labels;
  std::vector<std::vector<std::string>> gold(preds.size()), guess(preds.size());
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& row = data.rows[i];
    for (std::size_t t = 1; t + 1 < row.tokens.size(); ++t) {
      const int g = row.tag_labels.at(t);
      const int p = preds[i].tags[t - 1];
      if (g < 0 || static_cast<std::size_t>(g) >= labels.size()) throw DataError("tag id outside the model's labels");
      gold[i].push_back(labels[g]);
      guess[i].push_back(labels[p]);
      hits += g == p;
      ++total;
    }
  }
  m.accuracy = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  m.entities = entity_score(gold, guess);
  return m;
}

void predict_lines(const Model& model, const text::Vocabulary& vocab, std::span<const std::string> lines,
                   std::ostream& out, std::ostream& warn) {
  const auto& spec = model.spec();
  if (spec.task.empty()) throw ConfigError("model was not fine-tuned on a task; nothing to predict");
  const TaskKind kind = parse_task_kind(spec.task);
  const std::size_t T = spec.max_length;

  std::vector<text::Example> rows;
  std::vector<std::size_t> words;  // ner: input tokens per line
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool cut = false;
    if (kind == TaskKind::kNer) {
      const auto tokens = text::tokenize(line, text::TokenizeMode::kSpace);
      const std::size_t keep = std::min(tokens.size(), T - 2);
      cut = keep < tokens.size();
      rows.push_back(text::make_single(vocab.encode(std::span(tokens).first(keep)), T));
      words.push_back(tokens.size());
    } else if (kind == TaskKind::kPair) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError("input line " + std::to_string(i + 1) + ": expected textA\\ttextB");
      const auto a = vocab.encode(text::tokenize(line.substr(0, tab), spec.tokenize));
      const auto b = vocab.encode(text::tokenize(line.substr(tab + 1), spec.tokenize));
      cut = a.size() + b.size() + 3 > T;
      rows.push_back(text::make_pair(a, b, T));
    } else {
      const auto a = vocab.encode(text::tokenize(line, spec.tokenize));
      cut = a.size() + 2 > T;
      rows.push_back(text::make_single(a, T));
    }
    if (cut) warn << "warning: input line " << (i + 1) << " exceeds " << T << " positions; truncated\n";
  }

  const auto preds = predict(model, rows);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    if (kind == TaskKind::kNer) {
      for (std::size_t t = 0; t < words[i]; ++t) {
        out << (t ? " " : "") << (t < p.tags.size() ? spec.labels.at(p.tags[t]) : std::string("O"));
      }
    } else {
      out << spec.labels.at(p.label) << '\t' << p.probs[p.label] << '\t';
      for (std::size_t c = 0; c < p.probs.size(); ++c) out << (c ? " " : "") << p.probs[c];
    }
    out << '\n';
  }
}

}  // namespace uer::downstream
