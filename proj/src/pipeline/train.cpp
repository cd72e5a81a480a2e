#include "uer/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "uer/error.hpp"
#include "uer/pipeline/checkpoint.hpp"

namespace uer::pipeline {

using targets::TargetKind;

ExampleSource::ExampleSource(std::vector<text::Example> examples, std::size_t vocab_size, bool mask,
                             text::MaskingConfig masking)
    : examples_(std::move(examples)), vocab_size_(vocab_size), mask_(mask), masking_(masking) {
  if (examples_.empty()) throw DataError("no training examples");
  order_.resize(examples_.size());
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = order_.size();  // shuffle on first draw
}

text::Batch ExampleSource::next(std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<text::Example> rows;
  rows.reserve(batch_size);
  while (rows.size() < batch_size) {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    rows.push_back(examples_[order_[cursor_++]]);
    if (mask_) text::mask_example(rows.back(), vocab_size_, masking_, rng);
  }
  return text::collate(rows);
}

DocumentSource::DocumentSource(std::vector<text::Document> documents, std::size_t vocab_size, bool mask,
                               const TrainConfig& cfg, std::size_t max_length)
    : stream_(std::move(documents), cfg.negative_rate, cfg.seed, max_length),
      vocab_size_(vocab_size),
      mask_(mask),
      masking_(cfg.masking) {}

text::Batch DocumentSource::next(std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<text::Example> rows;
  rows.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    rows.push_back(stream_.next());
    if (mask_) text::mask_example(rows.back(), vocab_size_, masking_, rng);
  }
  return text::collate(rows);
}

namespace {

std::vector<std::string> non_blank(std::span<const std::string> lines) {
  std::vector<std::string> out;
  for (const auto& l : lines) {
    if (l.find_first_not_of(" \t\r") != std::string::npos) out.push_back(l);
  }
  return out;
}

std::string targets_str(const ModelSpec& spec) { return targets::format_target_spec(spec.targets); }

}  // namespace

std::unique_ptr<BatchSource> make_batch_source(const ModelSpec& spec, std::span<const std::string> lines,
                                               const text::Vocabulary& vocab, const TrainConfig& cfg) {
  const auto& t = spec.targets;
  const bool mlm = t.has(TargetKind::kMlm);
  std::vector<TargetKind> others;
  for (const auto& e : t.entries) {
    if (e.kind != TargetKind::kMlm) others.push_back(e.kind);
  }
  if (others.size() > 1) {
    throw ConfigError("targets " + targets_str(spec) + " need different corpus formats; train them in separate stages");
  }
  const std::size_t V = vocab.size();
  const std::size_t T = spec.max_length;

  if (others.empty()) {
    std::vector<text::Example> rows;
    for (const auto& line : non_blank(lines)) {
      const auto ids = vocab.encode(text::tokenize(line, spec.tokenize));
      rows.push_back(text::make_single(ids, T));
    }
    return std::make_unique<ExampleSource>(std::move(rows), V, true, cfg.masking);
  }

  const auto rows = non_blank(lines);
  switch (others.front()) {
    case TargetKind::kNsp: {
      auto docs = text::encode_documents(text::split_documents(lines), vocab, spec.tokenize);
      std::size_t usable = 0;
      for (const auto& d : docs) usable += d.size() >= 2;
      if (usable == 0) throw DataError("nsp needs documents with at least two sentences (blank lines separate documents)");
      if (docs.size() < 2) throw DataError("nsp needs at least two documents to draw negatives from");
      return std::make_unique<DocumentSource>(std::move(docs), V, mlm, cfg, T);
    }
    case TargetKind::kLm:
      if (mlm) throw ConfigError("lm and mlm read the same tokens differently; train them in separate stages");
      return std::make_unique<ExampleSource>(text::make_lm_examples(rows, vocab, spec.tokenize, T), V, false);
    case TargetKind::kAe:
      return std::make_unique<ExampleSource>(text::make_ae_examples(rows, vocab, spec.tokenize, T), V, mlm,
                                             cfg.masking);
    case TargetKind::kNmt:
      return std::make_unique<ExampleSource>(text::make_nmt_examples(rows, vocab, spec.tokenize, T), V, mlm,
                                             cfg.masking);
    case TargetKind::kCls:
      return std::make_unique<ExampleSource>(
          text::make_cls_examples(rows, vocab, spec.tokenize, t.classes, T), V, mlm, cfg.masking);
    case TargetKind::kTag:
      throw ConfigError("the tag head is trained through fine-tuning (task ner)");
    case TargetKind::kMlm:
      break;
  }
  throw ConfigError("unsupported targets " + targets_str(spec));
}

namespace {

std::string format_value(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

}  // namespace

TrainResult train(Model& model, BatchSource& source, const TrainConfig& cfg, std::ostream& log,
                  const AdamState* resume, std::uint64_t first_step) {
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(cfg.lr >= 0) || !std::isfinite(cfg.lr)) throw ConfigError("learning rate must be finite and >= 0");

  std::vector<Tensor> params;
  for (auto& p : model.parameters()) {
    if (p.requires_grad()) params.push_back(p);
  }
  AdamHyper hyper{cfg.lr};
  TrainResult result;
  result.optimizer = resume ? *resume : AdamState::for_parameters(params, hyper);
  if (result.optimizer.m.size() != params.size()) throw ContractError("optimizer state does not match the model");

  std::ofstream metrics;
  if (!cfg.metrics.empty()) {
    if (cfg.metrics.has_parent_path()) std::filesystem::create_directories(cfg.metrics.parent_path());
    metrics.open(cfg.metrics, std::ios::app);
    if (!metrics) throw DataError("cannot write metrics file " + cfg.metrics.string());
  }

  // Separate streams so the batch order does not depend on dropout draws.
  std::seed_seq data_seed{cfg.seed, std::uint64_t{0x0da7a}};
  std::seed_seq drop_seed{cfg.seed, std::uint64_t{0xd209}};
  std::mt19937_64 data_rng(data_seed);
  std::mt19937_64 dropout_rng(drop_seed);
  const Context ctx{true, &dropout_rng};

  const bool trains_all = params.size() == model.parameters().size();
  auto write_checkpoint = [&](std::uint64_t step) {
    if (cfg.output.empty()) return;
    save_checkpoint(cfg.output, model, step, trains_all ? &result.optimizer : nullptr);
  };

  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const std::uint64_t step = first_step + s + 1;
    const text::Batch batch = source.next(cfg.batch_size, data_rng);
    for (auto& p : params) p.zero_grad();
    targets::TargetOutput out;
    try {
      Tape tape;
      out = model.forward(batch, ctx);
      const double loss = out.loss.item();
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss " + format_value(loss) + " at step " + std::to_string(step) +
                           " (lr " + format_value(warmup_lr(cfg.lr, step - 1, cfg.warmup)) + ", batch " +
                           std::to_string(s) + ")");
      }
      tape.backward(out.loss);
    } catch (const EmptyLossError&) {
      ++result.skipped;
      continue;
    }
    if (cfg.clip > 0) clip_grad_norm(params, cfg.clip);
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (auto& p : params) grads.push_back(p.grad_or_zeros());
    result.optimizer.hyper.lr = warmup_lr(cfg.lr, result.optimizer.t, cfg.warmup);
    adam_step(params, grads, result.optimizer);
    const double loss = out.loss.item();
    result.losses.push_back(loss);
    ++result.steps;

    const bool last = s + 1 == cfg.steps;
    if (cfg.log_every && (step % cfg.log_every == 0 || last)) {
      std::ostringstream line;
      nlohmann::json record{{"step", step}, {"loss", loss}, {"lr", result.optimizer.hyper.lr}};
      line << "step=" << step << " loss=" << format_value(loss);
      for (const auto& [name, m] : out.metrics) {
        if (m.empty) continue;
        line << ' ' << name << "_loss=" << format_value(m.loss);
        record[name + "_loss"] = m.loss;
        if (m.counted) {
          const double acc = static_cast<double>(m.correct) / static_cast<double>(m.counted);
          line << ' ' << name << "_acc=" << format_value(acc);
          record[name + "_acc"] = acc;
        }
      }
      if (!cfg.quiet) log << line.str() << '\n';
      if (metrics.is_open()) metrics << record.dump() << '\n';
    }
    if (cfg.checkpoint_every && step % cfg.checkpoint_every == 0 && !last) write_checkpoint(step);
  }
  write_checkpoint(first_step + cfg.steps);
  return result;
}

SmoothedLoss smoothed_loss(std::span<const double> losses, std::size_t window) {
  if (losses.empty()) throw ContractError("no losses to smooth");
  window = std::max<std::size_t>(1, std::min(window, losses.size()));
  const auto mean = [&](std::size_t begin) {
    return std::accumulate(losses.begin() + begin, losses.begin() + begin + window, 0.0) / window;
  };
  return {mean(0), mean(losses.size() - window)};
}

}  // namespace uer::pipeline
