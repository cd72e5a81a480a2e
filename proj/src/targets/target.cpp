#include "uer/targets/target.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "uer/error.hpp"
#include "uer/layers/attention.hpp"

namespace uer::targets {

namespace {

constexpr std::pair<TargetKind, std::string_view> kNames[] = {
    {TargetKind::kLm, "lm"},   {TargetKind::kMlm, "mlm"}, {TargetKind::kNsp, "nsp"}, {TargetKind::kAe, "ae"},
    {TargetKind::kNmt, "nmt"}, {TargetKind::kCls, "cls"}, {TargetKind::kTag, "tag"},
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void require_labels(const std::vector<int>& labels, std::string_view what) {
  if (labels.empty()) throw EmptyLossError(std::string("batch carries no ") + std::string(what) + " labels");
}

void check_label_range(std::span<const int> labels, std::size_t classes, std::string_view what) {
  for (int label : labels) {
    if (label == kIgnoreId) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError(std::string(what) + " label " + std::to_string(label) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
}

TargetResult finish(const Tensor& logits2d, std::span<const int> labels) {
  TargetResult result;
  result.loss = cross_entropy(logits2d, labels);
  std::tie(result.correct, result.counted) = count_correct(logits2d, labels);
  return result;
}

Tensor flatten_rows(const Tensor& x) { return reshape(x, {x.numel() / x.dim(-1), x.dim(-1)}); }

}  // namespace

std::string_view to_string(TargetKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "?";
}

TargetKind parse_target_kind(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown target '" + std::string(name) + "'");
}

bool TargetSpec::has(TargetKind kind) const {
  return std::any_of(entries.begin(), entries.end(), [&](const TargetEntry& e) { return e.kind == kind; });
}

double TargetSpec::weight(TargetKind kind) const {
  for (const auto& e : entries) {
    if (e.kind == kind) return e.weight;
  }
  return 0;
}

TargetSpec parse_target_spec(std::string_view text) {
  TargetSpec spec;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view item = trim(text.substr(start, comma - start));
    start = comma + 1;
    if (item.empty()) throw ConfigError("empty entry in target list '" + std::string(text) + "'");

    double weight = 1.0;
    std::string_view name = item;
    if (auto colon = item.find(':'); colon != std::string_view::npos) {
      name = trim(item.substr(0, colon));
      std::string_view w = trim(item.substr(colon + 1));
      auto [end, ec] = std::from_chars(w.data(), w.data() + w.size(), weight);
      if (ec != std::errc() || end != w.data() + w.size()) {
        throw ConfigError("bad target weight '" + std::string(w) + "'");
      }
    }
    if (!(weight > 0) || !std::isfinite(weight)) {
      throw ConfigError("target weight must be positive, got " + std::to_string(weight));
    }

    std::vector<TargetKind> kinds;
    if (name == "bert") {
      kinds = {TargetKind::kMlm, TargetKind::kNsp};
      spec.bert = true;
    } else {
      kinds = {parse_target_kind(name)};
    }
    for (TargetKind k : kinds) {
      if (spec.has(k)) throw ConfigError("target '" + std::string(to_string(k)) + "' listed twice");
      spec.entries.push_back({k, weight});
    }
    if (comma == text.size()) break;
  }
  if (spec.entries.empty()) throw ConfigError("no targets given");
  return spec;
}

namespace {

// Shortest text that parses back to the same double.
std::string format_weight(double w) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, w);
  return std::string(buf, end);
}

}  // namespace

std::string format_target_spec(const TargetSpec& spec) {
  std::ostringstream out;
  const auto& e = spec.entries;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (i) out << ',';
    if (spec.bert && i + 1 < e.size() && e[i].kind == TargetKind::kMlm && e[i + 1].kind == TargetKind::kNsp &&
        e[i].weight == e[i + 1].weight) {
      out << "bert:" << format_weight(e[i].weight);
      ++i;
      continue;
    }
    out << to_string(e[i].kind) << ':' << format_weight(e[i].weight);
  }
  return out.str();
}

Tensor combine(std::span<const WeightedLoss> parts) {
  Tensor total;
  for (const auto& part : parts) {
    if (!part.loss.defined()) continue;
    Tensor weighted = scale(part.loss, part.weight);
    total = total.defined() ? add(total, weighted) : weighted;
  }
  if (!total.defined()) throw EmptyLossError("every target is empty for this batch");
  return total;
}

std::pair<std::size_t, std::size_t> count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw ShapeError("label count does not match logits rows");
  auto data = logits.data();
  std::size_t correct = 0, counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == kIgnoreId) continue;
    auto row = data.subspan(i * c, c);
    auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
    ++counted;
  }
  return {correct, counted};
}

Tensor pool(const Tensor& hidden, const Tensor& mask, bool cls_position) {
  return cls_position ? select(hidden, 1, 0) : masked_max(hidden, mask);
}

// lm

LmTarget::LmTarget(std::size_t hidden, std::size_t vocab, Init& init) : Target(TargetKind::kLm) {
  output_ = &add_module("output", std::make_unique<layers::Linear>(hidden, vocab, init));
}

TargetResult LmTarget::compute(const Tensor& hidden, const Tensor&, const text::Batch& batch,
                               const Context&) const {
  require_labels(batch.lm_labels, "lm");
  return finish(flatten_rows(logits(hidden)), batch.lm_labels);
}

// mlm

MlmTarget::MlmTarget(std::size_t hidden, std::size_t vocab, Init& init) : Target(TargetKind::kMlm) {
  dense_ = &add_module("dense", std::make_unique<layers::Linear>(hidden, hidden, init));
  norm_ = &add_module("norm", std::make_unique<layers::LayerNorm>(hidden));
  output_ = &add_module("output", std::make_unique<layers::Linear>(hidden, vocab, init));
}

Tensor MlmTarget::logits(const Tensor& rows) const {
  return output_->forward(norm_->forward(gelu(dense_->forward(rows))));
}

TargetResult MlmTarget::compute(const Tensor& hidden, const Tensor&, const text::Batch& batch,
                                const Context&) const {
  require_labels(batch.mlm_labels, "mlm");
  const std::size_t h = hidden.dim(-1);
  std::vector<std::int64_t> index;
  std::vector<int> labels;
  for (std::size_t p = 0; p < batch.mlm_labels.size(); ++p) {
    if (batch.mlm_labels[p] == kIgnoreId) continue;
    labels.push_back(batch.mlm_labels[p]);
    for (std::size_t j = 0; j < h; ++j) index.push_back(static_cast<std::int64_t>(p * h + j));
  }
  if (labels.empty()) throw EmptyLossError("no masked positions in batch");
  Tensor rows = gather(hidden, {labels.size(), h}, std::move(index));
  return finish(logits(rows), labels);
}

// nsp / cls

SentenceTarget::SentenceTarget(TargetKind kind, std::size_t hidden, std::size_t classes, bool cls_position,
                               Init& init)
    : Target(kind), classes_(classes), cls_position_(cls_position) {
  if (classes < 2) throw ConfigError("a sentence classifier needs at least 2 classes");
  dense_ = &add_module("dense", std::make_unique<layers::Linear>(hidden, hidden, init));
  output_ = &add_module("output", std::make_unique<layers::Linear>(hidden, classes, init));
}

Tensor SentenceTarget::logits(const Tensor& hidden, const Tensor& mask) const {
  return output_->forward(tanh(dense_->forward(pool(hidden, mask, cls_position_))));
}

TargetResult SentenceTarget::compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                                     const Context&) const {
  const auto& labels = kind() == TargetKind::kNsp ? batch.pair_labels : batch.class_labels;
  require_labels(labels, to_string(kind()));
  check_label_range(labels, classes_, to_string(kind()));
  return finish(logits(hidden, mask), labels);
}

// tag

TagTarget::TagTarget(std::size_t hidden, std::size_t tags, Init& init) : Target(TargetKind::kTag) {
  if (tags < 1) throw ConfigError("tagger needs at least one tag");
  output_ = &add_module("output", std::make_unique<layers::Linear>(hidden, tags, init));
}

TargetResult TagTarget::compute(const Tensor& hidden, const Tensor&, const text::Batch& batch,
                                const Context&) const {
  require_labels(batch.tag_labels, "tag");
  check_label_range(batch.tag_labels, tags(), "tag");
  return finish(flatten_rows(logits(hidden)), batch.tag_labels);
}

// ae / nmt

Seq2SeqTarget::Seq2SeqTarget(TargetKind kind, std::size_t hidden, std::size_t vocab, bool tie_output,
                             Init& init)
    : Target(kind), vocab_(vocab) {
  embedding_ = add_parameter("embedding", init.normal({vocab, hidden}));
  embedding_norm_ = &add_module("embedding_norm", std::make_unique<layers::LayerNorm>(hidden));
  cell_ = &add_module("decoder", std::make_unique<layers::RecurrentCell>(layers::CellKind::kGru, hidden,
                                                                        hidden, init));
  combine_ = &add_module("combine", std::make_unique<layers::Linear>(2 * hidden, hidden, init));
  if (tie_output) {
    output_bias_ = add_parameter("output_bias", Init::zeros({vocab}));
  } else {
    output_ = &add_module("output", std::make_unique<layers::Linear>(hidden, vocab, init));
  }
}

Tensor Seq2SeqTarget::attend_and_project(const Tensor& states, const Tensor& hidden, const Tensor& mask) const {
  const std::size_t b = states.dim(0), tq = states.dim(1), tk = hidden.dim(1);
  Tensor bias = reshape(layers::attention_bias(mask, tq, false), {b, tq, tk});
  Tensor context = layers::scaled_dot_attention(states, hidden, hidden, bias);
  Tensor mixed = combine_->forward(concat({states, context}, -1));
  if (output_) return output_->forward(mixed);
  return add(matmul(mixed, transpose_last(embedding_)), output_bias_);
}

Tensor Seq2SeqTarget::logits(const Tensor& hidden, const Tensor& mask, std::span<const int> decoder_input,
                             std::size_t decoder_length) const {
  const std::size_t b = hidden.dim(0);
  if (decoder_input.size() != b * decoder_length) throw ShapeError("decoder input does not match batch");
  std::vector<double> dmask(decoder_input.size());
  for (std::size_t i = 0; i < dmask.size(); ++i) dmask[i] = decoder_input[i] != text::kPadId;
  Tensor x = embedding_norm_->forward(embedding(embedding_, decoder_input, {b, decoder_length}, text::kPadId));
  Tensor states = cell_->run(x, Tensor::from({b, decoder_length}, std::move(dmask)), false,
                             masked_mean(hidden, mask));
  return attend_and_project(states, hidden, mask);
}

TargetResult Seq2SeqTarget::compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                                    const Context&) const {
  require_labels(batch.decoder_labels, to_string(kind()));
  Tensor out = logits(hidden, mask, batch.decoder_input, batch.decoder_length);
  return finish(flatten_rows(out), batch.decoder_labels);
}

std::vector<std::vector<int>> Seq2SeqTarget::greedy_decode(const Tensor& hidden, const Tensor& mask,
                                                           std::size_t max_length) const {
  const std::size_t b = hidden.dim(0), h = hidden.dim(-1);
  std::vector<std::vector<int>> out(b);
  std::vector<bool> done(b, false);
  std::vector<int> current(b, text::kClsId);
  layers::RecurrentCell::State state{masked_mean(hidden, mask), {}};
  for (std::size_t step = 0; step < max_length; ++step) {
    Tensor x = embedding_norm_->forward(embedding(embedding_, current, {b}, text::kPadId));
    state = cell_->step(cell_->input_map().forward(x), state);
    Tensor logits = attend_and_project(reshape(state.h, {b, 1, h}), hidden, mask);
    auto data = logits.data();
    bool all_done = true;
    for (std::size_t r = 0; r < b; ++r) {
      auto row = data.subspan(r * vocab_, vocab_);
      int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      current[r] = best;
      if (done[r]) continue;
      if (best == text::kSepId) {
        done[r] = true;
      } else {
        out[r].push_back(best);
      }
      all_done = all_done && done[r];
    }
    if (all_done) break;
  }
  return out;
}

std::unique_ptr<Target> make_target(TargetKind kind, std::size_t hidden, std::size_t vocab,
                                    const TargetSpec& spec, bool cls_position, Init& init) {
  switch (kind) {
    case TargetKind::kLm:
      return std::make_unique<LmTarget>(hidden, vocab, init);
    case TargetKind::kMlm:
      return std::make_unique<MlmTarget>(hidden, vocab, init);
    case TargetKind::kNsp:
      return std::make_unique<SentenceTarget>(kind, hidden, 2, cls_position, init);
    case TargetKind::kCls:
      return std::make_unique<SentenceTarget>(kind, hidden, spec.classes, cls_position, init);
    case TargetKind::kTag:
      return std::make_unique<TagTarget>(hidden, spec.classes, init);
    case TargetKind::kAe:
    case TargetKind::kNmt:
      return std::make_unique<Seq2SeqTarget>(kind, hidden, vocab, spec.tie_decoder_output, init);
  }
  throw ConfigError("unknown target kind");
}

TargetSet::TargetSet(const TargetSpec& spec, std::size_t hidden, std::size_t vocab, bool cls_position,
                     Init& init)
    : spec_(spec) {
  if (spec.entries.empty()) throw ConfigError("no targets given");
  for (const auto& entry : spec.entries) {
    auto head = make_target(entry.kind, hidden, vocab, spec, cls_position, init);
    heads_.push_back(&add_module(std::string(to_string(entry.kind)), std::move(head)));
  }
}

const Target* TargetSet::find(TargetKind kind) const {
  for (const Target* t : heads_) {
    if (t->kind() == kind) return t;
  }
  return nullptr;
}

TargetOutput TargetSet::forward(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                                const Context& ctx) const {
  TargetOutput out;
  std::vector<WeightedLoss> parts;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const std::string name(to_string(heads_[i]->kind()));
    Metric& metric = out.metrics[name];
    TargetResult result;
    try {
      result = heads_[i]->compute(hidden, mask, batch, ctx);
    } catch (const EmptyLossError&) {
      metric.empty = true;
      continue;
    }
    metric.loss = result.loss.item();
    metric.correct = result.correct;
    metric.counted = result.counted;
    parts.push_back({result.loss, spec_.entries[i].weight});
  }
  out.loss = combine(parts);
  return out;
}

}  // namespace uer::targets
