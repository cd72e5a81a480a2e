#include "uer/pipeline/model.hpp"

#include <sstream>

#include "uer/error.hpp"
#include "uer/text/subword.hpp"

namespace uer::pipeline {

namespace {

using layers::CombineMode;
using layers::EmbeddingKind;
using layers::Pooling;
using layers::SubencoderKind;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

std::string join_commas(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

EmbeddingKind parse_embedding(const std::string& s) {
  if (s == "bert") return EmbeddingKind::kBert;
  if (s == "plain") return EmbeddingKind::kPlain;
  throw ConfigError("unknown embedding '" + s + "' (expected plain or bert)");
}

encoders::EncoderConfig parse_encoder(const Section& s, const Section& root, std::size_t hidden, double dropout) {
  const std::string kind = get_string(s, "kind", "");
  if (kind.empty()) throw ConfigError("[encoder] section without kind");
  auto c = encoders::parse_encoder_name(kind);
  c.hidden = get_size(s, "hidden", hidden);
  c.layers = get_size(s, "layers", get_size(root, "layers", 1));
  c.heads = get_size(s, "heads", get_size(root, "heads", c.heads));
  c.feedforward = get_size(s, "feedforward", get_size(root, "feedforward", 0));
  c.kernel = get_size(s, "kernel", c.kernel);
  c.bidirectional = get_bool(s, "bidirectional", false);
  c.dropout = get_double(s, "dropout", get_double(root, "encoder_dropout", dropout));
  const std::string mask = get_string(s, "mask", "");
  if (mask == "causal") {
    c.mask = encoders::MaskMode::kCausal;
  } else if (mask == "bidirectional") {
    c.mask = encoders::MaskMode::kBidirectional;
  } else if (!mask.empty()) {
    throw ConfigError("encoder mask must be causal or bidirectional, got '" + mask + "'");
  }
  return c;
}

Section encoder_section(const encoders::EncoderConfig& c) {
  return {
      {"kind", std::string(encoders::to_string(c.kind))},
      {"layers", std::to_string(c.layers)},
      {"hidden", std::to_string(c.hidden)},
      {"heads", std::to_string(c.heads)},
      {"feedforward", std::to_string(c.feedforward)},
      {"kernel", std::to_string(c.kernel)},
      {"mask", c.mask == encoders::MaskMode::kCausal ? "causal" : "bidirectional"},
      {"bidirectional", c.bidirectional ? "true" : "false"},
      {"dropout", format_double(c.dropout)},
  };
}

layers::SubencoderConfig parse_subencoder(const std::string& kind, const Section& s, std::size_t hidden) {
  layers::SubencoderConfig c;
  if (kind == "rnn") {
    c.kind = SubencoderKind::kRnn;
  } else if (kind == "cnn") {
    c.kind = SubencoderKind::kCnn;
  } else {
    throw ConfigError("unknown subencoder '" + kind + "' (expected none, rnn or cnn)");
  }
  c.subword_vocab = get_size(s, "units", 0);
  c.embedding_width = get_size(s, "embedding_width", c.embedding_width);
  c.hidden = get_size(s, "hidden", hidden);
  const std::string pooling = get_string(s, "pooling", "mean");
  if (pooling != "mean" && pooling != "max") throw ConfigError("subencoder pooling must be mean or max");
  c.pooling = pooling == "max" ? Pooling::kMax : Pooling::kMean;
  const std::string combine = get_string(s, "combine", "sum");
  if (combine != "sum" && combine != "concat-project") {
    throw ConfigError("subencoder combine must be sum or concat-project");
  }
  c.combine = combine == "sum" ? CombineMode::kSum : CombineMode::kConcatProject;
  const std::string cell = get_string(s, "cell", "gru");
  if (cell != "gru" && cell != "lstm") throw ConfigError("subencoder cell must be gru or lstm");
  c.cell = cell == "gru" ? layers::CellKind::kGru : layers::CellKind::kLstm;
  c.kernel = get_size(s, "kernel", c.kernel);
  return c;
}

}  // namespace

const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys = {
      "embedding", "hidden",  "seq_length", "dropout",  "adapters",      "tokenize", "target",
      "classes",   "tie_decoder_output",    "seed",     "vocab",         "vocab_size", "vocab_hash",
      "task",      "labels",  "subencoder", "subword_table", "encoder",  "layers",   "heads",
      "feedforward", "encoder_dropout",
  };
  return keys;
}

const std::vector<std::string>& encoder_keys() {
  static const std::vector<std::string> keys = {"kind",   "layers", "hidden",        "heads",  "feedforward",
                                                "kernel", "mask",   "bidirectional", "dropout"};
  return keys;
}

const std::vector<std::string>& subencoder_keys() {
  static const std::vector<std::string> keys = {"kind",    "units", "embedding_width", "hidden",
                                                "pooling", "combine", "cell",          "kernel"};
  return keys;
}

ModelSpec ModelSpec::from_config(const ConfigFile& cfg) {
  const Section& r = cfg.root;
  ModelSpec spec;
  spec.embedding = parse_embedding(get_string(r, "embedding", "bert"));
  spec.hidden = get_size(r, "hidden", spec.hidden);
  spec.max_length = get_size(r, "seq_length", spec.max_length);
  spec.dropout = get_double(r, "dropout", spec.dropout);
  spec.adapters = get_bool(r, "adapters", spec.adapters);
  spec.tokenize = text::parse_tokenize_mode(get_string(r, "tokenize", "space"));
  spec.targets = targets::parse_target_spec(get_string(r, "target", "bert"));
  spec.targets.classes = get_size(r, "classes", spec.targets.classes);
  spec.targets.tie_decoder_output = get_bool(r, "tie_decoder_output", false);
  spec.seed = get_u64(r, "seed", spec.seed);
  spec.vocab_path = get_string(r, "vocab", "");
  spec.vocab_size = get_size(r, "vocab_size", 0);
  spec.vocab_hash = get_u64(r, "vocab_hash", 0);
  spec.task = get_string(r, "task", "");
  spec.labels = split_commas(get_string(r, "labels", ""));
  spec.subword_table = get_string(r, "subword_table", "");

  for (const auto& s : cfg.encoders) check_keys(s, encoder_keys(), "[encoder]");
  if (cfg.subencoder) check_keys(*cfg.subencoder, subencoder_keys(), "[subencoder]");

  const std::string names = get_string(r, "encoder", "");
  if (!names.empty() && !cfg.encoders.empty()) {
    throw ConfigError("give the encoder stack either as 'encoder = ...' or as [encoder] sections, not both");
  }
  if (!names.empty()) {
    for (const auto& name : split_commas(names)) {
      spec.encoders.push_back(parse_encoder({{"kind", name}}, r, spec.hidden, spec.dropout));
    }
  }
  for (const auto& s : cfg.encoders) spec.encoders.push_back(parse_encoder(s, r, spec.hidden, spec.dropout));
  if (spec.encoders.empty()) {
    spec.encoders.push_back(parse_encoder({{"kind", "transformer"}}, r, spec.hidden, spec.dropout));
  }

  std::string sub_kind = get_string(r, "subencoder", "");
  if (sub_kind.empty() && cfg.subencoder) sub_kind = get_string(*cfg.subencoder, "kind", "cnn");
  if (!sub_kind.empty() && sub_kind != "none") {
    spec.subencoder = parse_subencoder(sub_kind, cfg.subencoder ? *cfg.subencoder : Section{}, spec.hidden);
  }
  return spec;
}

ConfigFile ModelSpec::to_config() const {
  ConfigFile cfg;
  Section& r = cfg.root;
  r["embedding"] = embedding == EmbeddingKind::kBert ? "bert" : "plain";
  r["hidden"] = std::to_string(hidden);
  r["seq_length"] = std::to_string(max_length);
  r["dropout"] = format_double(dropout);
  r["adapters"] = adapters ? "true" : "false";
  r["tokenize"] = std::string(text::to_string(tokenize));
  r["target"] = targets::format_target_spec(targets);
  r["classes"] = std::to_string(targets.classes);
  r["tie_decoder_output"] = targets.tie_decoder_output ? "true" : "false";
  r["seed"] = std::to_string(seed);
  if (!vocab_path.empty()) r["vocab"] = vocab_path;
  r["vocab_size"] = std::to_string(vocab_size);
  r["vocab_hash"] = std::to_string(vocab_hash);
  if (!task.empty()) r["task"] = task;
  if (!labels.empty()) r["labels"] = join_commas(labels);
  if (!subword_table.empty()) r["subword_table"] = subword_table;
  for (const auto& e : encoders) cfg.encoders.push_back(encoder_section(e));
  if (subencoder) {
    const auto& s = *subencoder;
    cfg.subencoder = Section{
        {"kind", s.kind == SubencoderKind::kRnn ? "rnn" : "cnn"},
        {"units", std::to_string(s.subword_vocab)},
        {"embedding_width", std::to_string(s.embedding_width)},
        {"hidden", std::to_string(s.hidden)},
        {"pooling", s.pooling == Pooling::kMax ? "max" : "mean"},
        {"combine", s.combine == CombineMode::kSum ? "sum" : "concat-project"},
        {"cell", s.cell == layers::CellKind::kGru ? "gru" : "lstm"},
        {"kernel", std::to_string(s.kernel)},
    };
  }
  return cfg;
}

void ModelSpec::validate() const {
  if (hidden == 0) throw ConfigError("hidden width must be positive");
  if (max_length < 3) throw ConfigError("seq_length must be at least 3 ([CLS] token [SEP])");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
  if (encoders.empty()) throw ConfigError("the encoder stack is empty");
  if (targets.entries.empty()) throw ConfigError("no targets given");

  std::size_t width = hidden;
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    const auto& e = encoders[i];
    e.validate();
    if (!(e.dropout >= 0 && e.dropout < 1)) throw ConfigError("encoder dropout must lie in [0, 1)");
    if (e.kind == encoders::EncoderKind::kTransformer && width != e.hidden && !adapters) {
      throw ConfigError("encoder " + std::to_string(i) + " (transformer) receives width " + std::to_string(width) +
                        " but has hidden " + std::to_string(e.hidden) + "; enable adapters or match the widths");
    }
    width = e.hidden;
  }

  if (targets.has(targets::TargetKind::kLm)) {
    for (std::size_t i = 0; i < encoders.size(); ++i) {
      if (!encoders[i].causal()) {
        throw ConfigError("lm target with bidirectional encoder " + std::to_string(i) + " (" +
                          encoders::encoder_name(encoders[i]) +
                          ") would see the tokens it predicts; use lstm, gru or a causal encoder");
      }
    }
  }
  if (targets.bert && embedding != EmbeddingKind::kBert) {
    throw ConfigError("bert target needs the bert embedding (segment ids for next-sentence prediction)");
  }
  if ((targets.has(targets::TargetKind::kCls)) && targets.classes < 2) {
    throw ConfigError("cls target needs at least 2 classes");
  }
  if (targets.has(targets::TargetKind::kTag) && targets.classes < 1) {
    throw ConfigError("tag target needs at least 1 label");
  }
  if (subencoder) {
    const auto& s = *subencoder;
    if (s.hidden == 0 || s.embedding_width == 0) throw ConfigError("subencoder widths must be positive");
    if (s.combine == CombineMode::kSum && s.hidden != hidden) {
      throw ConfigError("subencoder sum combination needs subencoder hidden " + std::to_string(s.hidden) +
                        " to equal hidden " + std::to_string(hidden));
    }
    if (s.kind == SubencoderKind::kCnn && s.kernel % 2 == 0) throw ConfigError("subencoder kernel must be odd");
  }
}

ModelSpec recipe(std::string_view name) {
  ModelSpec spec;
  encoders::EncoderConfig e;
  e.layers = 2;
  e.hidden = spec.hidden;
  if (name == "bert") {
    spec.targets = targets::parse_target_spec("bert");
  } else if (name == "gpt") {
    e.mask = encoders::MaskMode::kCausal;
    spec.targets = targets::parse_target_spec("lm");
  } else if (name == "quick-thoughts") {
    spec.embedding = EmbeddingKind::kPlain;
    e.kind = encoders::EncoderKind::kGru;
    e.layers = 1;
    spec.targets = targets::parse_target_spec("nsp");
  } else if (name == "infersent") {
    spec.embedding = EmbeddingKind::kPlain;
    e.kind = encoders::EncoderKind::kLstm;
    e.layers = 1;
    spec.targets = targets::parse_target_spec("cls");
    spec.targets.classes = 3;
  } else {
    throw ConfigError("unknown recipe '" + std::string(name) + "'");
  }
  spec.encoders = {e};
  return spec;
}

Model::Model(const ModelSpec& spec, const text::Vocabulary& vocab) : spec_(spec) {
  spec_.validate();
  if (spec_.vocab_size != 0 && spec_.vocab_size != vocab.size()) {
    throw DataError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                    std::to_string(spec_.vocab_size));
  }
  spec_.vocab_size = vocab.size();
  spec_.vocab_hash = vocab.hash();

  Init init(spec_.seed);
  layers::EmbeddingConfig ec{spec_.embedding, vocab.size(), spec_.hidden, spec_.max_length, spec_.dropout};
  embedding_ = &add_module("embedding", std::make_unique<layers::Embedding>(ec, init));
  if (spec_.subencoder) {
    auto entries = spec_.subword_table.empty() ? std::unordered_map<std::string, std::vector<std::string>>{}
                                               : text::SubwordTable::load_entries(spec_.subword_table);
    auto table = std::make_shared<const text::SubwordTable>(text::SubwordTable::build(vocab, std::move(entries)));
    subencoder_ =
        &add_module("subencoder", std::make_unique<layers::Subencoder>(*spec_.subencoder, table, spec_.hidden, init));
  }
  encoder_ = &add_module("encoder",
                         std::make_unique<encoders::EncoderStack>(spec_.encoders, spec_.hidden, spec_.adapters, init));
  targets_ = &add_module("target", std::make_unique<targets::TargetSet>(spec_.targets, encoder_->output_width(),
                                                                       vocab.size(), encoder_->uses_cls_position(),
                                                                       init));
}

Tensor Model::encode(const text::Batch& batch, const Context& ctx) const {
  Tensor x = embedding_->forward(batch, ctx);
  if (subencoder_) x = subencoder_->combine(x, subencoder_->forward(batch));
  return encoder_->forward(x, batch.pad_mask(), ctx);
}

targets::TargetOutput Model::forward(const text::Batch& batch, const Context& ctx) const {
  return targets_->forward(encode(batch, ctx), batch.pad_mask(), batch, ctx);
}

void Model::freeze_except(const std::string& prefix) {
  for (auto& p : named_parameters()) {
    if (p.name.rfind(prefix, 0) != 0) p.value.set_requires_grad(false);
  }
}

std::unique_ptr<Model> assemble(const ModelSpec& spec, const text::Vocabulary& vocab) {
  return std::make_unique<Model>(spec, vocab);
}

}  // namespace uer::pipeline
