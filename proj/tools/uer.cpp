// Command-line front end: vocab, pretrain, finetune, predict.

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "uer/downstream/finetune.hpp"
#include "uer/error.hpp"
#include "uer/pipeline/checkpoint.hpp"
#include "uer/pipeline/config.hpp"
#include "uer/pipeline/train.hpp"

namespace {

using namespace uer;
using pipeline::ConfigFile;

// Training keys a config file may carry next to the model keys.
const std::vector<std::string> kRunKeys = {"corpus",    "output",  "pretrained", "steps",       "batch_size",
                                           "lr",        "warmup",  "clip",       "log_every",   "checkpoint_every",
                                           "metrics",   "mask_rate", "negative_rate", "train_seed", "recipe"};

struct ModelFlags {
  std::string config;
  std::string recipe;
  std::optional<std::string> subencoder, encoder, target, embedding, tokenize;
  std::optional<std::size_t> seq_length, hidden, layers, heads, classes;
  std::optional<std::uint64_t> seed;
  std::optional<double> dropout;

  void add(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--recipe", recipe, "start from bert, gpt, quick-thoughts or infersent");
    app->add_option("--subencoder", subencoder, "none, rnn or cnn");
    app->add_option("--encoder", encoder, "comma-joined encoder stack, e.g. transformer or gru,transformer");
    app->add_option("--target", target, "comma-joined kind[:weight] list");
    app->add_option("--embedding", embedding, "plain or bert");
    app->add_option("--tokenize", tokenize, "space or char");
    app->add_option("--seq-length", seq_length);
    app->add_option("--hidden", hidden);
    app->add_option("--layers", layers);
    app->add_option("--heads", heads);
    app->add_option("--classes", classes);
    app->add_option("--seed", seed);
    app->add_option("--dropout", dropout);
  }

  bool architecture_given() const {
    return !config.empty() || !recipe.empty() || subencoder || encoder || embedding || tokenize || seq_length ||
           hidden || layers || heads || dropout;
  }

  // Config file, then recipe defaults for keys it leaves out, then flags.
  ConfigFile resolve() const {
    ConfigFile cfg = config.empty() ? ConfigFile{} : ConfigFile::load(config);
    std::vector<std::string> allowed = pipeline::model_keys();
    allowed.insert(allowed.end(), kRunKeys.begin(), kRunKeys.end());
    pipeline::check_keys(cfg.root, allowed, "config " + config);
    std::string name = recipe.empty() ? pipeline::get_string(cfg.root, "recipe", "") : recipe;
    if (!name.empty()) {
      ConfigFile base = pipeline::recipe(name).to_config();
      for (const auto& [k, v] : base.root) cfg.root.emplace(k, v);
      if (cfg.encoders.empty() && !cfg.root.count("encoder")) cfg.encoders = base.encoders;
    }
    auto& r = cfg.root;
    if (encoder) {
      r["encoder"] = *encoder;
      cfg.encoders.clear();
    }
    if (subencoder) r["subencoder"] = *subencoder;
    if (target) r["target"] = *target;
    if (embedding) r["embedding"] = *embedding;
    if (tokenize) r["tokenize"] = *tokenize;
    if (seq_length) r["seq_length"] = std::to_string(*seq_length);
    if (hidden) r["hidden"] = std::to_string(*hidden);
    if (layers) r["layers"] = std::to_string(*layers);
    if (heads) r["heads"] = std::to_string(*heads);
    if (classes) r["classes"] = std::to_string(*classes);
    if (seed) r["seed"] = std::to_string(*seed);
    if (dropout) r["dropout"] = pipeline::format_double(*dropout);
    // Per-section widths and layer counts yield to the command line.
    for (auto& e : cfg.encoders) {
      if (hidden) e["hidden"] = std::to_string(*hidden);
      if (layers) e["layers"] = std::to_string(*layers);
      if (heads) e["heads"] = std::to_string(*heads);
    }
    return cfg;
  }
};

struct TrainFlags {
  std::optional<std::size_t> steps, batch_size, warmup, log_every, checkpoint_every;
  std::optional<double> lr;
  std::optional<std::string> metrics;

  void add(CLI::App* app) {
    app->add_option("--steps", steps);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr);
    app->add_option("--warmup", warmup);
    app->add_option("--log-every", log_every);
    app->add_option("--checkpoint-every", checkpoint_every);
    app->add_option("--metrics", metrics, "per-step JSON lines");
  }

  pipeline::TrainConfig resolve(const pipeline::Section& r, std::uint64_t seed) const {
    using namespace pipeline;
    TrainConfig c;
    c.steps = steps.value_or(get_size(r, "steps", c.steps));
    c.batch_size = batch_size.value_or(get_size(r, "batch_size", c.batch_size));
    c.lr = lr.value_or(get_double(r, "lr", c.lr));
    c.warmup = warmup.value_or(get_size(r, "warmup", c.warmup));
    c.clip = get_double(r, "clip", c.clip);
    c.log_every = log_every.value_or(get_size(r, "log_every", c.log_every));
    c.checkpoint_every = checkpoint_every.value_or(get_size(r, "checkpoint_every", c.checkpoint_every));
    c.metrics = metrics.value_or(get_string(r, "metrics", ""));
    c.masking.rate = get_double(r, "mask_rate", c.masking.rate);
    c.negative_rate = get_double(r, "negative_rate", c.negative_rate);
    c.seed = get_u64(r, "train_seed", seed);
    return c;
  }
};

std::string pick(const std::string& flag, const pipeline::Section& r, const std::string& key, const char* what) {
  std::string v = flag.empty() ? pipeline::get_string(r, key, "") : flag;
  if (v.empty()) throw ConfigError(std::string("missing ") + what + " (--" + key + ")");
  return v;
}

int cmd_vocab(const std::vector<std::string>& corpora, const std::string& output, std::size_t min_count,
              const std::string& tokenize, const std::string& format) {
  std::vector<std::string> lines;
  for (const auto& c : corpora) {
    auto more = text::read_lines(c);
    lines.insert(lines.end(), more.begin(), more.end());
  }
  const auto vocab = text::Vocabulary::build(lines, min_count, text::parse_tokenize_mode(tokenize),
                                             text::parse_corpus_format(format));
  vocab.save(output);
  std::cout << "vocabulary of " << vocab.size() << " tokens written to " << output << '\n';
  return 0;
}

int cmd_pretrain(const ModelFlags& mf, const TrainFlags& tf, std::string corpus, std::string vocab_path,
                 std::string pretrained, std::string output, bool allow_vocab_mismatch) {
  const ConfigFile cfg = mf.resolve();
  const auto& r = cfg.root;
  corpus = pick(corpus, r, "corpus", "training corpus");
  vocab_path = pick(vocab_path, r, "vocab", "vocabulary");
  output = pick(output, r, "output", "output checkpoint");
  if (pretrained.empty()) pretrained = pipeline::get_string(r, "pretrained", "");
  const auto vocab = text::Vocabulary::load(vocab_path);

  std::unique_ptr<pipeline::Model> model;
  std::uint64_t first_step = 0;
  if (!pretrained.empty()) {
    // Continue from a checkpoint; only the targets may change.
    if (!mf.config.empty() || mf.architecture_given()) {
      throw ConfigError("architecture flags cannot change a pre-trained model; only --target may");
    }
    pipeline::ModelSpec spec = pipeline::read_checkpoint(pretrained).spec;
    if (mf.target) {
      const std::size_t classes = spec.targets.classes;
      spec.targets = targets::parse_target_spec(*mf.target);
      spec.targets.classes = mf.classes.value_or(classes);
    }
    if (mf.seed) spec.seed = *mf.seed;
    auto loaded = pipeline::load_model(pretrained, vocab, spec, allow_vocab_mismatch);
    model = std::move(loaded.model);
    if (!loaded.report.fresh.empty()) {
      std::cerr << "fresh target parameters: " << loaded.report.fresh.size() << '\n';
    }
  } else {
    pipeline::ModelSpec spec = pipeline::ModelSpec::from_config(cfg);
    spec.vocab_path = vocab_path;
    model = pipeline::assemble(spec, vocab);
  }
  pipeline::TrainConfig tc = tf.resolve(r, model->spec().seed);
  tc.output = output;
  const auto lines = text::read_lines(corpus);
  auto source = pipeline::make_batch_source(model->spec(), lines, vocab, tc);
  std::cout << "parameters: " << model->parameter_count() << '\n';
  const auto result = pipeline::train(*model, *source, tc, std::cout, nullptr, first_step);
  if (result.skipped) std::cerr << "skipped " << result.skipped << " batches with no labeled positions\n";
  std::cout << "checkpoint written to " << output << '\n';
  return 0;
}

struct FinetuneFlags {
  std::string task = "classify", strategy = "full", train, dev, test, pretrained, output, vocab;
  std::size_t epochs = 3, batch_size = 16, classes = 0, eval_every = 1;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool allow_vocab_mismatch = false;
};

void print_metrics(const char* split, const downstream::Metrics& m) {
  std::cout << split << "_acc=" << m.accuracy;
  if (m.tagging) {
    std::cout << ' ' << split << "_p=" << m.entities.precision << ' ' << split << "_r=" << m.entities.recall << ' '
              << split << "_f1=" << m.entities.f1;
  }
  std::cout << '\n';
}

int cmd_finetune(const ModelFlags& mf, const FinetuneFlags& f) {
  downstream::TaskConfig task;
  task.kind = downstream::parse_task_kind(f.task);
  task.strategy = downstream::parse_strategy(f.strategy);
  task.epochs = f.epochs;
  task.batch_size = f.batch_size;
  task.lr = f.lr;
  task.seed = f.seed;
  task.classes = f.classes;
  task.eval_every = f.eval_every;

  if (f.pretrained.empty() && f.vocab.empty()) throw ConfigError("--vocab is required without --pretrained");
  std::optional<std::filesystem::path> pretrained;
  pipeline::ModelSpec base;
  std::string vocab_path = f.vocab;
  if (!f.pretrained.empty()) {
    if (mf.architecture_given()) throw ConfigError("architecture flags cannot change a pre-trained model");
    pretrained = f.pretrained;
    base = pipeline::read_checkpoint(f.pretrained).spec;
    if (vocab_path.empty()) vocab_path = base.vocab_path;
    if (vocab_path.empty()) throw ConfigError("checkpoint names no vocabulary; pass --vocab");
  } else {
    ConfigFile cfg = mf.resolve();
    cfg.root.erase("target");
    base = pipeline::ModelSpec::from_config(cfg);
    base.vocab_path = vocab_path;
  }
  const auto vocab = text::Vocabulary::load(vocab_path);
  const auto train_lines = text::read_lines(f.train);
  const auto labels = downstream::infer_labels(task.kind, train_lines, task.classes);
  auto model = downstream::prepare_model(pretrained, base, task.kind, labels, vocab, f.allow_vocab_mismatch);
  const auto& spec = model->spec();
  auto read = [&](const std::string& path) {
    auto d = downstream::read_dataset(task.kind, text::read_lines(path), vocab, spec.tokenize, spec.max_length,
                                      labels);
    if (d.truncated) std::cerr << "warning: " << d.truncated << " rows of " << path << " truncated\n";
    return d;
  };
  const auto train_set = read(f.train);
  const auto dev_set = read(f.dev);
  const auto result = downstream::fine_tune(*model, task, train_set, dev_set, f.output, std::cout);
  std::cout << "best epoch " << result.best_epoch << ": ";
  print_metrics("dev", result.best_dev);
  if (!f.test.empty()) print_metrics("test", downstream::evaluate(*model, read(f.test)));
  std::cout << "checkpoint written to " << f.output << '\n';
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input, const std::string& output,
                std::string vocab_path) {
  const auto ck = pipeline::read_checkpoint(model_path);
  if (vocab_path.empty()) vocab_path = ck.spec.vocab_path;
  if (vocab_path.empty()) throw ConfigError("checkpoint names no vocabulary; pass --vocab");
  const auto vocab = text::Vocabulary::load(vocab_path);
  auto loaded = pipeline::load_model(model_path, vocab);
  const auto lines = text::read_lines(input);
  std::ofstream out(output);
  if (!out) throw DataError("cannot write " + output);
  downstream::predict_lines(*loaded.model, vocab, lines, out, std::cerr);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Assemble, pre-train and fine-tune text encoders"};
  app.require_subcommand(1);

  auto* vocab = app.add_subcommand("vocab", "build a vocabulary from corpora");
  std::vector<std::string> v_corpus;
  std::string v_output, v_tokenize = "space", v_format = "plain";
  std::size_t v_min = 1;
  vocab->add_option("--corpus", v_corpus)->required();
  vocab->add_option("--output", v_output)->required();
  vocab->add_option("--min-count", v_min);
  vocab->add_option("--tokenize", v_tokenize);
  vocab->add_option("--format", v_format, "plain, labeled, parallel or tagged");

  auto* pretrain = app.add_subcommand("pretrain", "train a model on an unlabeled (or labeled) corpus");
  ModelFlags p_model;
  TrainFlags p_train;
  std::string p_corpus, p_vocab, p_pretrained, p_output;
  bool p_allow = false;
  p_model.add(pretrain);
  p_train.add(pretrain);
  pretrain->add_option("--corpus", p_corpus);
  pretrain->add_option("--vocab", p_vocab);
  pretrain->add_option("--pretrained", p_pretrained, "continue from this checkpoint");
  pretrain->add_option("--output", p_output);
  pretrain->add_flag("--allow-vocab-mismatch", p_allow);

  auto* finetune = app.add_subcommand("finetune", "fine-tune on a labeled downstream task");
  ModelFlags f_model;
  FinetuneFlags f;
  f_model.add(finetune);
  finetune->add_option("--task", f.task, "classify, pair or ner");
  finetune->add_option("--train", f.train)->required();
  finetune->add_option("--dev", f.dev)->required();
  finetune->add_option("--test", f.test);
  finetune->add_option("--pretrained", f.pretrained);
  finetune->add_option("--strategy", f.strategy, "full or feature");
  finetune->add_option("--output", f.output)->required();
  finetune->add_option("--vocab", f.vocab);
  finetune->add_option("--epochs", f.epochs);
  finetune->add_option("--eval-every", f.eval_every);
  finetune->add_option("--batch-size", f.batch_size);
  finetune->add_option("--lr", f.lr);
  finetune->add_option("--train-seed", f.seed);
  finetune->add_flag("--allow-vocab-mismatch", f.allow_vocab_mismatch);

  auto* predict = app.add_subcommand("predict", "label input lines with a fine-tuned model");
  std::string q_model, q_input, q_output, q_vocab;
  predict->add_option("--model", q_model)->required();
  predict->add_option("--input", q_input)->required();
  predict->add_option("--output", q_output)->required();
  predict->add_option("--vocab", q_vocab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*vocab) return cmd_vocab(v_corpus, v_output, v_min, v_tokenize, v_format);
    if (*pretrain) return cmd_pretrain(p_model, p_train, p_corpus, p_vocab, p_pretrained, p_output, p_allow);
    if (*finetune) return cmd_finetune(f_model, f);
    if (*predict) return cmd_predict(q_model, q_input, q_output, q_vocab);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
