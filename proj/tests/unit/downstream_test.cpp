#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "toy_data.hpp"
#include "uer/downstream/finetune.hpp"
#include "uer/downstream/metrics.hpp"
#include "uer/error.hpp"
#include "uer/pipeline/checkpoint.hpp"

namespace uer {
namespace {

using namespace downstream;
using testing::TempDir;

using Lines = std::vector<std::string>;
using Sentences = std::vector<Lines>;

Lines split(const std::string& s) { return text::tokenize(s, text::TokenizeMode::kSpace); }

TEST(Bio, DecodesEntities) {
  const auto e = bio_entities(split("B-PER I-PER O B-LOC B-LOC I-LOC O I-ORG I-ORG B-PER I-LOC"));
  const std::vector<Entity> want = {{"PER", 0, 2}, {"LOC", 3, 4}, {"LOC", 4, 6}, {"ORG", 7, 9},
                                    {"PER", 9, 10}, {"LOC", 10, 11}};
  EXPECT_EQ(e, want);
  EXPECT_TRUE(bio_entities(split("O O")).empty());
  EXPECT_THROW(bio_entities(split("B-X X-Y")), DataError);
  for (const char* bad : {"B", "B-", "I_X", "o", "BX", ""}) EXPECT_FALSE(valid_bio_tag(bad)) << bad;
  for (const char* ok : {"O", "B-X", "I-LOC-2"}) EXPECT_TRUE(valid_bio_tag(ok)) << ok;
}

TEST(Bio, HandEnumeratedScore) {
  const std::vector<std::vector<std::string>> pred = {split("B-X I-X O B-Y")};
  const std::vector<std::vector<std::string>> gold = {split("B-X I-X O O")};
  const auto s = entity_score(gold, pred);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.f1, 2.0 / 3.0);
  // Symmetric reading: gold {X, Y}, predicted {X}.
  const auto r = entity_score(pred, gold);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  // Counts pool over sentences: gold 3, predicted 3, correct 2.
  const auto both = entity_score(Sentences{gold[0], pred[0]}, Sentences{pred[0], gold[0]});
  EXPECT_EQ(both.correct, 2u);
  EXPECT_DOUBLE_EQ(both.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(both.recall, 2.0 / 3.0);
}

TEST(Bio, PerfectAndEmptyConventions) {
  const std::vector<std::vector<std::string>> gold = {split("B-X I-X O B-Y")};
  const auto same = entity_score(gold, gold);
  EXPECT_DOUBLE_EQ(same.f1, 1.0);
  const auto none = entity_score(gold, Sentences{split("O O O O")});
  EXPECT_EQ(none.predicted, 0u);
  EXPECT_DOUBLE_EQ(none.precision, 0.0);
  EXPECT_DOUBLE_EQ(none.recall, 0.0);
  EXPECT_DOUBLE_EQ(none.f1, 0.0);
  const auto empty = entity_score(Sentences{split("O")}, Sentences{split("O")});
  EXPECT_DOUBLE_EQ(empty.f1, 0.0);
}

const text::Vocabulary& vocab() {
  static const text::Vocabulary v = text::Vocabulary::build(
      std::vector<std::string>{"good fine great bad awful poor movie film plot the a is was john paris acme visited "
                               "works at in"},
      1, text::TokenizeMode::kSpace);
  return v;
}

TEST(Datasets, ClassificationLabels) {
  const std::vector<std::string> lines = {"0\tbad movie", "", "2\tgood film"};
  EXPECT_EQ(infer_labels(TaskKind::kClassify, lines), (std::vector<std::string>{"0", "1", "2"}));
  EXPECT_EQ(infer_labels(TaskKind::kClassify, lines, 4).size(), 4u);
  const auto d = read_dataset(TaskKind::kClassify, lines, vocab(), text::TokenizeMode::kSpace, 16, {"0", "1", "2"});
  ASSERT_EQ(d.rows.size(), 2u);
  EXPECT_EQ(d.rows[1].class_label, 2);
  EXPECT_THROW(read_dataset(TaskKind::kClassify, lines, vocab(), text::TokenizeMode::kSpace, 16, {"0", "1"}),
               DataError);
  EXPECT_THROW(read_dataset(TaskKind::kClassify, Lines{"x\tbad"}, vocab(), text::TokenizeMode::kSpace, 16, {"0", "1"}),
               DataError);
}

TEST(Datasets, PairPacking) {
  const std::vector<std::string> lines = {"1\tgood movie\tthe plot"};
  const auto d = read_dataset(TaskKind::kPair, lines, vocab(), text::TokenizeMode::kSpace, 16, {"0", "1"});
  const auto& ex = d.rows.at(0);
  const std::vector<int> want = {text::kClsId, vocab().id("good"), vocab().id("movie"), text::kSepId,
                                 vocab().id("the"), vocab().id("plot"), text::kSepId};
  EXPECT_EQ(ex.tokens, want);
  EXPECT_EQ(ex.segments, (std::vector<int>{0, 0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(ex.class_label, 1);
  EXPECT_THROW(read_dataset(TaskKind::kPair, Lines{"1\tgood"}, vocab(), text::TokenizeMode::kSpace, 16, {"0", "1"}),
               DataError);
}

TEST(Datasets, TaggedSentences) {
  const std::vector<std::string> lines = {"john\tB-PER", "visited\tO", "paris\tB-LOC", "", "", "acme\tB-ORG",
                                          "works\tO"};
  const auto labels = infer_labels(TaskKind::kNer, lines);
  EXPECT_EQ(labels, (std::vector<std::string>{"O", "B-LOC", "B-ORG", "B-PER"}));
  const auto d = read_dataset(TaskKind::kNer, lines, vocab(), text::TokenizeMode::kSpace, 16, labels);
  ASSERT_EQ(d.rows.size(), 2u);
  EXPECT_EQ(d.rows[0].tag_labels, (std::vector<int>{kIgnoreId, 3, 0, 1, kIgnoreId}));
  EXPECT_EQ(d.rows[0].tokens.size(), 5u);
  const auto cut = read_dataset(TaskKind::kNer, lines, vocab(), text::TokenizeMode::kSpace, 4, labels);
  EXPECT_EQ(cut.truncated, 1u);
  EXPECT_EQ(cut.rows[0].tokens.size(), 4u);

  try {
    infer_labels(TaskKind::kNer, std::vector<std::string>{"john\tB-PER", "paris\tLOC"});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_dataset(TaskKind::kNer, Lines{"acme\tI-MISC"}, vocab(), text::TokenizeMode::kSpace, 16, labels),
               DataError);
}

pipeline::ModelSpec base_spec(const std::string& encoder = "transformer") {
  auto cfg = pipeline::ConfigFile::parse("embedding = bert\nhidden = 16\nseq_length = 12\ndropout = 0\n"
                                         "target = bert\nheads = 2\nencoder_dropout = 0\nencoder = " +
                                         encoder + "\n");
  return pipeline::ModelSpec::from_config(cfg);
}

// Sentiment decided by a single cue word.
std::vector<std::string> sentiment(std::size_t n, std::uint64_t seed) {
  const std::vector<std::string> pos = {"good", "fine", "great"}, neg = {"bad", "awful", "poor"},
                                 noun = {"movie", "film", "plot"};
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = rng() % 2;
    out.push_back(std::string(p ? "1" : "0") + "\tthe " + noun[rng() % 3] + " was " +
                  (p ? pos : neg)[rng() % 3]);
  }
  return out;
}

struct Task {
  std::vector<std::string> labels{"0", "1"};
  Dataset train, dev;
  explicit Task(std::uint64_t seed = 1) {
    train = read_dataset(TaskKind::kClassify, sentiment(64, seed), vocab(), text::TokenizeMode::kSpace, 12, labels);
    dev = read_dataset(TaskKind::kClassify, sentiment(32, seed + 100), vocab(), text::TokenizeMode::kSpace, 12,
                       labels);
  }
};

TaskConfig config(Strategy s, std::size_t epochs, double lr) {
  TaskConfig c;
  c.strategy = s;
  c.epochs = epochs;
  c.lr = lr;
  c.batch_size = 8;
  return c;
}

TEST(FineTune, FullStrategySeparatesToyTask) {
  TempDir dir("ft_full");
  Task task;
  auto model = prepare_model(std::nullopt, base_spec(), TaskKind::kClassify, task.labels, vocab());
  std::ostringstream log;
  const auto r = fine_tune(*model, config(Strategy::kFull, 10, 3e-3), task.train, task.dev, dir / "m.ckpt", log);
  EXPECT_DOUBLE_EQ(r.best_dev.accuracy, 1.0) << log.str();

  // The saved best model reproduces its dev metrics exactly.
  auto back = pipeline::load_model(dir / "m.ckpt", vocab());
  const auto again = evaluate(*back.model, task.dev);
  EXPECT_EQ(again.accuracy, r.best_dev.accuracy);
  EXPECT_EQ(back.model->spec().task, "classify");
  EXPECT_EQ(back.model->spec().labels, task.labels);
  EXPECT_EQ(evaluate(*model, task.dev).accuracy, r.best_dev.accuracy);
}

TEST(FineTune, FeatureStrategyFreezesEverythingButTheHead) {
  TempDir dir("ft_feature");
  auto pre = pipeline::assemble(base_spec("gru"), vocab());
  pipeline::save_checkpoint(dir / "pre.ckpt", *pre);
  Task task;
  auto model = prepare_model(dir / "pre.ckpt", pre->spec(), TaskKind::kClassify, task.labels, vocab());
  std::map<std::string, std::vector<double>> before;
  for (const auto& p : model->named_parameters()) before[p.name].assign(p.value.data().begin(), p.value.data().end());
  std::ostringstream log;
  fine_tune(*model, config(Strategy::kFeature, 2, 1e-2), task.train, task.dev, {}, log);
  std::size_t heads = 0;
  for (const auto& p : model->named_parameters()) {
    const bool head = p.name.rfind("target.", 0) == 0;
    const bool same = std::equal(p.value.data().begin(), p.value.data().end(), before[p.name].begin());
    if (head) {
      heads += !same;
    } else {
      EXPECT_TRUE(same) << p.name;
      EXPECT_FALSE(p.value.requires_grad()) << p.name;
    }
  }
  EXPECT_GT(heads, 0u);

  // Gradient of every frozen parameter is structurally zero.
  const auto batch = text::collate(task.train.rows);
  {
    Tape tape;
    tape.backward(model->forward(batch, Context{}).loss);
  }
  for (const auto& p : model->named_parameters()) {
    if (p.name.rfind("target.", 0) == 0) continue;
    const auto g = p.value.grad_or_zeros();
    EXPECT_TRUE(std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) << p.name;
  }
}

TEST(FineTune, PretrainedSharedParametersAreLoaded) {
  TempDir dir("ft_load");
  auto pre = pipeline::assemble(base_spec(), vocab());
  pipeline::save_checkpoint(dir / "pre.ckpt", *pre);
  Task task;
  auto spec = base_spec();
  spec.seed = 1234;  // ignored: the checkpoint's spec wins
  auto model = prepare_model(dir / "pre.ckpt", spec, TaskKind::kClassify, task.labels, vocab());
  std::map<std::string, Tensor> old;
  for (const auto& p : pre->named_parameters()) old[p.name] = p.value;
  for (const auto& p : model->named_parameters()) {
    if (p.name.rfind("target.", 0) == 0) continue;
    EXPECT_TRUE(std::equal(p.value.data().begin(), p.value.data().end(), old.at(p.name).data().begin()));
  }
  EXPECT_THROW(prepare_model(dir / "none.ckpt", spec, TaskKind::kClassify, task.labels, vocab()), DataError);
}

TEST(Predict, DeterministicNormalizedAndPaddingFree) {
  Task task;
  auto model = prepare_model(std::nullopt, base_spec(), TaskKind::kClassify, task.labels, vocab());
  std::vector<text::Example> rows = {task.dev.rows[0], task.dev.rows[0], task.dev.rows[1]};
  rows.push_back(read_dataset(TaskKind::kClassify, Lines{"1\tthe film was good the plot was fine a movie"}, vocab(),
                              text::TokenizeMode::kSpace, 12, task.labels)
                     .rows[0]);
  const auto p = predict(*model, rows);
  EXPECT_EQ(p[0].probs, p[1].probs);
  for (const auto& r : p) {
    EXPECT_NEAR(std::accumulate(r.probs.begin(), r.probs.end(), 0.0), 1.0, 1e-9);
  }
  const auto alone = predict(*model, std::span(rows).first(1));
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(alone[0].probs[c], p[0].probs[c], 1e-10);
}

TEST(Predict, EvaluationIgnoresRowOrder) {
  Task task;
  auto model = prepare_model(std::nullopt, base_spec(), TaskKind::kClassify, task.labels, vocab());
  Dataset reversed = task.dev;
  std::reverse(reversed.rows.begin(), reversed.rows.end());
  EXPECT_EQ(evaluate(*model, task.dev).accuracy, evaluate(*model, reversed).accuracy);
}

TEST(Predict, MemorizedModelReproducesTrainingLabels) {
  Task task;
  auto model = prepare_model(std::nullopt, base_spec(), TaskKind::kClassify, task.labels, vocab());
  std::ostringstream log;
  fine_tune(*model, config(Strategy::kFull, 10, 3e-3), task.train, task.train, {}, log);
  const auto lines = sentiment(64, 1);
  std::vector<std::string> inputs;
  for (const auto& l : lines) inputs.push_back(l.substr(2));
  std::ostringstream out, warn;
  predict_lines(*model, vocab(), inputs, out, warn);
  std::istringstream got(out.str());
  std::string line;
  std::size_t i = 0;
  while (std::getline(got, line)) {
    EXPECT_EQ(line.substr(0, 2), lines[i].substr(0, 1) + "\t") << line;
    ++i;
  }
  EXPECT_EQ(i, lines.size());
  EXPECT_TRUE(warn.str().empty());

  std::ostringstream o2, w2;
  predict_lines(*model, vocab(), Lines{"the film was good the plot was fine a movie is good"}, o2, w2);
  EXPECT_NE(w2.str().find("truncated"), std::string::npos);
}

TEST(FineTune, NerToyReachesPerfectF1) {
  // The token alone decides its tag.
  const std::map<std::string, std::string> tag = {{"john", "B-PER"}, {"paris", "B-LOC"}, {"acme", "B-ORG"},
                                                  {"visited", "O"},   {"works", "O"},      {"at", "O"},
                                                  {"in", "O"}};
  std::vector<std::string> words;
  for (const auto& [w, t] : tag) words.push_back(w);
  auto make = [&](std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> lines;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t k = 0; k < 3 + rng() % 4; ++k) {
        const auto& w = words[rng() % words.size()];
        lines.push_back(w + "\t" + tag.at(w));
      }
      lines.emplace_back();
    }
    return lines;
  };
  const auto train_lines = make(60, 1), dev_lines = make(20, 2);
  const auto labels = infer_labels(TaskKind::kNer, train_lines);
  const auto train = read_dataset(TaskKind::kNer, train_lines, vocab(), text::TokenizeMode::kSpace, 12, labels);
  const auto dev = read_dataset(TaskKind::kNer, dev_lines, vocab(), text::TokenizeMode::kSpace, 12, labels);
  auto model = prepare_model(std::nullopt, base_spec("lstm"), TaskKind::kNer, labels, vocab());
  std::ostringstream log;
  auto cfg = config(Strategy::kFull, 20, 1e-2);
  const auto r = fine_tune(*model, cfg, train, dev, {}, log);
  EXPECT_TRUE(r.best_dev.tagging);
  EXPECT_DOUBLE_EQ(r.best_dev.entities.f1, 1.0) << log.str();

  std::ostringstream out, warn;
  predict_lines(*model, vocab(), Lines{"john visited paris"}, out, warn);
  EXPECT_EQ(out.str(), "B-PER O B-LOC\n");
}

}  // namespace
}  // namespace uer
