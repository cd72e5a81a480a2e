#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "grad_util.hpp"
#include "uer/encoders/encoder.hpp"
#include "uer/error.hpp"
#include "uer/layers/embedding.hpp"
#include "uer/numerics/adam.hpp"
#include "uer/targets/target.hpp"

namespace uer {
namespace {

using namespace targets;
using testing::module_grad_error;
using testing::random_tensor;

void fill(Tensor t, double v) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), v); }
// Zeroes the final projection so every logit is 0.
void zero_output(const Module& m) {
  for (const auto& p : m.named_parameters()) {
    if (p.name.rfind("output", 0) == 0) fill(p.value, 0.0);
  }
}

std::vector<int> ids(std::initializer_list<int> v) { return v; }

text::Batch batch_of(std::vector<text::Example> examples) { return text::collate(examples); }

// Mixed-length batch carrying every label kind.
text::Batch full_batch(std::size_t vocab, std::mt19937_64& rng) {
  std::vector<text::Example> ex;
  std::uniform_int_distribution<int> tok(text::kReservedCount, static_cast<int>(vocab) - 1);
  for (std::size_t len : {4u, 2u, 3u}) {
    std::vector<int> a(len), b(2);
    for (int& t : a) t = tok(rng);
    for (int& t : b) t = tok(rng);
    auto e = text::make_pair(a, b, 16);
    e.pair_label = static_cast<int>(len % 2);
    e.class_label = static_cast<int>(len % 3);
    e.mlm_labels.assign(e.tokens.size(), kIgnoreId);
    e.mlm_labels[1] = a[0];
    if (len > 2) e.mlm_labels[2] = a[1];
    e.lm_labels.assign(e.tokens.size(), kIgnoreId);
    for (std::size_t i = 0; i + 1 < e.tokens.size(); ++i) e.lm_labels[i] = e.tokens[i + 1];
    e.tag_labels.assign(e.tokens.size(), static_cast<int>(len % 3));
    auto s2s = text::make_seq2seq_example(a, b, 16);
    e.decoder_input = s2s.decoder_input;
    e.decoder_labels = s2s.decoder_labels;
    ex.push_back(e);
  }
  return batch_of(ex);
}

TargetSpec spec_of(std::string_view text, std::size_t classes = 2) {
  auto s = parse_target_spec(text);
  s.classes = classes;
  return s;
}

TEST(TargetSpec, ParsesWeightsAndExpandsBert) {
  auto s = parse_target_spec("mlm:1.0, nsp:0.5");
  ASSERT_EQ(s.entries.size(), 2u);
  EXPECT_EQ(s.entries[0].kind, TargetKind::kMlm);
  EXPECT_EQ(s.entries[1].weight, 0.5);

  auto b = parse_target_spec("bert:0.7");
  ASSERT_EQ(b.entries.size(), 2u);
  EXPECT_EQ(b.entries[0].kind, TargetKind::kMlm);
  EXPECT_EQ(b.entries[1].kind, TargetKind::kNsp);
  EXPECT_EQ(b.entries[0].weight, b.entries[1].weight);
  EXPECT_TRUE(b.bert);
  EXPECT_EQ(format_target_spec(b), "bert:0.7");

  EXPECT_EQ(parse_target_spec("lm").entries[0].weight, 1.0);
  EXPECT_EQ(format_target_spec(parse_target_spec("ae:2,cls:0.25")), "ae:2,cls:0.25");
}

TEST(TargetSpec, RejectsBadLists) {
  for (const char* bad : {"", "mlm:0", "mlm:-1", "mlm:x", "foo", "mlm,mlm", "bert,nsp", "mlm,,nsp", "mlm:nan"}) {
    EXPECT_THROW(parse_target_spec(bad), ConfigError) << bad;
  }
}


TEST(UniformLogits, LossIsLogOfClassCount) {
  const std::size_t V = 23, H = 6;
  std::mt19937_64 rng(3);
  auto batch = full_batch(V, rng);
  auto mask = batch.pad_mask();
  auto hidden = random_tensor({batch.size, batch.length, H}, rng);
  Init init(3);
  auto spec = spec_of("lm", 3);
  const std::pair<TargetKind, double> cases[] = {
      {TargetKind::kLm, std::log(V)},  {TargetKind::kMlm, std::log(V)}, {TargetKind::kAe, std::log(V)},
      {TargetKind::kNmt, std::log(V)}, {TargetKind::kNsp, std::log(2)}, {TargetKind::kCls, std::log(3)},
      {TargetKind::kTag, std::log(3)},
  };
  for (auto [kind, expected] : cases) {
    auto head = make_target(kind, H, V, spec, false, init);
    zero_output(*head);
    auto r = head->compute(hidden, mask, batch, Context{});
    EXPECT_NEAR(r.loss.item(), expected, 1e-12) << to_string(kind);
    EXPECT_LE(r.correct, r.counted);
  }
  EXPECT_NEAR(std::log(3.0), 1.0986, 1e-4);
}

TEST(UniformLogits, MlmIndependentOfSelectedCount) {
  const std::size_t V = 17, H = 4;
  std::mt19937_64 rng(5);
  Init init(5);
  MlmTarget mlm(H, V, init);
  zero_output(mlm);
  auto e = text::make_single(ids({5, 6, 7, 8, 9, 10}), 8);
  for (std::size_t selected = 1; selected <= 6; ++selected) {
    e.mlm_labels.assign(e.tokens.size(), kIgnoreId);
    for (std::size_t i = 0; i < selected; ++i) e.mlm_labels[1 + i] = 5 + static_cast<int>(i);
    auto b = batch_of({e});
    auto hidden = random_tensor({1, b.length, H}, rng);
    EXPECT_NEAR(mlm.compute(hidden, b.pad_mask(), b, Context{}).loss.item(), std::log(V), 1e-12);
  }
}

TEST(Mlm, OneHotCorrectLogitsGiveZeroLossFullAccuracy) {
  const std::size_t V = 11, H = 4;
  std::mt19937_64 rng(6);
  Init init(6);
  MlmTarget mlm(H, V, init);
  zero_output(mlm);
  Tensor(mlm.output().bias()).mutable_data()[7] = 60.0;
  auto e = text::make_single(ids({5, 6, 7}), 8);
  e.mlm_labels.assign(e.tokens.size(), kIgnoreId);
  e.mlm_labels[2] = 7;
  auto b = batch_of({e});
  auto r = mlm.compute(random_tensor({1, b.length, H}, rng), b.pad_mask(), b, Context{});
  EXPECT_LT(r.loss.item(), 1e-20);
  EXPECT_EQ(r.correct, 1u);
  EXPECT_EQ(r.counted, 1u);
}

TEST(Mlm, NoSelectedPositionIsEmpty) {
  Init init(1);
  MlmTarget mlm(4, 9, init);
  auto e = text::make_single(ids({5, 6}), 8);
  e.mlm_labels.assign(e.tokens.size(), kIgnoreId);
  auto b = batch_of({e});
  std::mt19937_64 rng(1);
  EXPECT_THROW(mlm.compute(random_tensor({1, b.length, 4}, rng), b.pad_mask(), b, Context{}), EmptyLossError);
}

TEST(Nsp, ForcedLogitsGiveZeroLoss) {
  Init init(2);
  SentenceTarget nsp(TargetKind::kNsp, 4, 2, true, init);
  zero_output(nsp);
  Tensor(nsp.output().bias()).mutable_data()[1] = 60.0;
  std::vector<text::Example> ex;
  for (int i = 0; i < 3; ++i) {
    auto e = text::make_pair(ids({5, 6}), ids({7}), 8);
    e.pair_label = 1;
    ex.push_back(e);
  }
  auto b = batch_of(ex);
  std::mt19937_64 rng(2);
  auto r = nsp.compute(random_tensor({3, b.length, 4}, rng), b.pad_mask(), b, Context{});
  EXPECT_LT(r.loss.item(), 1e-20);
  EXPECT_EQ(r.correct, 3u);
}

TEST(Nsp, UntrainedAccuracyIsChance) {
  const std::size_t H = 8, N = 1000;
  Init init(4);
  SentenceTarget nsp(TargetKind::kNsp, H, 2, true, init);
  std::mt19937_64 rng(4);
  std::vector<text::Example> ex;
  for (std::size_t i = 0; i < N; ++i) {
    auto e = text::make_pair(ids({5, 6}), ids({7}), 8);
    e.pair_label = static_cast<int>(i % 2);
    ex.push_back(e);
  }
  auto b = batch_of(ex);
  auto r = nsp.compute(random_tensor({N, b.length, H}, rng), b.pad_mask(), b, Context{});
  EXPECT_EQ(r.counted, N);
  EXPECT_NEAR(static_cast<double>(r.correct) / N, 0.5, 0.06);
}

TEST(Nsp, TapeHasNoVocabularySizedAxis) {
  const std::size_t V = 97, H = 8;
  Init init(7);
  layers::Embedding emb({layers::EmbeddingKind::kBert, V, H, 16, 0.0}, init);
  encoders::EncoderConfig ec;
  ec.hidden = H;
  ec.heads = 2;
  ec.dropout = 0;
  encoders::EncoderStack stack({ec}, H, false, init);
  auto run = [&](std::string_view targets) {
    TargetSet set(spec_of(targets), H, V, true, init);
    std::mt19937_64 rng(7);
    auto batch = full_batch(V, rng);
    Tape tape;
    auto mask = batch.pad_mask();
    auto out = set.forward(stack.forward(emb.forward(batch, Context{}), mask, Context{}), mask, batch, Context{});
    tape.backward(out.loss);
    bool has_v = false;
    for (const auto& node : tape.nodes()) {
      for (auto d : node.output->shape) has_v = has_v || d == V;
    }
    return std::make_pair(tape.nodes().size(), has_v);
  };
  auto [nodes, nsp_has_v] = run("nsp");
  EXPECT_GT(nodes, 10u);
  EXPECT_FALSE(nsp_has_v);
  EXPECT_TRUE(run("mlm").second);  // the probe does see a vocabulary projection
}

TEST(Cls, LabelOutsideClassesIsDataError) {
  Init init(8);
  SentenceTarget cls(TargetKind::kCls, 4, 3, false, init);
  auto b = batch_of({text::make_cls_example(ids({5, 6}), 3, 8)});
  std::mt19937_64 rng(8);
  EXPECT_THROW(cls.compute(random_tensor({1, b.length, 4}, rng), b.pad_mask(), b, Context{}), DataError);
  EXPECT_THROW(SentenceTarget(TargetKind::kCls, 4, 1, false, init), ConfigError);
}

TEST(Cls, MaxPoolOverIdenticalRowsEqualsOneRow) {
  std::mt19937_64 rng(9);
  auto row = random_tensor({1, 1, 5}, rng);
  auto hidden = concat({row, row, row, row}, 1);
  auto pooled = pool(hidden, Tensor::full({1, 4}, 1.0), false);
  EXPECT_EQ(std::vector<double>(pooled.data().begin(), pooled.data().end()),
            std::vector<double>(row.data().begin(), row.data().end()));
}

TEST(Seq2Seq, AeEqualsNmtOnIdentityPairs) {
  const std::size_t V = 19, H = 6;
  std::mt19937_64 rng(10);
  auto src = ids({5, 9, 12, 7});
  auto ae_batch = batch_of({text::make_ae_example(src, 10), text::make_ae_example(ids({6, 8}), 10)});
  auto nmt_batch = batch_of({text::make_seq2seq_example(src, src, 10),
                             text::make_seq2seq_example(ids({6, 8}), ids({6, 8}), 10)});
  auto hidden = random_tensor({2, ae_batch.length, H}, rng);
  Init a(11), n(11);
  Seq2SeqTarget ae(TargetKind::kAe, H, V, false, a), nmt(TargetKind::kNmt, H, V, false, n);
  auto la = ae.compute(hidden, ae_batch.pad_mask(), ae_batch, Context{}).loss.item();
  auto ln = nmt.compute(hidden, nmt_batch.pad_mask(), nmt_batch, Context{}).loss.item();
  EXPECT_EQ(la, ln);
}

TEST(Seq2Seq, NoDecoderSideIsEmpty) {
  Init init(12);
  Seq2SeqTarget ae(TargetKind::kAe, 4, 9, false, init);
  auto b = batch_of({text::make_single(ids({5, 6}), 8)});
  std::mt19937_64 rng(12);
  EXPECT_THROW(ae.compute(random_tensor({1, b.length, 4}, rng), b.pad_mask(), b, Context{}), EmptyLossError);
}

TEST(Seq2Seq, TiedOutputUsesEmbeddingTable) {
  Init init(13);
  Seq2SeqTarget tied(TargetKind::kNmt, 4, 9, true, init);
  std::vector<std::string> names;
  for (const auto& p : tied.named_parameters()) names.push_back(p.name);
  EXPECT_EQ(names.back(), "output_bias");
  EXPECT_EQ(std::count_if(names.begin(), names.end(), [](auto& n) { return n.rfind("output.", 0) == 0; }), 0);
}

TEST(Combine, Arithmetic) {
  std::vector<WeightedLoss> parts = {{Tensor::scalar(2.0), 0.5}, {Tensor::scalar(0.7), 0.5}};
  EXPECT_NEAR(combine(parts).item(), 1.35, 1e-15);
  std::vector<WeightedLoss> one = {{Tensor::scalar(2.0), 1.0}};
  EXPECT_EQ(combine(one).item(), 2.0);
  std::vector<WeightedLoss> some_empty = {{Tensor(), 3.0}, {Tensor::scalar(0.7), 2.0}};
  EXPECT_NEAR(combine(some_empty).item(), 1.4, 1e-15);
  std::vector<WeightedLoss> none = {{Tensor(), 1.0}};
  EXPECT_THROW(combine(none), EmptyLossError);
}

std::vector<std::vector<double>> grads_of(std::vector<Tensor> params, const std::function<Tensor()>& loss) {
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    tape.backward(loss());
  }
  std::vector<std::vector<double>> g;
  for (auto& p : params) g.push_back(p.grad_or_zeros());
  return g;
}

TEST(Combine, GradientIsWeightedSumOfComponents) {
  const std::size_t V = 13, H = 6;
  std::mt19937_64 rng(14);
  auto batch = full_batch(V, rng);
  auto mask = batch.pad_mask();
  auto hidden = random_tensor({batch.size, batch.length, H}, rng, -1, 1, true);
  Init init(14, 0.3);
  TargetSet set(spec_of("mlm:0.3,nsp:0.7"), H, V, false, init);
  auto params = set.parameters();
  params.push_back(hidden);

  auto total = grads_of(params, [&] { return set.forward(hidden, mask, batch, Context{}).loss; });
  auto g0 = grads_of(params, [&] { return set.head(0).compute(hidden, mask, batch, Context{}).loss; });
  auto g1 = grads_of(params, [&] { return set.head(1).compute(hidden, mask, batch, Context{}).loss; });
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < total[i].size(); ++j) {
      worst = std::max(worst, std::abs(total[i][j] - (0.3 * g0[i][j] + 0.7 * g1[i][j])));
    }
  }
  EXPECT_LT(worst, 1e-10);

  auto out = set.forward(hidden, mask, batch, Context{});
  EXPECT_NEAR(out.loss.item(), 0.3 * out.metrics["mlm"].loss + 0.7 * out.metrics["nsp"].loss, 1e-12);
}

TEST(Combine, ScalingWeightsScalesLossAndGradients) {
  const std::size_t V = 13, H = 6;
  const double c = 2.5;
  std::mt19937_64 rng(15);
  auto batch = full_batch(V, rng);
  auto mask = batch.pad_mask();
  auto hidden = random_tensor({batch.size, batch.length, H}, rng, -1, 1, true);
  Init i1(15, 0.3), i2(15, 0.3);
  TargetSet base(spec_of("lm:0.4,cls:1.5,nmt:0.2", 3), H, V, false, i1);
  TargetSet scaled(spec_of("lm:1.0,cls:3.75,nmt:0.5", 3), H, V, false, i2);
  auto pb = base.parameters(), ps = scaled.parameters();
  pb.push_back(hidden);
  ps.push_back(hidden);
  double lb = 0, ls = 0;
  auto gb = grads_of(pb, [&] { auto l = base.forward(hidden, mask, batch, Context{}).loss; lb = l.item(); return l; });
  auto gs = grads_of(ps, [&] { auto l = scaled.forward(hidden, mask, batch, Context{}).loss; ls = l.item(); return l; });
  EXPECT_NEAR(ls, c * lb, 1e-10);
  double worst = 0;
  for (std::size_t i = 0; i < gb.size(); ++i) {
    for (std::size_t j = 0; j < gb[i].size(); ++j) worst = std::max(worst, std::abs(gs[i][j] - c * gb[i][j]));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Combine, EmptyHeadsAreSkippedAndReported) {
  const std::size_t V = 13, H = 4;
  std::mt19937_64 rng(16);
  Init init(16);
  TargetSet set(spec_of("mlm,nsp"), H, V, true, init);
  auto e = text::make_pair(ids({5, 6}), ids({7}), 8);
  e.pair_label = 1;
  e.mlm_labels.assign(e.tokens.size(), kIgnoreId);
  auto b = batch_of({e});
  auto hidden = random_tensor({1, b.length, H}, rng);
  auto out = set.forward(hidden, b.pad_mask(), b, Context{});
  EXPECT_TRUE(out.metrics["mlm"].empty);
  EXPECT_FALSE(out.metrics["nsp"].empty);
  EXPECT_EQ(out.loss.item(), out.metrics["nsp"].loss);

  auto bare = batch_of({text::make_single(ids({5, 6}), 8)});
  EXPECT_THROW(set.forward(random_tensor({1, bare.length, H}, rng), bare.pad_mask(), bare, Context{}),
               EmptyLossError);
}

TEST(TargetSet, NamesAreKindPrefixed) {
  Init init(17);
  TargetSet set(spec_of("bert"), 4, 9, true, init);
  auto named = set.named_parameters("target");
  ASSERT_FALSE(named.empty());
  EXPECT_EQ(named.front().name, "target.mlm.dense.weight");
  EXPECT_EQ(named.back().name, "target.nsp.output.bias");
  EXPECT_NE(set.find(TargetKind::kNsp), nullptr);
  EXPECT_EQ(set.find(TargetKind::kLm), nullptr);
}

class TargetGradients : public ::testing::TestWithParam<int> {};

TEST_P(TargetGradients, MatchCentralDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  const std::size_t V = 9, H = 4;
  std::mt19937_64 rng(seed);
  auto batch = full_batch(V, rng);
  auto mask = batch.pad_mask();
  auto spec = spec_of("lm", 3);
  struct Case {
    TargetKind kind;
    bool cls_position;
    bool tie;
  };
  const Case cases[] = {
      {TargetKind::kLm, false, false},  {TargetKind::kMlm, false, false}, {TargetKind::kNsp, true, false},
      {TargetKind::kNsp, false, false}, {TargetKind::kCls, false, false}, {TargetKind::kTag, false, false},
      {TargetKind::kAe, false, false},  {TargetKind::kNmt, false, true},
  };
  for (const auto& c : cases) {
    Init init(seed, 0.5);
    spec.tie_decoder_output = c.tie;
    auto head = make_target(c.kind, H, V, spec, c.cls_position, init);
    auto hidden = random_tensor({batch.size, batch.length, H}, rng);
    double err = module_grad_error(
        *head, [&] { return head->compute(hidden, mask, batch, Context{}).loss; }, rng, {hidden});
    EXPECT_LT(err, 1e-4) << to_string(c.kind) << (c.cls_position ? " cls" : "") << (c.tie ? " tied" : "");
  }
  Init init(seed, 0.5);
  TargetSet set(spec_of("mlm:0.5,nsp:0.5"), H, V, true, init);
  auto hidden = random_tensor({batch.size, batch.length, H}, rng);
  EXPECT_LT(module_grad_error(set, [&] { return set.forward(hidden, mask, batch, Context{}).loss; }, rng, {hidden}),
            1e-4)
      << "combined";
}

INSTANTIATE_TEST_SUITE_P(Seeds, TargetGradients, ::testing::Range(0, 20));

// Embedding -> encoder stack -> targets, trained with Adam.
class Tiny : public Module {
 public:
  Tiny(layers::EmbeddingConfig e, std::vector<encoders::EncoderConfig> enc, const TargetSpec& spec,
       std::uint64_t seed) {
    Init init(seed);
    e.dropout = 0;
    for (auto& c : enc) c.dropout = 0;
    emb_ = &add_module("embedding", std::make_unique<layers::Embedding>(e, init));
    stack_ = &add_module("encoder", std::make_unique<encoders::EncoderStack>(enc, e.hidden, false, init));
    targets_ = &add_module("target", std::make_unique<TargetSet>(spec, stack_->output_width(), e.vocab_size,
                                                                stack_->uses_cls_position(), init));
  }
  Tensor hidden(const text::Batch& b) const {
    return stack_->forward(emb_->forward(b, Context{}), b.pad_mask(), Context{});
  }
  TargetOutput run(const text::Batch& b) const { return targets_->forward(hidden(b), b.pad_mask(), b, Context{}); }
  const TargetSet& targets() const { return *targets_; }

  void train(const std::function<text::Batch(std::size_t)>& next, std::size_t steps, double lr) {
    auto params = parameters();
    auto state = AdamState::for_parameters(params, {lr});
    for (std::size_t s = 0; s < steps; ++s) {
      for (auto& p : params) p.zero_grad();
      auto b = next(s);
      {
        Tape tape;
        tape.backward(run(b).loss);
      }
      clip_grad_norm(params, 1.0);
      std::vector<std::vector<double>> grads;
      for (auto& p : params) grads.push_back(p.grad_or_zeros());
      adam_step(params, grads, state);
    }
  }

 private:
  layers::Embedding* emb_;
  encoders::EncoderStack* stack_;
  TargetSet* targets_;
};

encoders::EncoderConfig enc(encoders::EncoderKind kind, std::size_t hidden, bool causal = false) {
  encoders::EncoderConfig c;
  c.kind = kind;
  c.hidden = hidden;
  c.heads = 2;
  c.mask = causal ? encoders::MaskMode::kCausal : encoders::MaskMode::kBidirectional;
  return c;
}

double accuracy(const Metric& m) { return m.counted ? static_cast<double>(m.correct) / m.counted : 0; }

TEST(Training, LmMemorizesRepeatedSentence) {
  const std::size_t V = 16;
  Tiny model({layers::EmbeddingKind::kPlain, V, 24}, {enc(encoders::EncoderKind::kGru, 24)}, spec_of("lm"), 1);
  auto b = batch_of({text::make_lm_example(ids({5, 9, 7, 11, 6, 12, 8}), 16)});
  model.train([&](std::size_t) { return b; }, 300, 1e-2);
  EXPECT_LT(model.run(b).metrics["lm"].loss, 0.1);
}

TEST(Training, AeMemorizesRepeatedSentence) {
  const std::size_t V = 16;
  Tiny model({layers::EmbeddingKind::kBert, V, 24, 16}, {enc(encoders::EncoderKind::kTransformer, 24)},
             spec_of("ae"), 2);
  auto b = batch_of({text::make_ae_example(ids({5, 9, 7, 11, 6, 12, 8}), 16)});
  model.train([&](std::size_t) { return b; }, 300, 3e-3);
  EXPECT_LT(model.run(b).metrics["ae"].loss, 0.1);
}

text::Batch reversal_batch(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> tok(text::kReservedCount, 19);
  std::uniform_int_distribution<std::size_t> len(1, 6);
  std::vector<text::Example> ex;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> src(len(rng));
    for (int& t : src) t = tok(rng);
    std::vector<int> tgt(src.rbegin(), src.rend());
    ex.push_back(text::make_seq2seq_example(src, tgt, 8));
  }
  return batch_of(ex);
}

TEST(Training, NmtLearnsReversal) {
  const std::size_t V = 20, H = 32;
  Tiny model({layers::EmbeddingKind::kBert, V, H, 8}, {enc(encoders::EncoderKind::kTransformer, H)},
             spec_of("nmt"), 3);
  std::mt19937_64 rng(3);
  model.train([&](std::size_t) { return reversal_batch(rng, 32); }, 1500, 3e-3);
  std::mt19937_64 held(99);
  auto test = reversal_batch(held, 300);
  EXPECT_GE(accuracy(model.run(test).metrics["nmt"]), 0.9);
}

// Two topics; the second sentence continues the first iff it shares its topic.
// The label is an XOR of the two halves, so loss sits at ln 2 for a while
// before the head finds it.
text::Batch topic_pairs(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> a(5, 9), b(10, 14);
  std::bernoulli_distribution coin(0.5);
  std::vector<text::Example> ex;
  for (std::size_t i = 0; i < n; ++i) {
    const bool first_a = coin(rng), same = coin(rng);
    auto draw = [&](bool topic_a) {
      std::vector<int> s(3);
      for (int& t : s) t = topic_a ? a(rng) : b(rng);
      return s;
    };
    auto e = text::make_pair(draw(first_a), draw(same ? first_a : !first_a), 10);
    e.pair_label = same ? 0 : 1;
    ex.push_back(e);
  }
  return batch_of(ex);
}

TEST(Training, NspSeparatesSyntheticPairs) {
  auto e = enc(encoders::EncoderKind::kTransformer, 32);
  e.layers = 2;
  Tiny model({layers::EmbeddingKind::kBert, 15, 32, 10}, {e}, spec_of("nsp"), 4);
  std::mt19937_64 rng(4);
  model.train([&](std::size_t) { return topic_pairs(rng, 32); }, 600, 1e-3);
  std::mt19937_64 held(98);
  EXPECT_GE(accuracy(model.run(topic_pairs(held, 500)).metrics["nsp"]), 0.95);
}

TEST(Training, ClsSeparatesTwoTokenClasses) {
  std::vector<text::Example> ex;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> filler(7, 12);
  for (int i = 0; i < 40; ++i) {
    std::vector<int> s = {filler(rng), filler(rng), filler(rng)};
    s[static_cast<std::size_t>(i % 3)] = 5 + i % 2;
    ex.push_back(text::make_cls_example(s, i % 2, 8));
  }
  auto b = batch_of(ex);
  Tiny model({layers::EmbeddingKind::kPlain, 13, 16}, {enc(encoders::EncoderKind::kLstm, 16)}, spec_of("cls"), 5);
  model.train([&](std::size_t) { return b; }, 200, 1e-2);
  EXPECT_EQ(accuracy(model.run(b).metrics["cls"]), 1.0);
}

TEST(Decode, GreedyReproducesMemorizedSentence) {
  const std::size_t V = 16;
  Tiny model({layers::EmbeddingKind::kBert, V, 24, 16}, {enc(encoders::EncoderKind::kTransformer, 24)},
             spec_of("ae"), 6);
  auto sentence = ids({5, 9, 7, 11, 6});
  auto b = batch_of({text::make_ae_example(sentence, 16)});
  model.train([&](std::size_t) { return b; }, 300, 3e-3);
  const auto& ae = dynamic_cast<const Seq2SeqTarget&>(*model.targets().find(TargetKind::kAe));
  auto out = ae.greedy_decode(model.hidden(b), b.pad_mask(), 10);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], sentence);
}

}  // namespace
}  // namespace uer
