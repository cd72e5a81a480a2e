#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uer/numerics/adam.hpp"
#include "uer/pipeline/model.hpp"
#include "uer/text/examples.hpp"

namespace uer::pipeline {

struct TrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::size_t warmup = 0;
  double clip = 1.0;  // global gradient norm; 0 disables
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::filesystem::path output;      // checkpoint path; empty writes nothing
  std::filesystem::path metrics;     // one JSON record per logged step; empty writes nothing
  std::uint64_t seed = 1;            // batch order, masking and dropout
  text::MaskingConfig masking;
  double negative_rate = 0.5;  // nsp
  bool quiet = false;
};

// Yields training batches forever, reshuffling at every epoch boundary.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual text::Batch next(std::size_t batch_size, std::mt19937_64& rng) = 0;
};

// Fixed examples, optionally re-masked on every draw (dynamic masking).
class ExampleSource : public BatchSource {
 public:
  ExampleSource(std::vector<text::Example> examples, std::size_t vocab_size, bool mask,
                text::MaskingConfig masking = {});
  text::Batch next(std::size_t batch_size, std::mt19937_64& rng) override;
  std::size_t size() const { return examples_.size(); }

 private:
  std::vector<text::Example> examples_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t vocab_size_;
  bool mask_;
  text::MaskingConfig masking_;
};

// Sentence pairs drawn from documents (blank-line separated), optionally masked.
class DocumentSource : public BatchSource {
 public:
  DocumentSource(std::vector<text::Document> documents, std::size_t vocab_size, bool mask,
                 const TrainConfig& cfg, std::size_t max_length);
  text::Batch next(std::size_t batch_size, std::mt19937_64& rng) override;

 private:
  text::NspExampleStream stream_;
  std::size_t vocab_size_;
  bool mask_;
  text::MaskingConfig masking_;
};

// Picks the corpus reading that the spec's targets need:
//   nsp (+mlm)            documents, one sentence per line
//   mlm                   one sentence per line
//   lm / ae               one sentence per line
//   nmt                   source \t target
//   cls                   label \t text [\t text]
// mlm can ride along with ae, nmt or cls (their encoder input is masked).
// Any other combination is a ConfigError; unreadable rows are DataErrors.
std::unique_ptr<BatchSource> make_batch_source(const ModelSpec& spec, std::span<const std::string> lines,
                                               const text::Vocabulary& vocab, const TrainConfig& cfg);

struct TrainResult {
  std::vector<double> losses;  // one per update, in order
  std::size_t skipped = 0;     // batches where every target was empty
  std::size_t steps = 0;
  AdamState optimizer;
};

// batch -> forward -> combined loss -> backward -> clip -> Adam, `cfg.steps`
// times. Only parameters that require gradients are updated. Logs
// `step=<n> loss=<x> <kind>_loss=<x> <kind>_acc=<x>` every log_every steps to
// `log`. A non-finite loss raises NumericError naming step, lr and batch.
// `resume` continues an earlier optimizer state over the same parameters.
TrainResult train(Model& model, BatchSource& source, const TrainConfig& cfg, std::ostream& log,
                  const AdamState* resume = nullptr, std::uint64_t first_step = 0);

// Mean of the first and last `window` entries; used to judge loss decrease.
struct SmoothedLoss {
  double initial;
  double final;
};
SmoothedLoss smoothed_loss(std::span<const double> losses, std::size_t window = 20);

}  // namespace uer::pipeline
