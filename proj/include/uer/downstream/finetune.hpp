#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uer/downstream/metrics.hpp"
#include "uer/downstream/task.hpp"
#include "uer/pipeline/model.hpp"

namespace uer::downstream {

// Task model whose shared parameters come from `pretrained`; only target.*
// starts fresh. With no checkpoint the model is built from `base` alone
// (the non-pre-trained baseline).
std::unique_ptr<pipeline::Model> prepare_model(const std::optional<std::filesystem::path>& pretrained,
                                               const pipeline::ModelSpec& base, TaskKind kind,
                                               const std::vector<std::string>& labels,
                                               const text::Vocabulary& vocab, bool allow_vocab_mismatch = false);

struct FineTuneResult {
  Metrics best_dev;
  std::size_t best_epoch = 0;  // 1-based
  std::vector<Metrics> history;  // one per dev evaluation
  std::vector<double> losses;
};

// Trains the task head (feature strategy) or the whole model (full). Dev is
// evaluated every `eval_every` epochs; the best-scoring parameters are written
// to `output` (when given) and left in `model` at the end.
FineTuneResult fine_tune(pipeline::Model& model, const TaskConfig& task, const Dataset& train, const Dataset& dev,
                         const std::filesystem::path& output, std::ostream& log);

struct Prediction {
  int label = -1;                  // classification
  std::vector<double> probs;       // classification, sums to 1
  std::vector<int> tags;           // ner, one per word
};

// Deterministic (no dropout); padding never changes a row's result.
std::vector<Prediction> predict(const pipeline::Model& model, std::span<const text::Example> rows,
                                std::size_t batch_size = 32);

Metrics evaluate(const pipeline::Model& model, const Dataset& data, std::size_t batch_size = 32);

// Raw input lines through the model stored task: classify `text`, pair
// `textA\ttextB`, ner space-separated tokens. Writes one line per input:
// `<label>\t<prob>\t<all probs>` or space-separated tags. Overlong rows are
// truncated with a warning on `warn` (ner tags past the cut print as O).
void predict_lines(const pipeline::Model& model, const text::Vocabulary& vocab, std::span<const std::string> lines,
                   std::ostream& out, std::ostream& warn);

}  // namespace uer::downstream
