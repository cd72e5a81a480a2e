#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uer/pipeline/model.hpp"
#include "uer/text/examples.hpp"

namespace uer::downstream {

enum class TaskKind { kClassify, kPair, kNer };
TaskKind parse_task_kind(std::string_view name);
std::string_view to_string(TaskKind kind);

enum class Strategy { kFull, kFeature };
Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy strategy);

struct TaskConfig {
  TaskKind kind = TaskKind::kClassify;
  std::size_t classes = 0;  // 0: one past the largest training label
  Strategy strategy = Strategy::kFull;
  std::size_t epochs = 3;
  std::size_t eval_every = 1;  // epochs between dev evaluations
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::size_t warmup = 0;
  double clip = 1.0;
  std::uint64_t seed = 1;
};

// Rows ready for collation. Classification rows carry class_label; ner rows
// carry one tag id per word in tag_labels ([CLS]/[SEP] ignored).
struct Dataset {
  TaskKind kind = TaskKind::kClassify;
  std::vector<text::Example> rows;
  std::size_t truncated = 0;  // rows cut to the model's length
};

// Label names, index = id. Classification: "0".."n-1" with n = `classes` or
// one past the largest label. ner: "O" first, then the other tags sorted.
std::vector<std::string> infer_labels(TaskKind kind, std::span<const std::string> lines, std::size_t classes = 0);

// Formats: classify `label\ttext`; pair `label\ttextA\ttextB`; ner one
// `token\ttag` per line with a blank line between sentences. A label outside
// `labels` or a tag that is not O / B-X / I-X is a DataError with its line.
Dataset read_dataset(TaskKind kind, std::span<const std::string> lines, const text::Vocabulary& vocab,
                     text::TokenizeMode mode, std::size_t max_length, const std::vector<std::string>& labels);

// Head for the task: cls (classify, pair) or tag (ner), weight 1, with the
// task and its labels recorded so a saved model can predict on its own.
pipeline::ModelSpec task_spec(pipeline::ModelSpec base, TaskKind kind, const std::vector<std::string>& labels);

}  // namespace uer::downstream
