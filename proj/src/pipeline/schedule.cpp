#include "uer/pipeline/schedule.hpp"

#include <ostream>

#include "uer/error.hpp"
#include "uer/pipeline/checkpoint.hpp"

namespace uer::pipeline {

namespace {

std::optional<std::filesystem::path> upstream(StageInit init, const std::filesystem::path& explicit_path,
                                              const std::vector<std::filesystem::path>& done, std::size_t stage) {
  const std::string name = "stage " + std::to_string(stage);
  switch (init) {
    case StageInit::kRandom:
      return std::nullopt;
    case StageInit::kPrevious:
      if (done.empty()) throw ConfigError(name + " starts from a previous stage but none ran before it");
      return done.back();
    case StageInit::kCheckpoint:
      if (explicit_path.empty()) throw ConfigError(name + " starts from a checkpoint but none was named");
      return explicit_path;
  }
  return std::nullopt;
}

void require(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::exists(path)) throw DataError(what + " " + path.string() + " does not exist");
}

}  // namespace

ScheduleResult run_schedule(const StageSchedule& schedule, const text::Vocabulary& vocab, std::ostream& log) {
  const std::size_t stages = schedule.pretrain.size() + (schedule.finetune ? 1 : 0);
  if (stages == 0) throw ConfigError("the schedule has no stages");
  if (schedule.pretrain.size() > 2) throw ConfigError("at most two pre-training stages precede fine-tuning");
  for (const auto& s : schedule.pretrain) {
    if (s.train.output.empty()) throw ConfigError("every pre-training stage needs an output checkpoint");
  }
  if (schedule.finetune && schedule.finetune->output.empty()) {
    throw ConfigError("the fine-tuning stage needs an output checkpoint");
  }

  ScheduleResult result;
  std::size_t index = 0;
  for (const auto& stage : schedule.pretrain) {
    ++index;
    const auto from = upstream(stage.init, stage.checkpoint, result.checkpoints, index);
    require(stage.corpus, "corpus");
    std::unique_ptr<Model> model;
    if (from) {
      require(*from, "upstream checkpoint");
      ModelSpec spec = read_checkpoint(*from).spec;
      if (!stage.targets.empty()) {
        const std::size_t classes = spec.targets.classes;
        spec.targets = targets::parse_target_spec(stage.targets);
        spec.targets.classes = classes;
      }
      model = std::move(load_model(*from, vocab, spec).model);
    } else {
      ModelSpec spec = schedule.spec;
      if (!stage.targets.empty()) {
        const std::size_t classes = spec.targets.classes;
        spec.targets = targets::parse_target_spec(stage.targets);
        spec.targets.classes = classes;
      }
      model = assemble(spec, vocab);
    }
    const auto lines = text::read_lines(stage.corpus);
    auto source = make_batch_source(model->spec(), lines, vocab, stage.train);
    log << "stage " << index << ": pre-training " << targets::format_target_spec(model->spec().targets) << " on "
        << stage.corpus.string() << '\n';
    result.pretrain.push_back(train(*model, *source, stage.train, log));
    result.checkpoints.push_back(stage.train.output);
  }

  if (schedule.finetune) {
    const auto& f = *schedule.finetune;
    ++index;
    const auto from = upstream(f.init, f.checkpoint, result.checkpoints, index);
    if (from) require(*from, "upstream checkpoint");
    require(f.train, "training set");
    require(f.dev, "dev set");
    const ModelSpec base = from ? read_checkpoint(*from).spec : schedule.spec;
    const auto train_lines = text::read_lines(f.train);
    const auto labels = downstream::infer_labels(f.task.kind, train_lines, f.task.classes);
    auto model = downstream::prepare_model(from, base, f.task.kind, labels, vocab);
    const auto& spec = model->spec();
    const auto train_set =
        downstream::read_dataset(f.task.kind, train_lines, vocab, spec.tokenize, spec.max_length, labels);
    const auto dev_set = downstream::read_dataset(f.task.kind, text::read_lines(f.dev), vocab, spec.tokenize,
                                                  spec.max_length, labels);
    log << "stage " << index << ": fine-tuning " << downstream::to_string(f.task.kind) << " ("
        << downstream::to_string(f.task.strategy) << ")\n";
    result.finetune = downstream::fine_tune(*model, f.task, train_set, dev_set, f.output, log);
    result.checkpoints.push_back(f.output);
  }
  return result;
}

}  // namespace uer::pipeline
