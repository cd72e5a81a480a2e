#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uer/downstream/finetune.hpp"
#include "uer/pipeline/train.hpp"

namespace uer::pipeline {

enum class StageInit {
  kPrevious,    // the checkpoint written by the stage before
  kRandom,      // fresh parameters from the spec's seed
  kCheckpoint,  // an existing file
};

struct PretrainStage {
  std::filesystem::path corpus;
  std::string targets;  // e.g. "mlm"; empty keeps the previous targets
  TrainConfig train;    // train.output is where this stage's checkpoint goes
  StageInit init = StageInit::kPrevious;
  std::filesystem::path checkpoint;  // for kCheckpoint
};

struct FinetuneStage {
  downstream::TaskConfig task;
  std::filesystem::path train;
  std::filesystem::path dev;
  std::filesystem::path output;
  StageInit init = StageInit::kPrevious;
  std::filesystem::path checkpoint;
};

// Up to two pre-training stages (general corpus, then in-domain corpus)
// followed by an optional fine-tuning stage. `spec` builds every randomly
// initialized stage.
struct StageSchedule {
  ModelSpec spec;
  std::vector<PretrainStage> pretrain;
  std::optional<FinetuneStage> finetune;
};

struct ScheduleResult {
  std::vector<std::filesystem::path> checkpoints;  // one per stage, in order
  std::vector<TrainResult> pretrain;
  std::optional<downstream::FineTuneResult> finetune;
};

// Runs the stages in order, handing each stage's checkpoint to the next.
// ConfigError for an empty or over-long schedule or a first stage that wants a
// previous checkpoint; DataError when an upstream checkpoint is missing.
ScheduleResult run_schedule(const StageSchedule& schedule, const text::Vocabulary& vocab, std::ostream& log);

}  // namespace uer::pipeline
