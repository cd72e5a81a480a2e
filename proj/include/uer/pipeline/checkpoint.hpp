#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uer/numerics/adam.hpp"
#include "uer/pipeline/model.hpp"

namespace uer::pipeline {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "UERF" | u32 version | u64 n + n bytes of spec text
//   | u64 record count | records
// record: u32 n + name | u8 dtype (1 = f64) | u32 rank | rank x u64 extents | f64 payload
// The spec text is the model config plus `step = <n>`. Optimizer moments are
// stored as `optim.m.<name>` / `optim.v.<name>` records and `optim.t`.
struct Checkpoint {
  ModelSpec spec;
  std::string spec_text;
  std::uint64_t step = 0;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Model& model, std::uint64_t step = 0,
                     const AdamState* optimizer = nullptr);

// Reads and validates the whole file before returning; DataError on a bad
// magic, version, truncation, or malformed record.
Checkpoint read_checkpoint(const std::filesystem::path& path);

struct LoadReport {
  std::vector<std::string> loaded;  // copied from the checkpoint
  std::vector<std::string> fresh;   // kept at their initial values (target heads not in the file)
};

// Copies every checkpoint tensor whose name matches a model parameter. A
// missing or differently shaped parameter is only allowed under target.*;
// anywhere else it is a DataError naming expected vs found.
LoadReport load_parameters(Model& model, const Checkpoint& checkpoint);

// Adam moments for the model's parameter order, when the checkpoint has them.
std::optional<AdamState> load_optimizer(const Model& model, const Checkpoint& checkpoint, AdamHyper hyper);

// Reads the checkpoint, assembles its spec (with `targets` replacing the stored
// targets when given) and loads the parameters. The vocabulary must hash to
// the stored value unless allow_vocab_mismatch is set.
struct LoadedModel {
  std::unique_ptr<Model> model;
  Checkpoint checkpoint;
  LoadReport report;
};
LoadedModel load_model(const std::filesystem::path& path, const text::Vocabulary& vocab,
                       const std::optional<ModelSpec>& override_spec = std::nullopt,
                       bool allow_vocab_mismatch = false);

}  // namespace uer::pipeline
