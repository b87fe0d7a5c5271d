// Versioned JSON checkpoints holding every parameter tensor by group.
#pragma once

#include "tabgsl/tabdata.hpp"
#include "tabgsl/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace tabgsl {

inline constexpr const char* kCheckpointFormat = "tabgsl-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_json(const Model& model, const TabularDataset& ds,
                               const SplitIndices& split);
void save_checkpoint(const Model& model, const TabularDataset& ds, const SplitIndices& split,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model model;
  SplitIndices split;
};

/// Rebuilds the model for `ds` and overwrites its parameters. Throws
/// DataError on a format, version, shape or dataset mismatch.
LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j, const TabularDataset& ds);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const TabularDataset& ds);

}  // namespace tabgsl
