#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crosse/kg.hpp"
#include "crosse/model.hpp"

namespace crosse {

struct CheckpointMeta {
    std::size_t num_entities = 0;
    std::size_t num_relations = 0;  // effective count, inverse relations included
    std::size_t dim = 0;
    ScoreMode mode = ScoreMode::CrossE;
    std::uint64_t seed = 0;
};

struct Checkpoint {
    CheckpointMeta meta;
    ModelParams params;
    Dictionary entities;
    Dictionary relations;  // forward relation labels
};

/// Directory layout: `meta`, `E.f32`, `R.f32`, `C.f32` (omitted for TransE), `b.f32`,
/// `entities.dict`, `relations.dict`. Tensors are little-endian float32, row-major.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, ScoreMode mode,
                     std::uint64_t seed, const Dictionary& entities, const Dictionary& relations);

/// Validates tensor sizes against `meta` and the dictionaries.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected);

}  // namespace crosse
