#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crosse/explainer.hpp"
#include "crosse/kg.hpp"
#include "crosse/link_eval.hpp"
#include "crosse/trainer.hpp"

namespace crosse {

/// Toolkit version baked in at configure time.
std::string version();

struct DatasetStats {
    std::size_t entities = 0;
    std::size_t relations = 0;
    std::size_t train = 0;
    std::size_t valid = 0;
    std::size_t test = 0;
};

/// A prepared dataset directory: `entities.dict`, `relations.dict`, `triples.bin`.
struct Dataset {
    Dictionary entities;
    Dictionary relations;
    KnowledgeGraph graph;  // forward relations only
};

struct PrepOptions {
    std::filesystem::path train, valid, test;
    std::filesystem::path out;
};

/// Encodes the three triple files (ids in first-seen order: train, valid, test), writes the
/// dictionaries and a binary id-triple cache, and prints a statistics row.
DatasetStats cmd_prep(const PrepOptions& options, std::ostream& log);

Dataset load_dataset(const std::filesystem::path& dir);

void write_triple_cache(const std::filesystem::path& path, const KnowledgeGraph& g);

struct TrainCommand {
    std::filesystem::path data;
    std::filesystem::path out;  // checkpoint directory
    std::optional<std::filesystem::path> config;
    std::vector<std::pair<std::string, std::string>> overrides;  // applied after the config file
    bool resume = false;
};

/// Resolves defaults <- config file <- overrides.
TrainConfig resolve_config(const TrainCommand& command);

/// Writes `manifest.json` and `config.resolved` before training, then checkpoints (params,
/// optimizer state, `loss.tsv`) every `checkpoint_every` epochs and at the end.
TrainingState cmd_train(const TrainCommand& command, std::ostream& log);

struct EvalCommand {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    Split split = Split::Test;
    RankSettings settings;
    std::optional<ScoreMode> mode;  // defaults to the checkpoint's mode
    std::size_t threads = 1;
    std::filesystem::path out;
};

/// Writes `metrics.tsv`, `metrics.json` and `ranks.tsv` under `out`.
Evaluation cmd_eval(const EvalCommand& command, std::ostream& log);

struct ExplainCommand {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    Split split = Split::Test;
    std::vector<std::size_t> k_r{3};
    std::vector<std::size_t> k_e{10};
    std::optional<ScoreMode> mode;
    std::size_t threads = 1;
    std::filesystem::path out;
};

/// One `explanations_kr<k>_ke<k>.jsonl` dump per (k_r, k_e) pair plus `explain_metrics.tsv`.
std::vector<ExplanationMetricsRow> cmd_explain(const ExplainCommand& command, std::ostream& log);

/// "3", "1,2,5" or "1-5".
std::vector<std::size_t> parse_k_list(const std::string& text);

}  // namespace crosse
