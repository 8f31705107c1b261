#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "crosse/kg.hpp"
#include "crosse/model.hpp"

namespace crosse {

struct TrainConfig {
    std::size_t d = 100;
    std::size_t n = 50;          // negatives per anchor
    double lr = 0.01;
    double lambda = 0.0;         // L2 weight
    std::size_t batch = 4000;
    std::size_t epochs = 500;
    double dropout = 0.5;        // drop probability on the query representation
    std::uint64_t seed = 1;
    ScoreMode mode = ScoreMode::CrossE;
    double margin = 1.0;         // TransE margin-ranking loss only
    std::size_t checkpoint_every = 0;  // 0: final checkpoint only
    std::size_t threads = 1;

    /// Throws Error describing the first violated constraint.
    void validate() const;
};

/// Thrown for unknown keys or unparsable values; `key()` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what) : Error(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
/// `key = value` per line; blank lines and `#` comments ignored.
TrainConfig parse_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_config(const TrainConfig& cfg);

struct TrainingExample {
    EntityId tail;
    bool positive;
};

/// Every known train tail of (h, r) labelled 1 plus sampled non-linked tails labelled 0.
struct TrainingBag {
    Triple anchor;
    std::vector<TrainingExample> examples;
    bool short_of_negatives = false;  // fewer than n non-linked entities existed
};

TrainingBag build_bag(const KnowledgeGraph& g, const Triple& anchor, std::size_t n, std::mt19937_64& rng);

/// Per-bag inverted-dropout mask over the query representation (entries 0 or 1/(1-p)).
using DropoutMask = std::vector<double>;
std::vector<DropoutMask> make_dropout_masks(std::size_t bags, std::size_t dim, double dropout,
                                            std::mt19937_64& rng);

/// Cross-entropy over all bag examples plus lambda * sum of squared parameters (margin ranking
/// for TransE). `masks` empty means evaluation mode.
double loss(const ModelParams& p, std::span<const TrainingBag> bags, const TrainConfig& cfg,
            std::span<const DropoutMask> masks = {});
double loss(const ModelParams& p, std::span<const TrainingBag> bags, const TrainConfig& cfg,
            std::mt19937_64& rng, bool train_mode);

/// Same shape as ModelParams, double precision. Tracks which rows received data gradient.
struct Gradient {
    std::size_t dim = 0;
    std::vector<double> entities, relations, interactions, bias;
    std::vector<std::uint8_t> entity_touched, relation_touched;

    static Gradient zeros_like(const ModelParams& p);
    /// Zeroes touched rows and the bias.
    void clear();
    /// Adds `other` over its touched rows.
    void add(const Gradient& other);
    bool all_finite() const;
};

enum class Regularization {
    Full,         // exact gradient of `loss`: 2 lambda theta everywhere
    TouchedRows,  // 2 lambda theta * scale on touched rows and the bias only
};

/// Adds the data-term gradient of `bags` into `out`.
void accumulate_data_gradient(const ModelParams& p, std::span<const TrainingBag> bags,
                              const TrainConfig& cfg, std::span<const DropoutMask> masks, Gradient& out);
void add_regularization(const ModelParams& p, double lambda, Regularization scope, double scale,
                        Gradient& out);

/// Exact gradient of `loss` for the same masks.
Gradient grad(const ModelParams& p, std::span<const TrainingBag> bags, const TrainConfig& cfg,
              std::span<const DropoutMask> masks = {});

struct AdamState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ModelParams& p);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// One bias-corrected Adam update. Throws Error (leaving p untouched) on a non-finite gradient.
void adam_step(ModelParams& p, const Gradient& g, AdamState& state, double lr);

struct TrainingState {
    ModelParams params;
    AdamState adam;
    std::size_t epoch = 0;  // completed epochs
    std::vector<double> losses;
};

struct TrainHooks {
    /// Called after each completed epoch.
    std::function<void(const TrainingState&)> on_epoch;
};

/// Trains on the train split. When the graph lacks inverse relations and `augment_inverse` is
/// set, (t, r^-1, h) triples are added first. Each epoch uses anchors in shuffled order from an
/// RNG seeded by (seed, epoch), so resuming from a saved state reproduces the same trajectory.
TrainingState train(const KnowledgeGraph& g, const TrainConfig& cfg, std::optional<TrainingState> resume = {},
                    const TrainHooks& hooks = {}, bool augment_inverse = true);

/// Evaluation-mode loss over every train anchor with bags drawn from a fixed stream.
double epoch_loss(const ModelParams& p, const KnowledgeGraph& g, const TrainConfig& cfg);

void save_training_state(const std::filesystem::path& dir, const TrainingState& state);
/// Restores Adam moments and the epoch counter; params come from the checkpoint in `dir`.
TrainingState load_training_state(const std::filesystem::path& dir, ModelParams params);

void write_loss_log(const std::filesystem::path& path, std::span<const double> losses);
std::vector<double> read_loss_log(const std::filesystem::path& path);

}  // namespace crosse
