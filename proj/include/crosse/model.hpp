#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crosse/matrix.hpp"
#include "crosse/types.hpp"

namespace crosse {

enum class ScoreMode {
    CrossE,   // sigma(tanh(c_r*h + c_r*h*r + b) . t)
    CrossE_S, // sigma(tanh(h + r + b) . t), no interaction embeddings
    TransE,   // -||h + r - t||
};

std::string to_string(ScoreMode mode);
ScoreMode score_mode_from_string(const std::string& name);

/// Learnable parameters. Stored as float32; all arithmetic on them is carried out in double.
struct ModelParams {
    Matrix entities;      // n_e x d, general entity embeddings
    Matrix relations;     // n_r x d, general relation embeddings (inverse relations included)
    Matrix interactions;  // n_r x d, one interaction vector per relation; empty for TransE checkpoints
    std::vector<float> bias;  // d

    std::size_t dim() const noexcept { return entities.cols(); }
    std::size_t num_entities() const noexcept { return entities.rows(); }
    std::size_t num_relations() const noexcept { return relations.rows(); }
    bool has_interactions() const noexcept { return !interactions.empty(); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using Vector = std::vector<double>;

/// E, R, C ~ U[-6/sqrt(d), 6/sqrt(d)], b = 0. Deterministic in `seed`.
ModelParams init_params(std::size_t num_entities, std::size_t num_relations, std::size_t dim,
                        std::uint64_t seed);

/// Half-width of the uniform initialization interval.
double init_bound(std::size_t dim);

/// c_r o h
Vector interaction_embedding_entity(const ModelParams& p, EntityId h, RelationId r);
/// c_r o h o r
Vector interaction_embedding_relation(const ModelParams& p, EntityId h, RelationId r);

/// Query representation compared against every tail: tanh(h_I + r_I + b) for CrossE,
/// tanh(h + r + b) for CrossE_S and h + r for TransE.
Vector query(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode);

/// Pre-activation plausibility: q . t for the CrossE modes, -||h + r - t|| for TransE.
/// Monotone in `score`, so ranking on it is equivalent and immune to sigmoid saturation.
double logit(const ModelParams& p, const Triple& t, ScoreMode mode);
double score(const ModelParams& p, const Triple& t, ScoreMode mode);

std::vector<double> logits_all_tails(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode);
std::vector<double> score_all_tails(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode);

/// (n_e + 2 n_r + 1) * d when C is present, counted from the stored tensors.
std::size_t param_count(const ModelParams& p);

bool all_finite(const ModelParams& p);

/// Throws Error unless h, r (and t when given) are valid row indices and `mode` has its tensors.
void check_ids(const ModelParams& p, EntityId h, RelationId r, ScoreMode mode);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double dot(std::span<const double> a, std::span<const float> b);

}  // namespace crosse
