#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crosse/kg.hpp"
#include "crosse/model.hpp"

namespace crosse {

/// Closed-path shapes between h and t (e' is an intermediate entity):
///   T1: h -r_s-> t             T2: h <-r_s- t
///   T3: h <-r_s- e' -r'-> t    T4: h <-r_s- e' <-r'- t
///   T5: h -r_s-> e' -r'-> t    T6: h -r_s-> e' <-r'- t
enum class PathType { T1 = 1, T2, T3, T4, T5, T6 };

inline constexpr std::array<PathType, 6> kPathTypes{PathType::T1, PathType::T2, PathType::T3,
                                                    PathType::T4, PathType::T5, PathType::T6};

std::string to_string(PathType t);
PathType path_type_from_string(const std::string& s);
constexpr bool is_length_two(PathType t) { return t != PathType::T1 && t != PathType::T2; }
constexpr std::size_t type_index(PathType t) { return static_cast<std::size_t>(t) - 1; }

struct PathPattern {
    PathType type = PathType::T1;
    RelationId first = 0;                 // r_s, drawn from the similar-relation set
    std::optional<RelationId> second;     // r', length-two paths only

    friend bool operator==(const PathPattern&, const PathPattern&) = default;
    friend auto operator<=>(const PathPattern&, const PathPattern&) = default;
};

/// A path pattern found between h and t with every intermediate entity realizing it.
struct PathMatch {
    PathPattern pattern;
    std::vector<EntityId> intermediates;  // sorted; empty for T1/T2
};

/// The edges of `pattern` instantiated between `from` and `to` through `via`.
std::vector<Triple> instantiate(const PathPattern& pattern, EntityId from, EntityId to, EntityId via = -1);

/// All length-1 and length-2 closed paths from h to t whose first relation is in
/// `first_relations`. Edges must belong to `known`; `exclude` (the triple being explained)
/// is never used as an edge. Output is sorted by pattern.
std::vector<PathMatch> search_paths(const KnowledgeGraph& g, EntityId h, EntityId t,
                                    std::span<const RelationId> first_relations,
                                    SplitMask known = mask(Split::Train),
                                    std::optional<Triple> exclude = std::nullopt);

struct Support {
    EntityId similar_head;
    EntityId analog_tail;
    std::vector<Triple> witnesses;  // path edges, then (similar_head, r, analog_tail)

    friend bool operator==(const Support&, const Support&) = default;
};

/// One support per instantiation of `path` from a similar head h_s to some t_s with
/// (h_s, r, t_s) known. h_s equal to the target head is skipped.
std::vector<Support> find_supports(const KnowledgeGraph& g, const Triple& target, const PathPattern& path,
                                   std::span<const EntityId> similar_heads, SplitMask known = mask(Split::Train),
                                   std::optional<Triple> exclude = std::nullopt);

/// Top-k relations nearest to r among ids [0, pool) (pool 0 = all model relations). CrossE
/// compares interaction embeddings c_x o h o x anchored on h; other modes compare rows of R.
/// r itself always ranks first; remaining ties break by ascending id.
std::vector<RelationId> similar_relations(const ModelParams& p, EntityId h, RelationId r, std::size_t k,
                                          ScoreMode mode, std::size_t pool = 0);

/// Top-k entities nearest to h, excluding h. CrossE compares c_r o e against c_r o h; other
/// modes compare rows of E. Ties break by ascending id.
std::vector<EntityId> similar_entities(const ModelParams& p, EntityId h, RelationId r, std::size_t k,
                                       ScoreMode mode);

struct Explanation {
    Triple target;
    PathPattern path;
    std::vector<Support> supports;  // never empty
};

struct ExplainOptions {
    std::size_t k_r = 3;
    std::size_t k_e = 10;
    ScoreMode mode = ScoreMode::CrossE;
    SplitMask known = mask(Split::Train);
};

std::vector<Explanation> explain_triple(const ModelParams& p, const KnowledgeGraph& g, const Triple& target,
                                        const ExplainOptions& options);

struct TripleExplanations {
    Triple target;
    std::vector<Explanation> explanations;
};

struct ExplanationMetrics {
    std::size_t triples = 0;
    std::size_t explained = 0;
    std::size_t total_supports = 0;
    double recall = 0.0;
    std::optional<double> avg_support;  // absent when nothing was explained
    std::array<std::size_t, 6> supports_by_type{};
    std::array<double, 6> share_by_type{};
};

ExplanationMetrics summarize_explanations(std::span<const TripleExplanations> results, std::size_t triples);

struct ExplanationRun {
    ExplanationMetrics metrics;
    std::vector<TripleExplanations> explained;  // only triples with at least one explanation
};

ExplanationRun evaluate_explanations(const ModelParams& p, const KnowledgeGraph& g, Split split,
                                     const ExplainOptions& options, std::size_t threads = 1);

/// JSON lines, one object per explained triple. Labels are added when dictionaries are given.
void write_explanations_jsonl(const std::filesystem::path& path, std::span<const TripleExplanations> results,
                              const Dictionary* entities = nullptr, const Dictionary* relations = nullptr);
std::vector<TripleExplanations> read_explanations_jsonl(const std::filesystem::path& path);

struct ExplanationMetricsRow {
    std::size_t k_r;
    std::size_t k_e;
    ExplanationMetrics metrics;
};

void write_explanation_metrics_tsv(const std::filesystem::path& path, std::span<const ExplanationMetricsRow> rows);
std::vector<ExplanationMetricsRow> read_explanation_metrics_tsv(const std::filesystem::path& path);

}  // namespace crosse
