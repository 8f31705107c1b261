#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crosse/kg.hpp"
#include "crosse/model.hpp"

namespace crosse {

enum class Direction { Head, Tail };
enum class RelationCategory { OneToOne, OneToMany, ManyToOne, ManyToMany };

std::string to_string(Direction d);
std::string to_string(RelationCategory c);

struct RankRecord {
    Triple triple;
    Direction direction;
    std::size_t raw_rank;
    std::size_t filtered_rank;

    friend bool operator==(const RankRecord&, const RankRecord&) = default;
};

struct Ranks {
    std::size_t raw;
    std::size_t filtered;
};

/// Rank of the true tail among all entities under (h, r, ?). Ties count against the target.
/// The filtered rank skips candidates e != t with (h, r, e) known in any split.
Ranks rank_tail(const ModelParams& p, const KnowledgeGraph& g, const Triple& t, ScoreMode mode);

/// Rank of the true head, scored as tail prediction for (t, r^-1, ?). Requires inverse rows in p.
Ranks rank_head(const ModelParams& p, const KnowledgeGraph& g, const Triple& t, ScoreMode mode);

struct Metrics {
    std::size_t count = 0;
    double mr = 0.0;
    double mrr = 0.0;
    double hit1 = 0.0;
    double hit3 = 0.0;
    double hit10 = 0.0;
};

Metrics aggregate_ranks(std::span<const std::size_t> ranks);

/// One row block of the metrics table. Empty bucket = all relations; empty direction = both.
struct MetricsGroup {
    std::optional<RelationCategory> bucket;
    std::optional<Direction> direction;
    Metrics raw;
    Metrics filtered;
};

struct MetricsTable {
    std::vector<MetricsGroup> groups;  // first group: all relations, both directions

    const MetricsGroup& overall() const { return groups.front(); }
    const MetricsGroup* find(std::optional<RelationCategory> bucket, std::optional<Direction> direction) const;
};

struct Evaluation {
    MetricsTable table;
    std::vector<RankRecord> records;  // per split triple: tail record, then head record
};

/// Ranks every triple of `split` in both directions. Throws Error on an empty split.
Evaluation evaluate(const ModelParams& p, const KnowledgeGraph& g, Split split, ScoreMode mode,
                    std::size_t threads = 1);

/// Builds the table from records alone (relation buckets from `categories`, indexed by relation).
MetricsTable tabulate(std::span<const RankRecord> records, std::span<const RelationCategory> categories);

/// Forward-relation cardinality buckets from train-split statistics (1.5 threshold on mean
/// tails-per-head and heads-per-tail). Relations unseen in train fall back to all splits.
std::vector<RelationCategory> classify_relations(const KnowledgeGraph& g);

struct RankSettings {
    bool raw = true;
    bool filter = true;
};

/// Parses "raw", "filter" or "raw,filter".
RankSettings parse_settings(const std::string& text);

/// TSV columns: metric, setting, bucket, direction, value.
void write_metrics_tsv(const std::filesystem::path& path, const MetricsTable& table, RankSettings settings);
void write_metrics_json(const std::filesystem::path& path, const MetricsTable& table, RankSettings settings);
MetricsTable read_metrics_json(const std::filesystem::path& path);

/// TSV `h r t direction raw filtered` with a header line; ids, not labels.
void write_rank_records(const std::filesystem::path& path, std::span<const RankRecord> records);
std::vector<RankRecord> read_rank_records(const std::filesystem::path& path);

}  // namespace crosse
