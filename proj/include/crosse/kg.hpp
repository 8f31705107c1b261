#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crosse/types.hpp"

namespace crosse {

/// Bijective label <-> dense id mapping. Ids are assigned in first-seen order.
class Dictionary {
public:
    /// Returns the id for `label`, inserting it if unknown.
    std::int32_t encode(std::string_view label);
    /// Lookup without insertion; -1 if unknown.
    std::int32_t find(std::string_view label) const;
    const std::string& decode(std::int32_t id) const;

    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    /// `label<TAB>id` lines, ids ascending.
    void save(const std::filesystem::path& path) const;
    static Dictionary load(const std::filesystem::path& path);

    friend bool operator==(const Dictionary& a, const Dictionary& b) { return a.labels_ == b.labels_; }

private:
    std::unordered_map<std::string, std::int32_t> ids_;
    std::vector<std::string> labels_;
};

/// Reads `head<TAB>relation<TAB>tail` lines (LF or CRLF). Blank lines are skipped.
std::vector<Triple> load_triples(const std::filesystem::path& path, Dictionary& entities,
                                 Dictionary& relations);

/// Writes triples back as labelled TSV.
void write_triples(const std::filesystem::path& path, std::span<const Triple> triples,
                   const Dictionary& entities, const Dictionary& relations);

/// Neighbor in a (head, relation) or (relation, tail) index, with the splits it belongs to.
struct Adjacent {
    EntityId entity;
    SplitMask splits;
};

/// Edge seen from one endpoint: (relation, other endpoint).
struct Incident {
    RelationId relation;
    EntityId entity;
    SplitMask splits;
};

struct BuildStats {
    std::array<std::size_t, 3> duplicates_dropped{};  // train, valid, test
};

/// Immutable triple store with the adjacency indexes used by training, evaluation and
/// explanation search. Triples present in several splits are indexed once with a combined
/// split mask.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Throws Error when an id is out of range. Duplicates within one split are dropped.
    static KnowledgeGraph build(std::size_t num_entities, std::size_t num_relations,
                                std::vector<Triple> train, std::vector<Triple> valid,
                                std::vector<Triple> test, BuildStats* stats = nullptr);

    std::size_t num_entities() const noexcept { return num_entities_; }
    /// Relation count including inverse relations when materialized.
    std::size_t num_relations() const noexcept { return num_relations_; }
    std::size_t num_forward_relations() const noexcept { return num_forward_relations_; }
    bool has_inverse_relations() const noexcept { return num_relations_ != num_forward_relations_; }

    /// Maps r to its inverse id (r + n_r) and back.
    RelationId inverse_of(RelationId r) const;

    const std::vector<Triple>& triples(Split s) const;

    /// Sorted by entity id.
    std::span<const Adjacent> tails(EntityId head, RelationId relation) const;
    std::span<const Adjacent> heads(RelationId relation, EntityId tail) const;
    /// Sorted by (relation, entity).
    std::span<const Incident> out_edges(EntityId head) const;
    std::span<const Incident> in_edges(EntityId tail) const;

    /// Split mask the triple belongs to; 0 if absent.
    SplitMask membership(const Triple& t) const;
    bool contains(const Triple& t, SplitMask splits) const { return (membership(t) & splits) != 0; }

    /// Returns a copy with (t, r + n_r, h) added for every (h, r, t) in the same split.
    KnowledgeGraph with_inverse_relations() const;

private:
    static std::uint64_t key(std::int32_t a, std::int32_t b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
               static_cast<std::uint32_t>(b);
    }
    void index();

    std::size_t num_entities_ = 0;
    std::size_t num_relations_ = 0;
    std::size_t num_forward_relations_ = 0;
    std::array<std::vector<Triple>, 3> splits_;
    std::unordered_map<std::uint64_t, std::vector<Adjacent>> index_hr_;
    std::unordered_map<std::uint64_t, std::vector<Adjacent>> index_rt_;
    std::vector<std::vector<Incident>> index_h_;
    std::vector<std::vector<Incident>> index_t_;
};

/// Free-function form of KnowledgeGraph::with_inverse_relations; rejects a second application.
KnowledgeGraph add_inverse_relations(const KnowledgeGraph& g);

}  // namespace crosse
