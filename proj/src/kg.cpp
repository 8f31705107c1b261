#include "crosse/kg.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <unordered_set>

namespace crosse {

namespace {

std::size_t split_index(Split s) {
    switch (s) {
        case Split::Train: return 0;
        case Split::Valid: return 1;
        case Split::Test: return 2;
    }
    throw Error("invalid split");
}

constexpr std::array<Split, 3> kSplits{Split::Train, Split::Valid, Split::Test};

const std::vector<Adjacent> kNoAdjacent;

}  // namespace

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "valid") return Split::Valid;
    if (name == "test") return Split::Test;
    throw Error("unknown split '" + name + "'");
}

std::int32_t Dictionary::encode(std::string_view label) {
    std::string key(label);
    auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(labels_.size());
    ids_.emplace(key, id);
    labels_.push_back(std::move(key));
    return id;
}

std::int32_t Dictionary::find(std::string_view label) const {
    auto it = ids_.find(std::string(label));
    return it == ids_.end() ? -1 : it->second;
}

const std::string& Dictionary::decode(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= labels_.size())
        throw Error("dictionary id " + std::to_string(id) + " out of range");
    return labels_[static_cast<std::size_t>(id)];
}

void Dictionary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < labels_.size(); ++i) out << labels_[i] << '\t' << i << '\n';
}

Dictionary Dictionary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    Dictionary dict;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) throw ParseError(path.string(), lineno, "expected label<TAB>id");
        const std::string label = line.substr(0, tab);
        long long id = -1;
        try {
            std::size_t used = 0;
            id = std::stoll(line.substr(tab + 1), &used);
            if (used != line.size() - tab - 1) id = -1;
        } catch (const std::exception&) {
            id = -1;
        }
        if (id != static_cast<long long>(dict.size()))
            throw ParseError(path.string(), lineno, "ids must be dense and ascending");
        if (dict.encode(label) != id) throw ParseError(path.string(), lineno, "duplicate label");
    }
    return dict;
}

std::vector<Triple> load_triples(const std::filesystem::path& path, Dictionary& entities,
                                 Dictionary& relations) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<Triple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto a = line.find('\t');
        const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
        if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos)
            throw ParseError(path.string(), lineno, "expected exactly 3 tab-separated fields");
        std::string_view view(line);
        const auto h = view.substr(0, a);
        const auto r = view.substr(a + 1, b - a - 1);
        const auto t = view.substr(b + 1);
        if (h.empty() || r.empty() || t.empty()) throw ParseError(path.string(), lineno, "empty field");
        Triple tr;
        tr.head = entities.encode(h);
        tr.relation = relations.encode(r);
        tr.tail = entities.encode(t);
        out.push_back(tr);
    }
    return out;
}

void write_triples(const std::filesystem::path& path, std::span<const Triple> triples,
                   const Dictionary& entities, const Dictionary& relations) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& t : triples)
        out << entities.decode(t.head) << '\t' << relations.decode(t.relation) << '\t'
            << entities.decode(t.tail) << '\n';
}

KnowledgeGraph KnowledgeGraph::build(std::size_t num_entities, std::size_t num_relations,
                                     std::vector<Triple> train, std::vector<Triple> valid,
                                     std::vector<Triple> test, BuildStats* stats) {
    if (num_entities == 0 || num_relations == 0) throw Error("knowledge graph needs entities and relations");
    KnowledgeGraph g;
    g.num_entities_ = num_entities;
    g.num_relations_ = num_relations;
    g.num_forward_relations_ = num_relations;
    std::array<std::vector<Triple>*, 3> inputs{&train, &valid, &test};
    BuildStats local;
    for (std::size_t s = 0; s < 3; ++s) {
        std::unordered_set<Triple> seen;
        auto& dst = g.splits_[s];
        dst.reserve(inputs[s]->size());
        for (const auto& t : *inputs[s]) {
            if (t.head < 0 || static_cast<std::size_t>(t.head) >= num_entities || t.tail < 0 ||
                static_cast<std::size_t>(t.tail) >= num_entities || t.relation < 0 ||
                static_cast<std::size_t>(t.relation) >= num_relations)
                throw Error("triple (" + std::to_string(t.head) + ", " + std::to_string(t.relation) +
                            ", " + std::to_string(t.tail) + ") out of range");
            if (seen.insert(t).second)
                dst.push_back(t);
            else
                ++local.duplicates_dropped[s];
        }
    }
    for (std::size_t s = 0; s < 3; ++s)
        if (local.duplicates_dropped[s] > 0)
            std::clog << "dropped " << local.duplicates_dropped[s] << " duplicate triples from "
                      << to_string(kSplits[s]) << '\n';
    if (stats) *stats = local;
    g.index();
    return g;
}

void KnowledgeGraph::index() {
    index_hr_.clear();
    index_rt_.clear();
    index_h_.assign(num_entities_, {});
    index_t_.assign(num_entities_, {});
    for (std::size_t s = 0; s < 3; ++s) {
        const auto bit = mask(kSplits[s]);
        for (const auto& t : splits_[s]) {
            index_hr_[key(t.head, t.relation)].push_back({t.tail, bit});
            index_rt_[key(t.relation, t.tail)].push_back({t.head, bit});
            index_h_[static_cast<std::size_t>(t.head)].push_back({t.relation, t.tail, bit});
            index_t_[static_cast<std::size_t>(t.tail)].push_back({t.relation, t.head, bit});
        }
    }
    auto merge_adjacent = [](std::vector<Adjacent>& v) {
        std::sort(v.begin(), v.end(), [](const Adjacent& a, const Adjacent& b) { return a.entity < b.entity; });
        std::size_t w = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (w > 0 && v[w - 1].entity == v[i].entity)
                v[w - 1].splits |= v[i].splits;
            else
                v[w++] = v[i];
        }
        v.resize(w);
    };
    auto merge_incident = [](std::vector<Incident>& v) {
        std::sort(v.begin(), v.end(), [](const Incident& a, const Incident& b) {
            return a.relation != b.relation ? a.relation < b.relation : a.entity < b.entity;
        });
        std::size_t w = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (w > 0 && v[w - 1].relation == v[i].relation && v[w - 1].entity == v[i].entity)
                v[w - 1].splits |= v[i].splits;
            else
                v[w++] = v[i];
        }
        v.resize(w);
    };
    for (auto& [_, v] : index_hr_) merge_adjacent(v);
    for (auto& [_, v] : index_rt_) merge_adjacent(v);
    for (auto& v : index_h_) merge_incident(v);
    for (auto& v : index_t_) merge_incident(v);
}

RelationId KnowledgeGraph::inverse_of(RelationId r) const {
    if (!has_inverse_relations()) throw Error("inverse relations are not materialized");
    const auto nr = static_cast<RelationId>(num_forward_relations_);
    if (r < 0 || r >= 2 * nr) throw Error("relation id out of range");
    return r < nr ? r + nr : r - nr;
}

const std::vector<Triple>& KnowledgeGraph::triples(Split s) const { return splits_[split_index(s)]; }

std::span<const Adjacent> KnowledgeGraph::tails(EntityId head, RelationId relation) const {
    auto it = index_hr_.find(key(head, relation));
    return it == index_hr_.end() ? std::span<const Adjacent>(kNoAdjacent) : std::span<const Adjacent>(it->second);
}

std::span<const Adjacent> KnowledgeGraph::heads(RelationId relation, EntityId tail) const {
    auto it = index_rt_.find(key(relation, tail));
    return it == index_rt_.end() ? std::span<const Adjacent>(kNoAdjacent) : std::span<const Adjacent>(it->second);
}

std::span<const Incident> KnowledgeGraph::out_edges(EntityId head) const {
    if (head < 0 || static_cast<std::size_t>(head) >= index_h_.size()) return {};
    return index_h_[static_cast<std::size_t>(head)];
}

std::span<const Incident> KnowledgeGraph::in_edges(EntityId tail) const {
    if (tail < 0 || static_cast<std::size_t>(tail) >= index_t_.size()) return {};
    return index_t_[static_cast<std::size_t>(tail)];
}

SplitMask KnowledgeGraph::membership(const Triple& t) const {
    const auto list = tails(t.head, t.relation);
    auto it = std::lower_bound(list.begin(), list.end(), t.tail,
                               [](const Adjacent& a, EntityId e) { return a.entity < e; });
    return it != list.end() && it->entity == t.tail ? it->splits : SplitMask{0};
}

KnowledgeGraph KnowledgeGraph::with_inverse_relations() const {
    if (has_inverse_relations()) throw Error("inverse relations already materialized");
    KnowledgeGraph g;
    g.num_entities_ = num_entities_;
    g.num_forward_relations_ = num_forward_relations_;
    g.num_relations_ = 2 * num_forward_relations_;
    const auto nr = static_cast<RelationId>(num_forward_relations_);
    for (std::size_t s = 0; s < 3; ++s) {
        auto& dst = g.splits_[s];
        dst.reserve(2 * splits_[s].size());
        dst = splits_[s];
        for (const auto& t : splits_[s]) dst.push_back({t.tail, t.relation + nr, t.head});
    }
    g.index();
    return g;
}

KnowledgeGraph add_inverse_relations(const KnowledgeGraph& g) { return g.with_inverse_relations(); }

}  // namespace crosse
