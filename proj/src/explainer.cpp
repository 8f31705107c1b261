#include "crosse/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "crosse/parallel.hpp"

namespace crosse {

std::string to_string(PathType t) { return "T" + std::to_string(static_cast<int>(t)); }

PathType path_type_from_string(const std::string& s) {
    for (auto t : kPathTypes)
        if (to_string(t) == s) return t;
    throw Error("unknown path type '" + s + "'");
}

std::vector<Triple> instantiate(const PathPattern& p, EntityId from, EntityId to, EntityId via) {
    const RelationId rs = p.first;
    const RelationId r2 = p.second.value_or(-1);
    switch (p.type) {
        case PathType::T1: return {{from, rs, to}};
        case PathType::T2: return {{to, rs, from}};
        case PathType::T3: return {{via, rs, from}, {via, r2, to}};
        case PathType::T4: return {{via, rs, from}, {to, r2, via}};
        case PathType::T5: return {{from, rs, via}, {via, r2, to}};
        case PathType::T6: return {{from, rs, via}, {to, r2, via}};
    }
    return {};
}

namespace {

/// Known edges around one endpoint, keyed by the far entity.
using EdgeMap = std::unordered_map<EntityId, std::vector<RelationId>>;

EdgeMap neighbors(std::span<const Incident> edges, std::size_t forward, SplitMask known) {
    EdgeMap out;
    for (const auto& e : edges)
        if ((e.splits & known) && static_cast<std::size_t>(e.relation) < forward) out[e.entity].push_back(e.relation);
    return out;
}

bool uses_excluded(const std::vector<Triple>& edges, const std::optional<Triple>& exclude) {
    return exclude && std::find(edges.begin(), edges.end(), *exclude) != edges.end();
}

}  // namespace

std::vector<PathMatch> search_paths(const KnowledgeGraph& g, EntityId h, EntityId t,
                                    std::span<const RelationId> first_relations, SplitMask known,
                                    std::optional<Triple> exclude) {
    const std::size_t forward = g.num_forward_relations();
    std::vector<RelationId> firsts(first_relations.begin(), first_relations.end());
    std::sort(firsts.begin(), firsts.end());
    firsts.erase(std::unique(firsts.begin(), firsts.end()), firsts.end());

    // Bidirectional join: entities one hop from h via r_s meet entities one hop from t.
    const EdgeMap into_t = neighbors(g.in_edges(t), forward, known);   // (e', r', t)
    const EdgeMap out_of_t = neighbors(g.out_edges(t), forward, known); // (t, r', e')

    std::map<PathPattern, std::vector<EntityId>> found;
    auto record = [&](PathPattern pattern, EntityId via) {
        if (uses_excluded(instantiate(pattern, h, t, via), exclude)) return;
        auto& list = found[pattern];
        if (via >= 0) list.push_back(via);
    };

    for (RelationId rs : firsts) {
        if (rs < 0 || static_cast<std::size_t>(rs) >= forward) continue;
        if (g.contains({h, rs, t}, known)) record({PathType::T1, rs, std::nullopt}, -1);
        if (g.contains({t, rs, h}, known)) record({PathType::T2, rs, std::nullopt}, -1);

        auto join = [&](std::span<const Adjacent> side, PathType via_in, PathType via_out) {
            for (const auto& a : side) {
                if (!(a.splits & known)) continue;
                if (auto it = into_t.find(a.entity); it != into_t.end())
                    for (RelationId r2 : it->second) record({via_in, rs, r2}, a.entity);
                if (auto it = out_of_t.find(a.entity); it != out_of_t.end())
                    for (RelationId r2 : it->second) record({via_out, rs, r2}, a.entity);
            }
        };
        join(g.heads(rs, h), PathType::T3, PathType::T4);  // (e', r_s, h)
        join(g.tails(h, rs), PathType::T5, PathType::T6);  // (h, r_s, e')
    }

    std::vector<PathMatch> out;
    out.reserve(found.size());
    for (auto& [pattern, vias] : found) {
        std::sort(vias.begin(), vias.end());
        out.push_back({pattern, std::move(vias)});
    }
    return out;
}

std::vector<Support> find_supports(const KnowledgeGraph& g, const Triple& target, const PathPattern& path,
                                   std::span<const EntityId> similar_heads, SplitMask known,
                                   std::optional<Triple> exclude) {
    std::vector<Support> out;
    auto emit = [&](EntityId hs, EntityId ts, EntityId via) {
        auto witnesses = instantiate(path, hs, ts, via);
        witnesses.push_back({hs, target.relation, ts});
        if (uses_excluded(witnesses, exclude)) return;
        out.push_back({hs, ts, std::move(witnesses)});
    };
    const RelationId rs = path.first;
    for (EntityId hs : similar_heads) {
        if (hs == target.head) continue;
        for (const auto& tail : g.tails(hs, target.relation)) {
            if (!(tail.splits & known)) continue;
            const EntityId ts = tail.entity;
            switch (path.type) {
                case PathType::T1:
                    if (g.contains({hs, rs, ts}, known)) emit(hs, ts, -1);
                    break;
                case PathType::T2:
                    if (g.contains({ts, rs, hs}, known)) emit(hs, ts, -1);
                    break;
                case PathType::T3:
                case PathType::T4:
                    for (const auto& a : g.heads(rs, hs)) {
                        if (!(a.splits & known)) continue;
                        const Triple second = path.type == PathType::T3 ? Triple{a.entity, *path.second, ts}
                                                                        : Triple{ts, *path.second, a.entity};
                        if (g.contains(second, known)) emit(hs, ts, a.entity);
                    }
                    break;
                case PathType::T5:
                case PathType::T6:
                    for (const auto& a : g.tails(hs, rs)) {
                        if (!(a.splits & known)) continue;
                        const Triple second = path.type == PathType::T5 ? Triple{a.entity, *path.second, ts}
                                                                        : Triple{ts, *path.second, a.entity};
                        if (g.contains(second, known)) emit(hs, ts, a.entity);
                    }
                    break;
            }
        }
    }
    return out;
}

namespace {

template <typename Id>
std::vector<Id> nearest(std::vector<std::pair<double, Id>> scored, std::size_t k) {
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    std::vector<Id> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
    return out;
}

bool uses_interactions(ScoreMode mode) { return mode == ScoreMode::CrossE; }

}  // namespace

std::vector<RelationId> similar_relations(const ModelParams& p, EntityId h, RelationId r, std::size_t k,
                                          ScoreMode mode, std::size_t pool) {
    if (k < 1) throw Error("k_r must be at least 1");
    check_ids(p, h, r, mode);
    if (pool == 0 || pool > p.num_relations()) pool = p.num_relations();
    if (static_cast<std::size_t>(r) >= pool) throw Error("relation outside the candidate pool");
    if (k > pool) {
        std::clog << "warning: k_r=" << k << " exceeds the " << pool << " available relations; truncating\n";
        k = pool;
    }
    const std::size_t d = p.dim();
    const auto head = p.entities.row(static_cast<std::size_t>(h));
    auto embedding = [&](std::size_t x, std::size_t i) {
        const double rel = p.relations(x, i);
        return uses_interactions(mode) ? static_cast<double>(p.interactions(x, i)) * head[i] * rel : rel;
    };
    std::vector<std::pair<double, RelationId>> scored;
    scored.reserve(pool - 1);
    for (std::size_t x = 0; x < pool; ++x) {
        if (x == static_cast<std::size_t>(r)) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = embedding(x, i) - embedding(static_cast<std::size_t>(r), i);
            s += diff * diff;
        }
        scored.emplace_back(std::sqrt(s), static_cast<RelationId>(x));
    }
    std::vector<RelationId> out{r};
    for (RelationId x : nearest(std::move(scored), k - 1)) out.push_back(x);
    return out;
}

std::vector<EntityId> similar_entities(const ModelParams& p, EntityId h, RelationId r, std::size_t k,
                                       ScoreMode mode) {
    if (k < 1) throw Error("k_e must be at least 1");
    check_ids(p, h, r, mode);
    const std::size_t n = p.num_entities();
    if (k >= n) k = n - 1;
    const std::size_t d = p.dim();
    const auto head = p.entities.row(static_cast<std::size_t>(h));
    std::vector<double> weight(d, 1.0);
    if (uses_interactions(mode)) {
        const auto c = p.interactions.row(static_cast<std::size_t>(r));
        std::copy(c.begin(), c.end(), weight.begin());
    }
    std::vector<std::pair<double, EntityId>> scored;
    scored.reserve(n - 1);
    for (std::size_t e = 0; e < n; ++e) {
        if (e == static_cast<std::size_t>(h)) continue;
        const auto row = p.entities.row(e);
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = weight[i] * row[i] - weight[i] * head[i];
            s += diff * diff;
        }
        scored.emplace_back(std::sqrt(s), static_cast<EntityId>(e));
    }
    return nearest(std::move(scored), k);
}

std::vector<Explanation> explain_triple(const ModelParams& p, const KnowledgeGraph& g, const Triple& target,
                                        const ExplainOptions& options) {
    const std::size_t forward = g.num_forward_relations();
    if (target.relation < 0 || static_cast<std::size_t>(target.relation) >= forward)
        throw Error("explanations are searched for forward relations only");
    const auto relations = similar_relations(p, target.head, target.relation, options.k_r, options.mode, forward);
    const auto paths = search_paths(g, target.head, target.tail, relations, options.known, target);
    std::vector<Explanation> out;
    if (paths.empty()) return out;
    const auto heads = similar_entities(p, target.head, target.relation, options.k_e, options.mode);
    for (const auto& path : paths) {
        auto supports = find_supports(g, target, path.pattern, heads, options.known, target);
        if (!supports.empty()) out.push_back({target, path.pattern, std::move(supports)});
    }
    return out;
}

ExplanationMetrics summarize_explanations(std::span<const TripleExplanations> results, std::size_t triples) {
    ExplanationMetrics m;
    m.triples = triples;
    for (const auto& r : results) {
        if (r.explanations.empty()) continue;
        ++m.explained;
        for (const auto& e : r.explanations) {
            m.supports_by_type[type_index(e.path.type)] += e.supports.size();
            m.total_supports += e.supports.size();
        }
    }
    m.recall = triples == 0 ? 0.0 : static_cast<double>(m.explained) / static_cast<double>(triples);
    if (m.explained > 0) m.avg_support = static_cast<double>(m.total_supports) / static_cast<double>(m.explained);
    if (m.total_supports > 0)
        for (std::size_t i = 0; i < 6; ++i)
            m.share_by_type[i] = static_cast<double>(m.supports_by_type[i]) / static_cast<double>(m.total_supports);
    return m;
}

ExplanationRun evaluate_explanations(const ModelParams& p, const KnowledgeGraph& g, Split split,
                                     const ExplainOptions& options, std::size_t threads) {
    std::vector<Triple> targets;
    for (const auto& t : g.triples(split))
        if (static_cast<std::size_t>(t.relation) < g.num_forward_relations()) targets.push_back(t);
    std::vector<TripleExplanations> all(targets.size());
    parallel_for(targets.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) all[i] = {targets[i], explain_triple(p, g, targets[i], options)};
    });
    ExplanationRun run;
    run.metrics = summarize_explanations(all, targets.size());
    for (auto& r : all)
        if (!r.explanations.empty()) run.explained.push_back(std::move(r));
    return run;
}

// ---------------------------------------------------------------------------
// Dumps

void write_explanations_jsonl(const std::filesystem::path& path, std::span<const TripleExplanations> results,
                              const Dictionary* entities, const Dictionary* relations) {
    using nlohmann::json;
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    auto triple_json = [&](const Triple& t) {
        json j{{"h", t.head}, {"r", t.relation}, {"t", t.tail}};
        if (entities && relations) {
            j["h_label"] = entities->decode(t.head);
            j["r_label"] = relations->decode(t.relation);
            j["t_label"] = entities->decode(t.tail);
        }
        return j;
    };
    for (const auto& r : results) {
        if (r.explanations.empty()) continue;
        json exps = json::array();
        for (const auto& e : r.explanations) {
            json supports = json::array();
            for (const auto& s : e.supports) {
                json w = json::array();
                for (const auto& t : s.witnesses) w.push_back(triple_json(t));
                supports.push_back({{"similar_head", s.similar_head}, {"analog_tail", s.analog_tail}, {"witnesses", w}});
            }
            json ej{{"type", to_string(e.path.type)}, {"first_relation", e.path.first}, {"supports", supports}};
            ej["second_relation"] = e.path.second ? json(*e.path.second) : json(nullptr);
            if (relations) {
                ej["first_relation_label"] = relations->decode(e.path.first);
                if (e.path.second) ej["second_relation_label"] = relations->decode(*e.path.second);
            }
            exps.push_back(std::move(ej));
        }
        out << json{{"target", triple_json(r.target)}, {"explanations", exps}}.dump() << '\n';
    }
}

std::vector<TripleExplanations> read_explanations_jsonl(const std::filesystem::path& path) {
    using nlohmann::json;
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    auto triple_of = [](const json& j) {
        return Triple{j.at("h").get<EntityId>(), j.at("r").get<RelationId>(), j.at("t").get<EntityId>()};
    };
    std::vector<TripleExplanations> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto doc = json::parse(line);
            TripleExplanations te;
            te.target = triple_of(doc.at("target"));
            for (const auto& ej : doc.at("explanations")) {
                Explanation e;
                e.target = te.target;
                e.path.type = path_type_from_string(ej.at("type").get<std::string>());
                e.path.first = ej.at("first_relation").get<RelationId>();
                if (!ej.at("second_relation").is_null()) e.path.second = ej["second_relation"].get<RelationId>();
                for (const auto& sj : ej.at("supports")) {
                    Support s{sj.at("similar_head").get<EntityId>(), sj.at("analog_tail").get<EntityId>(), {}};
                    for (const auto& w : sj.at("witnesses")) s.witnesses.push_back(triple_of(w));
                    e.supports.push_back(std::move(s));
                }
                te.explanations.push_back(std::move(e));
            }
            out.push_back(std::move(te));
        } catch (const json::exception& ex) {
            throw ParseError(path.string(), lineno, ex.what());
        }
    }
    return out;
}

void write_explanation_metrics_tsv(const std::filesystem::path& path, std::span<const ExplanationMetricsRow> rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "k_r\tk_e\ttriples\texplained\trecall\tavg_support\ttotal_supports";
    for (auto t : kPathTypes) out << "\tshare_" << to_string(t);
    out << '\n' << std::setprecision(10);
    for (const auto& row : rows) {
        const auto& m = row.metrics;
        out << row.k_r << '\t' << row.k_e << '\t' << m.triples << '\t' << m.explained << '\t' << m.recall << '\t';
        if (m.avg_support)
            out << *m.avg_support;
        else
            out << "NA";
        out << '\t' << m.total_supports;
        for (double s : m.share_by_type) out << '\t' << s;
        out << '\n';
    }
}

std::vector<ExplanationMetricsRow> read_explanation_metrics_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("k_r\tk_e\t", 0) != 0) throw Error(path.string() + ": missing metrics header");
    std::vector<ExplanationMetricsRow> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ExplanationMetricsRow row{};
        std::string avg;
        auto& m = row.metrics;
        if (!(ls >> row.k_r >> row.k_e >> m.triples >> m.explained >> m.recall >> avg >> m.total_supports))
            throw ParseError(path.string(), lineno, "malformed metrics row");
        if (avg != "NA") m.avg_support = std::stod(avg);
        for (auto& s : m.share_by_type)
            if (!(ls >> s)) throw ParseError(path.string(), lineno, "missing type share");
        for (std::size_t i = 0; i < 6; ++i)
            m.supports_by_type[i] = static_cast<std::size_t>(std::llround(m.share_by_type[i] * static_cast<double>(m.total_supports)));
        out.push_back(row);
    }
    return out;
}

}  // namespace crosse
