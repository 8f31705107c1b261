#include "crosse/link_eval.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "crosse/parallel.hpp"

namespace crosse {

std::string to_string(Direction d) { return d == Direction::Head ? "head" : "tail"; }

std::string to_string(RelationCategory c) {
    switch (c) {
        case RelationCategory::OneToOne: return "1-1";
        case RelationCategory::OneToMany: return "1-N";
        case RelationCategory::ManyToOne: return "N-1";
        case RelationCategory::ManyToMany: return "N-N";
    }
    return "?";
}

namespace {

RelationCategory category_from_string(const std::string& s) {
    if (s == "1-1") return RelationCategory::OneToOne;
    if (s == "1-N") return RelationCategory::OneToMany;
    if (s == "N-1") return RelationCategory::ManyToOne;
    if (s == "N-N") return RelationCategory::ManyToMany;
    throw Error("unknown relation bucket '" + s + "'");
}

Direction direction_from_string(const std::string& s) {
    if (s == "head") return Direction::Head;
    if (s == "tail") return Direction::Tail;
    throw Error("unknown direction '" + s + "'");
}

Ranks rank_against(std::span<const double> logits, EntityId target, std::span<const Adjacent> known) {
    const double s = logits[static_cast<std::size_t>(target)];
    if (std::isnan(s)) {
        // Unscorable target: every competitor counts as ranked above it.
        std::size_t others = 0;
        for (const auto& a : known) others += a.entity != target;
        return {logits.size(), logits.size() - others};
    }
    std::size_t above = 0;
    for (std::size_t e = 0; e < logits.size(); ++e)
        if (logits[e] >= s && static_cast<EntityId>(e) != target) ++above;
    std::size_t filtered_out = 0;
    for (const auto& a : known)
        if (a.entity != target && logits[static_cast<std::size_t>(a.entity)] >= s) ++filtered_out;
    return {1 + above, 1 + above - filtered_out};
}

void check_forward(const KnowledgeGraph& g, const Triple& t) {
    if (t.relation < 0 || static_cast<std::size_t>(t.relation) >= g.num_forward_relations())
        throw Error("link evaluation expects forward relation ids");
}

}  // namespace

Ranks rank_tail(const ModelParams& p, const KnowledgeGraph& g, const Triple& t, ScoreMode mode) {
    check_forward(g, t);
    const auto logits = logits_all_tails(p, t.head, t.relation, mode);
    return rank_against(logits, t.tail, g.tails(t.head, t.relation));
}

Ranks rank_head(const ModelParams& p, const KnowledgeGraph& g, const Triple& t, ScoreMode mode) {
    check_forward(g, t);
    const auto nr = g.num_forward_relations();
    if (p.num_relations() < 2 * nr)
        throw Error("head prediction needs inverse relation rows: model has " + std::to_string(p.num_relations()) +
                    " relations, graph has " + std::to_string(nr) + " forward relations");
    const auto inverse = static_cast<RelationId>(static_cast<std::size_t>(t.relation) + nr);
    const auto logits = logits_all_tails(p, t.tail, inverse, mode);
    // Known (t, r^-1, e) triples are exactly the known (e, r, t) ones.
    return rank_against(logits, t.head, g.heads(t.relation, t.tail));
}

Metrics aggregate_ranks(std::span<const std::size_t> ranks) {
    Metrics m;
    m.count = ranks.size();
    if (ranks.empty()) return m;
    for (auto r : ranks) {
        m.mr += static_cast<double>(r);
        m.mrr += 1.0 / static_cast<double>(r);
        m.hit1 += r <= 1;
        m.hit3 += r <= 3;
        m.hit10 += r <= 10;
    }
    const auto n = static_cast<double>(ranks.size());
    m.mr /= n;
    m.mrr /= n;
    m.hit1 /= n;
    m.hit3 /= n;
    m.hit10 /= n;
    return m;
}

const MetricsGroup* MetricsTable::find(std::optional<RelationCategory> bucket,
                                       std::optional<Direction> direction) const {
    for (const auto& g : groups)
        if (g.bucket == bucket && g.direction == direction) return &g;
    return nullptr;
}

MetricsTable tabulate(std::span<const RankRecord> records, std::span<const RelationCategory> categories) {
    constexpr std::array<std::optional<RelationCategory>, 5> buckets{
        std::nullopt, RelationCategory::OneToOne, RelationCategory::OneToMany, RelationCategory::ManyToOne,
        RelationCategory::ManyToMany};
    constexpr std::array<std::optional<Direction>, 3> directions{std::nullopt, Direction::Head, Direction::Tail};
    MetricsTable table;
    for (const auto& bucket : buckets) {
        for (const auto& direction : directions) {
            std::vector<std::size_t> raw, filtered;
            for (const auto& rec : records) {
                if (direction && rec.direction != *direction) continue;
                if (bucket) {
                    const auto r = static_cast<std::size_t>(rec.triple.relation);
                    if (r >= categories.size() || categories[r] != *bucket) continue;
                }
                raw.push_back(rec.raw_rank);
                filtered.push_back(rec.filtered_rank);
            }
            table.groups.push_back({bucket, direction, aggregate_ranks(raw), aggregate_ranks(filtered)});
        }
    }
    return table;
}

Evaluation evaluate(const ModelParams& p, const KnowledgeGraph& g, Split split, ScoreMode mode,
                    std::size_t threads) {
    std::vector<Triple> targets;
    for (const auto& t : g.triples(split))
        if (static_cast<std::size_t>(t.relation) < g.num_forward_relations()) targets.push_back(t);
    if (targets.empty()) throw Error("cannot evaluate an empty " + to_string(split) + " split");
    Evaluation out;
    out.records.resize(2 * targets.size());
    parallel_for(targets.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& t = targets[i];
            const auto tail = rank_tail(p, g, t, mode);
            const auto head = rank_head(p, g, t, mode);
            out.records[2 * i] = {t, Direction::Tail, tail.raw, tail.filtered};
            out.records[2 * i + 1] = {t, Direction::Head, head.raw, head.filtered};
        }
    });
    out.table = tabulate(out.records, classify_relations(g));
    return out;
}

std::vector<RelationCategory> classify_relations(const KnowledgeGraph& g) {
    const std::size_t nr = g.num_forward_relations();
    struct Counts {
        std::unordered_map<EntityId, std::size_t> tails_per_head, heads_per_tail;
        std::size_t triples = 0;
    };
    auto collect = [&](SplitMask splits) {
        std::vector<Counts> counts(nr);
        for (Split s : {Split::Train, Split::Valid, Split::Test}) {
            if (!(splits & mask(s))) continue;
            for (const auto& t : g.triples(s)) {
                if (static_cast<std::size_t>(t.relation) >= nr) continue;
                auto& c = counts[static_cast<std::size_t>(t.relation)];
                // A triple seen in an earlier selected split is not counted twice.
                const SplitMask earlier = g.membership(t) & splits & static_cast<SplitMask>(mask(s) - 1);
                if (earlier) continue;
                ++c.tails_per_head[t.head];
                ++c.heads_per_tail[t.tail];
                ++c.triples;
            }
        }
        return counts;
    };
    const auto train = collect(mask(Split::Train));
    std::optional<std::vector<Counts>> everything;
    std::vector<RelationCategory> out(nr, RelationCategory::OneToOne);
    std::size_t fallbacks = 0;
    for (std::size_t r = 0; r < nr; ++r) {
        const Counts* c = &train[r];
        if (c->triples == 0) {
            if (!everything) everything = collect(kAllSplits);
            c = &(*everything)[r];
            ++fallbacks;
            if (c->triples == 0) continue;
        }
        const double tph = static_cast<double>(c->triples) / static_cast<double>(c->tails_per_head.size());
        const double hpt = static_cast<double>(c->triples) / static_cast<double>(c->heads_per_tail.size());
        if (tph < 1.5 && hpt < 1.5)
            out[r] = RelationCategory::OneToOne;
        else if (hpt < 1.5)
            out[r] = RelationCategory::OneToMany;
        else if (tph < 1.5)
            out[r] = RelationCategory::ManyToOne;
        else
            out[r] = RelationCategory::ManyToMany;
    }
    if (fallbacks > 0)
        std::clog << "warning: " << fallbacks << " relations have no train triples; classified from all splits\n";
    return out;
}

RankSettings parse_settings(const std::string& text) {
    RankSettings s{false, false};
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item == "raw") s.raw = true;
        else if (item == "filter") s.filter = true;
        else throw Error("unknown ranking setting '" + item + "' (expected raw and/or filter)");
    }
    if (!s.raw && !s.filter) throw Error("no ranking setting selected");
    return s;
}

namespace {

std::string bucket_label(const std::optional<RelationCategory>& b) { return b ? to_string(*b) : "all"; }
std::string direction_label(const std::optional<Direction>& d) { return d ? to_string(*d) : "both"; }

nlohmann::json metrics_json(const Metrics& m) {
    return {{"count", m.count}, {"MR", m.mr}, {"MRR", m.mrr}, {"Hit@1", m.hit1}, {"Hit@3", m.hit3}, {"Hit@10", m.hit10}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
    Metrics m;
    m.count = j.at("count").get<std::size_t>();
    m.mr = j.at("MR").get<double>();
    m.mrr = j.at("MRR").get<double>();
    m.hit1 = j.at("Hit@1").get<double>();
    m.hit3 = j.at("Hit@3").get<double>();
    m.hit10 = j.at("Hit@10").get<double>();
    return m;
}

}  // namespace

void write_metrics_tsv(const std::filesystem::path& path, const MetricsTable& table, RankSettings settings) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "metric\tsetting\tbucket\tdirection\tvalue\n" << std::setprecision(10);
    for (const auto& g : table.groups) {
        for (int which = 0; which < 2; ++which) {
            if (which == 0 && !settings.raw) continue;
            if (which == 1 && !settings.filter) continue;
            const Metrics& m = which == 0 ? g.raw : g.filtered;
            const char* setting = which == 0 ? "raw" : "filter";
            const std::pair<const char*, double> rows[] = {{"count", static_cast<double>(m.count)},
                                                           {"MR", m.mr},
                                                           {"MRR", m.mrr},
                                                           {"Hit@1", m.hit1},
                                                           {"Hit@3", m.hit3},
                                                           {"Hit@10", m.hit10}};
            for (const auto& [name, value] : rows)
                out << name << '\t' << setting << '\t' << bucket_label(g.bucket) << '\t'
                    << direction_label(g.direction) << '\t' << value << '\n';
        }
    }
}

void write_metrics_json(const std::filesystem::path& path, const MetricsTable& table, RankSettings settings) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : table.groups) {
        nlohmann::json entry{{"bucket", bucket_label(g.bucket)}, {"direction", direction_label(g.direction)}};
        if (settings.raw) entry["raw"] = metrics_json(g.raw);
        if (settings.filter) entry["filter"] = metrics_json(g.filtered);
        groups.push_back(std::move(entry));
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << nlohmann::json{{"groups", groups}}.dump(2) << '\n';
}

MetricsTable read_metrics_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    const auto doc = nlohmann::json::parse(in);
    MetricsTable table;
    for (const auto& e : doc.at("groups")) {
        MetricsGroup g;
        const auto bucket = e.at("bucket").get<std::string>();
        const auto direction = e.at("direction").get<std::string>();
        if (bucket != "all") g.bucket = category_from_string(bucket);
        if (direction != "both") g.direction = direction_from_string(direction);
        if (e.contains("raw")) g.raw = metrics_from_json(e["raw"]);
        if (e.contains("filter")) g.filtered = metrics_from_json(e["filter"]);
        table.groups.push_back(g);
    }
    if (table.groups.empty()) throw Error(path.string() + ": no metric groups");
    return table;
}

void write_rank_records(const std::filesystem::path& path, std::span<const RankRecord> records) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "h\tr\tt\tdirection\traw\tfiltered\n";
    for (const auto& r : records)
        out << r.triple.head << '\t' << r.triple.relation << '\t' << r.triple.tail << '\t' << to_string(r.direction)
            << '\t' << r.raw_rank << '\t' << r.filtered_rank << '\n';
}

std::vector<RankRecord> read_rank_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "h\tr\tt\tdirection\traw\tfiltered") throw Error(path.string() + ": missing rank record header");
    std::vector<RankRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        RankRecord r{};
        std::string dir;
        if (!(ls >> r.triple.head >> r.triple.relation >> r.triple.tail >> dir >> r.raw_rank >> r.filtered_rank))
            throw ParseError(path.string(), lineno, "malformed rank record");
        r.direction = direction_from_string(dir);
        out.push_back(r);
    }
    return out;
}

}  // namespace crosse
