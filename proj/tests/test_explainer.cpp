#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "crosse/explainer.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace crosse;
namespace fs = std::filesystem;

namespace {

std::set<Triple> train_set(const KnowledgeGraph& g) {
    return {g.triples(Split::Train).begin(), g.triples(Split::Train).end()};
}

/// Labelled mini-graph builder for the hand-written examples.
struct Builder {
    Dictionary ent, rel;
    std::vector<Triple> train, test;

    Triple triple(const std::string& h, const std::string& r, const std::string& t) {
        return {ent.encode(h), rel.encode(r), ent.encode(t)};
    }
    void add(const std::string& h, const std::string& r, const std::string& t) { train.push_back(triple(h, r, t)); }
    KnowledgeGraph build() const { return KnowledgeGraph::build(ent.size(), rel.size(), train, {}, test); }
};

struct Table2Row {
    PathType type;
    std::vector<std::array<std::string, 3>> facts;  // explanation path + support structure
    std::array<std::string, 3> predicted;
    std::string first, second;  // path relations
    std::string similar_head;
    std::vector<std::array<std::string, 3>> support;  // expected witnesses, path first
};

}  // namespace

TEST_CASE("path instantiation shapes") {
    const PathPattern t3{PathType::T3, 4, 7};
    CHECK(instantiate(t3, 1, 2, 9) == std::vector<Triple>{{9, 4, 1}, {9, 7, 2}});
    CHECK(instantiate({PathType::T2, 3, std::nullopt}, 1, 2) == std::vector<Triple>{{2, 3, 1}});
    for (auto t : kPathTypes) CHECK(path_type_from_string(to_string(t)) == t);
    CHECK_FALSE(is_length_two(PathType::T2));
    CHECK(is_length_two(PathType::T6));
}

TEST_CASE("single-edge and single-hop graphs give one path") {
    // h=0, t=1, e'=2; relations r_s=0, r'=1
    auto g1 = KnowledgeGraph::build(3, 2, {{0, 0, 1}}, {}, {});
    std::vector<RelationId> sr{0};
    auto p1 = search_paths(g1, 0, 1, sr);
    REQUIRE(p1.size() == 1);
    CHECK(p1[0].pattern == PathPattern{PathType::T1, 0, std::nullopt});
    CHECK(p1[0].intermediates.empty());

    auto g5 = KnowledgeGraph::build(3, 2, {{0, 0, 2}, {2, 1, 1}}, {}, {});
    auto p5 = search_paths(g5, 0, 1, sr);
    REQUIRE(p5.size() == 1);
    CHECK(p5[0].pattern == PathPattern{PathType::T5, 0, 1});
    CHECK(p5[0].intermediates == std::vector<EntityId>{2});

    // First relation outside S_r: nothing.
    std::vector<RelationId> other{1};
    CHECK(search_paths(g5, 0, 1, other).empty());
    // Disconnected pair.
    CHECK(search_paths(g5, 1, 0, sr).empty());
}

TEST_CASE("path search equals exhaustive enumeration on random graphs") {
    std::mt19937_64 rng(314);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t ne = 10 + trial % 20, nr = 2 + trial % 4;
        auto g = synthetic::random_graph(ne, nr, 3 * ne, 0, 10, rng);
        const auto K = train_set(g);
        std::uniform_int_distribution<EntityId> pick_e(0, static_cast<EntityId>(ne - 1));
        std::uniform_int_distribution<RelationId> pick_r(0, static_cast<RelationId>(nr - 1));
        for (int probe = 0; probe < 10; ++probe) {
            std::vector<RelationId> sr{pick_r(rng), pick_r(rng)};
            const auto& base = g.triples(Split::Train)[static_cast<std::size_t>(probe) % K.size()];
            const EntityId h = probe % 2 ? base.head : pick_e(rng);
            const EntityId t = probe % 2 ? base.tail : pick_e(rng);
            const auto lib = oracle::flatten(search_paths(g, h, t, sr));
            CHECK(lib == oracle::enumerate_paths(K, ne, nr, h, t, sr));
            const auto excl = oracle::flatten(search_paths(g, h, t, sr, mask(Split::Train), base));
            CHECK(excl == oracle::enumerate_paths(K, ne, nr, h, t, sr, base));
        }
    }
}

TEST_CASE("published example structures are recovered for every path type") {
    const std::vector<Table2Row> rows{
        {PathType::T1,
         {{"Mel Gibson", "awards won", "Best Director"},
          {"Vangelis", "award nominations", "Best Original Musical"},
          {"Vangelis", "awards won", "Best Original Musical"}},
         {"Mel Gibson", "award nominations", "Best Director"},
         "awards won", "", "Vangelis",
         {{"Vangelis", "awards won", "Best Original Musical"},
          {"Vangelis", "award nominations", "Best Original Musical"}}},
        {PathType::T2,
         {{"Kings of Leon", "influenced by", "Aretha Franklin"},
          {"Michael Jackson", "influenced", "Lady Gaga"},
          {"Lady Gaga", "influenced by", "Michael Jackson"}},
         {"Aretha Franklin", "influenced", "Kings of Leon"},
         "influenced by", "", "Michael Jackson",
         {{"Lady Gaga", "influenced by", "Michael Jackson"}, {"Michael Jackson", "influenced", "Lady Gaga"}}},
        {PathType::T3,
         {{"Auburn", "capital of", "Cayuga County"},
          {"Auburn", "containedby", "New York"},
          {"Onondaga County", "containedby", "New York"},
          {"Syracuse", "capital of", "Onondaga County"},
          {"Syracuse", "containedby", "New York"}},
         {"Cayuga County", "containedby", "New York"},
         "capital of", "containedby", "Onondaga County",
         {{"Syracuse", "capital of", "Onondaga County"},
          {"Syracuse", "containedby", "New York"},
          {"Onondaga County", "containedby", "New York"}}},
        {PathType::T4,
         {{"Columbia", "state", "South Carolina"},
          {"USA", "contains", "Columbia"},
          {"Mississippi", "country", "USA"},
          {"Jackson", "state", "Mississippi"},
          {"USA", "contains", "Jackson"}},
         {"South Carolina", "country", "USA"},
         "state", "contains", "Mississippi",
         {{"Jackson", "state", "Mississippi"}, {"USA", "contains", "Jackson"}, {"Mississippi", "country", "USA"}}},
        {PathType::T5,
         {{"World War I", "commanders", "Erich Ludendorff"},
          {"Erich Ludendorff", "military commands", "German Empire"},
          {"Falklands War", "entity involved", "United Kingdom"},
          {"Falklands War", "commanders", "Margaret Thatcher"},
          {"Margaret Thatcher", "military commands", "United Kingdom"}},
         {"World War I", "entity involved", "German Empire"},
         "commanders", "military commands", "Falklands War",
         {{"Falklands War", "commanders", "Margaret Thatcher"},
          {"Margaret Thatcher", "military commands", "United Kingdom"},
          {"Falklands War", "entity involved", "United Kingdom"}}},
        {PathType::T6,
         {{"Northwestern University", "specialization", "Artificial intelligence"},
          {"Computer Science", "specialization", "Artificial intelligence"},
          {"Stockholm University", "major field of study", "Philosophy"},
          {"Stockholm University", "specialization", "Political philosophy"},
          {"Philosophy", "specialization", "Political philosophy"}},
         {"Northwestern University", "major field of study", "Computer Science"},
         "specialization", "specialization", "Stockholm University",
         {{"Stockholm University", "specialization", "Political philosophy"},
          {"Philosophy", "specialization", "Political philosophy"},
          {"Stockholm University", "major field of study", "Philosophy"}}},
    };

    for (const auto& row : rows) {
        CAPTURE(to_string(row.type));
        Builder b;
        for (const auto& f : row.facts) b.add(f[0], f[1], f[2]);
        const Triple target = b.triple(row.predicted[0], row.predicted[1], row.predicted[2]);
        b.test.push_back(target);
        const PathPattern expected{row.type, b.rel.find(row.first),
                                   row.second.empty() ? std::nullopt : std::optional<RelationId>(b.rel.find(row.second))};
        const auto g = b.build();

        std::vector<RelationId> sr{expected.first};
        const auto paths = search_paths(g, target.head, target.tail, sr);
        REQUIRE(paths.size() == 1);
        CHECK(paths[0].pattern == expected);

        std::vector<EntityId> sh{b.ent.find(row.similar_head)};
        const auto supports = find_supports(g, target, expected, sh);
        REQUIRE(supports.size() == 1);
        std::vector<Triple> witnesses;
        for (const auto& w : row.support) witnesses.push_back(b.triple(w[0], w[1], w[2]));
        CHECK(supports[0].witnesses == witnesses);
        CHECK(supports[0].similar_head == sh[0]);
        for (const auto& w : supports[0].witnesses) CHECK(g.contains(w, mask(Split::Train)));
    }
}

TEST_CASE("no supports when the similar head lacks the target relation") {
    Builder b;
    b.add("h", "rs", "t");
    b.add("x", "rs", "y");
    b.add("z", "r", "y");
    const Triple target = b.triple("h", "r", "t");
    const auto g = b.build();
    std::vector<EntityId> sh{b.ent.find("x")};
    CHECK(find_supports(g, target, {PathType::T1, b.rel.find("rs"), std::nullopt}, sh).empty());
}

TEST_CASE("find_supports equals brute-force pattern matching") {
    std::mt19937_64 rng(2718);
    std::size_t checked = 0;
    for (int trial = 0; trial < 80; ++trial) {
        const std::size_t ne = 12, nr = 3;
        auto g = synthetic::random_graph(ne, nr, 45, 0, 0, rng);
        const auto K = train_set(g);
        std::uniform_int_distribution<EntityId> pick_e(0, static_cast<EntityId>(ne - 1));
        std::uniform_int_distribution<RelationId> pick_r(0, static_cast<RelationId>(nr - 1));
        std::uniform_int_distribution<int> pick_t(1, 6);
        const Triple target{pick_e(rng), pick_r(rng), pick_e(rng)};
        std::vector<EntityId> sh;
        for (int i = 0; i < 6; ++i) sh.push_back(pick_e(rng));
        std::sort(sh.begin(), sh.end());
        sh.erase(std::unique(sh.begin(), sh.end()), sh.end());
        const auto type = static_cast<PathType>(pick_t(rng));
        const PathPattern path{type, pick_r(rng), is_length_two(type) ? std::optional<RelationId>(pick_r(rng)) : std::nullopt};

        const auto supports = find_supports(g, target, path, sh);
        std::multiset<std::tuple<EntityId, EntityId, EntityId>> got;
        for (const auto& s : supports) {
            EntityId via = -1;
            if (is_length_two(type)) {
                const auto& first = s.witnesses[0];
                via = (type == PathType::T3 || type == PathType::T4) ? first.head : first.tail;
            }
            got.insert({s.similar_head, s.analog_tail, via});
            CHECK(s.similar_head != target.head);
            for (const auto& w : s.witnesses) CHECK(K.count(w) == 1);
            CHECK(s.witnesses.back() == Triple{s.similar_head, target.relation, s.analog_tail});
        }
        CHECK(got == oracle::match_supports(K, ne, target, path, sh));
        checked += supports.size();
    }
    CHECK(checked > 20);
}

TEST_CASE("similar relations and entities") {
    std::mt19937_64 rng(6);
    SUBCASE("self-similarity and brute-force order") {
        for (int trial = 0; trial < 20; ++trial) {
            auto p = synthetic::random_params(8, 6, 4, rng);
            const EntityId h = static_cast<EntityId>(trial % 8);
            const RelationId r = static_cast<RelationId>(trial % 6);
            CHECK(similar_relations(p, h, r, 1, ScoreMode::CrossE) == std::vector<RelationId>{r});

            std::vector<std::vector<double>> inter, general;
            for (RelationId x = 0; x < 6; ++x) {
                inter.push_back(interaction_embedding_relation(p, h, x));
                general.emplace_back(p.relations.row(static_cast<std::size_t>(x)).begin(),
                                     p.relations.row(static_cast<std::size_t>(x)).end());
            }
            CHECK(similar_relations(p, h, r, 4, ScoreMode::CrossE) == oracle::nearest_by_sort(inter, r, 4, true));
            CHECK(similar_relations(p, h, r, 4, ScoreMode::TransE) == oracle::nearest_by_sort(general, r, 4, true));
            CHECK(similar_relations(p, h, r, 4, ScoreMode::CrossE_S) == oracle::nearest_by_sort(general, r, 4, true));

            std::vector<std::vector<double>> ent_inter, ent_general;
            for (EntityId e = 0; e < 8; ++e) {
                ent_inter.push_back(interaction_embedding_entity(p, e, r));
                ent_general.emplace_back(p.entities.row(static_cast<std::size_t>(e)).begin(),
                                         p.entities.row(static_cast<std::size_t>(e)).end());
            }
            const auto se = similar_entities(p, h, r, 5, ScoreMode::CrossE);
            CHECK(se == oracle::nearest_by_sort(ent_inter, h, 5, false));
            CHECK(similar_entities(p, h, r, 5, ScoreMode::TransE) == oracle::nearest_by_sort(ent_general, h, 5, false));
            CHECK(std::find(se.begin(), se.end(), h) == se.end());
        }
    }
    SUBCASE("identical relation rows are mutually nearest") {
        auto p = synthetic::random_params(5, 6, 4, rng);
        for (std::size_t k = 0; k < 4; ++k) {
            p.relations(4, k) = p.relations(1, k);
            p.interactions(4, k) = p.interactions(1, k);
        }
        CHECK(similar_relations(p, 2, 1, 2, ScoreMode::CrossE) == std::vector<RelationId>{1, 4});
        CHECK(similar_relations(p, 2, 4, 2, ScoreMode::CrossE) == std::vector<RelationId>{4, 1});
    }
    SUBCASE("identical entity row ranks first; zero C collapses to id order") {
        auto p = synthetic::random_params(7, 2, 4, rng);
        for (std::size_t k = 0; k < 4; ++k) p.entities(5, k) = p.entities(2, k);
        CHECK(similar_entities(p, 2, 0, 1, ScoreMode::TransE) == std::vector<EntityId>{5});
        CHECK(similar_entities(p, 2, 0, 1, ScoreMode::CrossE) == std::vector<EntityId>{5});
        for (auto& x : p.interactions.row(1)) x = 0.0f;
        CHECK(similar_entities(p, 3, 1, 4, ScoreMode::CrossE) == std::vector<EntityId>{0, 1, 2, 4});
    }
    SUBCASE("oversized k truncates") {
        auto p = synthetic::random_params(4, 3, 4, rng);
        CHECK(similar_relations(p, 0, 1, 10, ScoreMode::CrossE).size() == 3);
        CHECK(similar_entities(p, 0, 1, 10, ScoreMode::CrossE).size() == 3);
        CHECK(similar_relations(p, 0, 1, 10, ScoreMode::CrossE, 2).size() == 2);
        CHECK_THROWS_AS(similar_relations(p, 0, 1, 0, ScoreMode::CrossE), Error);
    }
}

TEST_CASE("a target with no other head has no explanation") {
    Builder b;
    b.add("h", "rs", "t");
    const Triple target = b.triple("h", "r", "t");
    b.train.push_back(target);
    const auto g = b.build();
    std::mt19937_64 rng(1);
    auto p = synthetic::random_params(g.num_entities(), 2 * g.num_relations(), 4, rng);
    CHECK(explain_triple(p, g, target, {5, 5, ScoreMode::CrossE, mask(Split::Train)}).empty());
}

TEST_CASE("family graph: each father instance explains the other with one support") {
    Builder b;
    for (const std::string i : {"1", "2"}) {
        b.add("father" + i, "hasWife", "mother" + i);
        b.add("mother" + i, "hasChild", "child" + i);
        b.add("father" + i, "isFatherOf", "child" + i);
    }
    b.add("father1", "worksAt", "company");
    b.add("company", "locatedIn", "city");
    const auto g = b.build();
    REQUIRE(g.num_entities() == 8);
    std::mt19937_64 rng(3);
    auto p = synthetic::random_params(8, 2 * g.num_relations(), 6, rng);
    const ExplainOptions all{g.num_relations(), 7, ScoreMode::CrossE, mask(Split::Train)};

    for (const std::string i : {"1", "2"}) {
        const Triple target = b.triple("father" + i, "isFatherOf", "child" + i);
        const auto ex = explain_triple(p, g, target, all);
        REQUIRE(ex.size() == 1);
        CHECK(ex[0].path == PathPattern{PathType::T5, b.rel.find("hasWife"), b.rel.find("hasChild")});
        REQUIRE(ex[0].supports.size() == 1);
        const std::string other = i == "1" ? "2" : "1";
        CHECK(ex[0].supports[0].similar_head == b.ent.find("father" + other));
        CHECK(ex[0].supports[0].analog_tail == b.ent.find("child" + other));
    }
}

TEST_CASE("explanation metrics") {
    SUBCASE("closed form") {
        std::vector<TripleExplanations> r{
            {{0, 0, 1}, {{{0, 0, 1}, {PathType::T1, 1, std::nullopt}, {{2, 3, {}}}}}},
            {{2, 0, 3}, {{{2, 0, 3}, {PathType::T5, 1, 2}, {{4, 5, {}}}}}},
        };
        auto m = summarize_explanations(r, 2);
        CHECK(m.recall == 1.0);
        REQUIRE(m.avg_support);
        CHECK(*m.avg_support == 1.0);
        CHECK(m.share_by_type[0] == 0.5);
        CHECK(m.share_by_type[4] == 0.5);
        auto none = summarize_explanations({}, 5);
        CHECK(none.recall == 0.0);
        CHECK_FALSE(none.avg_support);
    }
}

TEST_CASE("corpus metrics equal a recount of the dump; metrics grow with k") {
    auto fam = synthetic::family_graph(8, 0.3, 5);
    auto g = KnowledgeGraph::build(fam.entities.size(), fam.relations.size(), fam.train, {}, fam.test);
    std::mt19937_64 rng(10);
    auto p = synthetic::random_params(g.num_entities(), 2 * g.num_relations(), 8, rng);
    const auto K = train_set(g);
    const auto dir = fs::temp_directory_path() / "crosse_test_explain";
    fs::create_directories(dir);

    double last_recall = -1, last_total = -1;
    for (std::size_t ke : {5, 10})
        for (std::size_t kr = 1; kr <= 5; ++kr) {
            auto run = evaluate_explanations(p, g, Split::Test, {kr, ke, ScoreMode::CrossE, mask(Split::Train)}, 2);
            write_explanations_jsonl(dir / "dump.jsonl", run.explained, &fam.entities, &fam.relations);
            const auto back = read_explanations_jsonl(dir / "dump.jsonl");
            std::size_t total = 0;
            std::array<std::size_t, 6> by_type{};
            for (const auto& te : back)
                for (const auto& e : te.explanations) {
                    total += e.supports.size();
                    by_type[type_index(e.path.type)] += e.supports.size();
                    for (const auto& s : e.supports)
                        for (const auto& w : s.witnesses) CHECK(K.count(w) == 1);
                }
            CHECK(run.metrics.triples == fam.test.size());
            CHECK(run.metrics.explained == back.size());
            CHECK(run.metrics.total_supports == total);
            CHECK(run.metrics.supports_by_type == by_type);
            CHECK(run.metrics.recall == doctest::Approx(double(back.size()) / double(fam.test.size())));
            if (!back.empty()) CHECK(*run.metrics.avg_support == doctest::Approx(double(total) / double(back.size())));
            if (kr > 1) {
                CHECK(run.metrics.recall >= last_recall);
                CHECK(static_cast<double>(run.metrics.total_supports) >= last_total);
            }
            last_recall = run.metrics.recall;
            last_total = static_cast<double>(run.metrics.total_supports);
        }
}

TEST_CASE("explanation dumps and metric tables round-trip") {
    std::vector<TripleExplanations> r{
        {{0, 0, 1},
         {{{0, 0, 1}, {PathType::T3, 1, 2}, {{2, 3, {{7, 1, 2}, {7, 2, 3}, {2, 0, 3}}}}},
          {{0, 0, 1}, {PathType::T2, 1, std::nullopt}, {{4, 5, {{5, 1, 4}, {4, 0, 5}}}}}}},
    };
    const auto dir = fs::temp_directory_path() / "crosse_test_explain_rt";
    fs::create_directories(dir);
    write_explanations_jsonl(dir / "x.jsonl", r);
    const auto back = read_explanations_jsonl(dir / "x.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0].target == r[0].target);
    REQUIRE(back[0].explanations.size() == 2);
    CHECK(back[0].explanations[0].path == r[0].explanations[0].path);
    CHECK(back[0].explanations[1].path == r[0].explanations[1].path);
    CHECK(back[0].explanations[0].supports == r[0].explanations[0].supports);

    std::vector<ExplanationMetricsRow> rows{{3, 10, summarize_explanations(r, 4)}, {1, 5, summarize_explanations({}, 4)}};
    write_explanation_metrics_tsv(dir / "m.tsv", rows);
    const auto rows_back = read_explanation_metrics_tsv(dir / "m.tsv");
    REQUIRE(rows_back.size() == 2);
    CHECK(rows_back[0].k_r == 3);
    CHECK(rows_back[0].metrics.recall == doctest::Approx(0.25));
    CHECK(*rows_back[0].metrics.avg_support == doctest::Approx(2.0));
    CHECK(rows_back[0].metrics.total_supports == 2);
    CHECK_FALSE(rows_back[1].metrics.avg_support);
}
