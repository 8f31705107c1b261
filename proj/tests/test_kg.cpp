#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "crosse/kg.hpp"

using namespace crosse;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "crosse_test_kg";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::vector<Triple> random_triples(std::size_t count, std::size_t ne, std::size_t nr, std::mt19937_64& rng) {
    std::uniform_int_distribution<EntityId> e(0, static_cast<EntityId>(ne - 1));
    std::uniform_int_distribution<RelationId> r(0, static_cast<RelationId>(nr - 1));
    std::set<Triple> seen;
    std::vector<Triple> out;
    while (out.size() < count) {
        Triple t{e(rng), r(rng), e(rng)};
        if (seen.insert(t).second) out.push_back(t);
    }
    return out;
}

}  // namespace

TEST_CASE("load_triples assigns first-seen dense ids") {
    auto path = scratch("one.tsv");
    write_text(path, "a\tr1\tb\n");
    Dictionary ent, rel;
    auto triples = load_triples(path, ent, rel);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0] == Triple{0, 0, 1});
    CHECK(ent.size() == 2);
    CHECK(rel.size() == 1);
    CHECK(ent.decode(1) == "b");
    CHECK(ent.find("zzz") == -1);
}

TEST_CASE("reloading with the same dictionaries is idempotent") {
    auto path = scratch("twice.tsv");
    write_text(path, "x\tp\ty\ny\tq\tz\nx\tq\tz\n");
    Dictionary ent, rel;
    auto first = load_triples(path, ent, rel);
    auto second = load_triples(path, ent, rel);
    CHECK(first == second);
    CHECK(ent.size() == 3);
    CHECK(rel.size() == 2);
}

TEST_CASE("malformed lines report their line number") {
    auto path = scratch("bad.tsv");
    write_text(path, "a\tr\tb\n\nc\td\n");
    Dictionary ent, rel;
    try {
        load_triples(path, ent, rel);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    write_text(path, "a\tr\tb\textra\n");
    CHECK_THROWS_AS(load_triples(path, ent, rel), ParseError);
}

TEST_CASE("empty file gives no triples; CRLF is accepted; labels are opaque") {
    auto empty = scratch("empty.tsv");
    write_text(empty, "");
    Dictionary ent, rel;
    CHECK(load_triples(empty, ent, rel).empty());

    auto crlf = scratch("crlf.tsv");
    write_text(crlf, "/m/0A\tr\t/m/0a\r\n/m/0a\tr\t/m/0A\r\n");
    auto t = load_triples(crlf, ent, rel);
    REQUIRE(t.size() == 2);
    CHECK(ent.size() == 2);  // case-sensitive
    CHECK(ent.decode(0) == "/m/0A");
    CHECK(t[1] == Triple{1, 0, 0});
}

TEST_CASE("dictionary dump round-trips") {
    Dictionary d;
    d.encode("alpha");
    d.encode("beta gamma");
    d.encode("δ");
    auto path = scratch("dict.tsv");
    d.save(path);
    auto back = Dictionary::load(path);
    CHECK(back == d);
    CHECK(back.find("beta gamma") == 1);
}

TEST_CASE("one-edge graph indexes") {
    auto g = KnowledgeGraph::build(2, 1, {{0, 0, 1}}, {}, {});
    auto tails = g.tails(0, 0);
    REQUIRE(tails.size() == 1);
    CHECK(tails[0].entity == 1);
    auto heads = g.heads(0, 1);
    REQUIRE(heads.size() == 1);
    CHECK(heads[0].entity == 0);
    CHECK(g.out_edges(0).size() == 1);
    CHECK(g.in_edges(1).size() == 1);
    CHECK(g.out_edges(1).empty());
    CHECK(g.tails(1, 0).empty());
}

TEST_CASE("fan-out of a shared head") {
    std::vector<Triple> t;
    for (EntityId i = 1; i <= 7; ++i) t.push_back({0, i % 3, i});
    auto g = KnowledgeGraph::build(8, 3, t, {}, {});
    CHECK(g.out_edges(0).size() == 7);
}

TEST_CASE("indexes agree with linear scans on random graphs") {
    std::mt19937_64 rng(11);
    const std::size_t ne = 25, nr = 4;
    auto all = random_triples(200, ne, nr, rng);
    std::vector<Triple> train(all.begin(), all.begin() + 150), valid(all.begin() + 150, all.begin() + 175),
        test(all.begin() + 175, all.end());
    auto g = KnowledgeGraph::build(ne, nr, train, valid, test);

    for (EntityId h = 0; h < static_cast<EntityId>(ne); ++h) {
        std::multiset<std::pair<RelationId, EntityId>> out_scan, in_scan;
        for (const auto& x : all) {
            if (x.head == h) out_scan.insert({x.relation, x.tail});
            if (x.tail == h) in_scan.insert({x.relation, x.head});
        }
        std::multiset<std::pair<RelationId, EntityId>> out_idx, in_idx;
        for (const auto& e : g.out_edges(h)) out_idx.insert({e.relation, e.entity});
        for (const auto& e : g.in_edges(h)) in_idx.insert({e.relation, e.entity});
        CHECK(out_scan == out_idx);
        CHECK(in_scan == in_idx);

        for (RelationId r = 0; r < static_cast<RelationId>(nr); ++r) {
            std::vector<EntityId> tails_scan, heads_scan;
            for (const auto& x : all) {
                if (x.head == h && x.relation == r) tails_scan.push_back(x.tail);
                if (x.tail == h && x.relation == r) heads_scan.push_back(x.head);
            }
            std::sort(tails_scan.begin(), tails_scan.end());
            std::sort(heads_scan.begin(), heads_scan.end());
            std::vector<EntityId> tails_idx, heads_idx;
            for (const auto& a : g.tails(h, r)) tails_idx.push_back(a.entity);
            for (const auto& a : g.heads(r, h)) heads_idx.push_back(a.entity);
            CHECK(tails_scan == tails_idx);
            CHECK(heads_scan == heads_idx);
        }
    }
    CHECK(g.triples(Split::Train).size() == 150);
    CHECK(g.triples(Split::Valid).size() == 25);
    CHECK(g.triples(Split::Test).size() == 25);
}

TEST_CASE("contains matches a linear scan on 1000 probes") {
    std::mt19937_64 rng(5);
    const std::size_t ne = 40, nr = 5;
    auto all = random_triples(500, ne, nr, rng);
    std::vector<Triple> train(all.begin(), all.begin() + 400), valid(all.begin() + 400, all.begin() + 450),
        test(all.begin() + 450, all.end());
    auto g = KnowledgeGraph::build(ne, nr, train, valid, test);

    std::uniform_int_distribution<EntityId> e(0, static_cast<EntityId>(ne - 1));
    std::uniform_int_distribution<RelationId> r(0, static_cast<RelationId>(nr - 1));
    std::uniform_int_distribution<int> m(1, 7);
    std::size_t hits = 0;
    for (int i = 0; i < 1000; ++i) {
        // Half the probes are known triples so both answers get exercised.
        Triple probe = i % 2 ? all[static_cast<std::size_t>(i) % all.size()] : Triple{e(rng), r(rng), e(rng)};
        const auto splits = static_cast<SplitMask>(m(rng));
        bool scan = false;
        auto in = [&](const std::vector<Triple>& v) { return std::find(v.begin(), v.end(), probe) != v.end(); };
        if ((splits & mask(Split::Train)) && in(train)) scan = true;
        if ((splits & mask(Split::Valid)) && in(valid)) scan = true;
        if ((splits & mask(Split::Test)) && in(test)) scan = true;
        CHECK(g.contains(probe, splits) == scan);
        hits += scan;
    }
    CHECK(hits > 100);
    CHECK(g.contains(train[0], mask(Split::Train)));
    CHECK_FALSE(g.contains(train[0], mask(Split::Test)));
}

TEST_CASE("a triple in several splits keeps one index entry with a merged mask") {
    auto g = KnowledgeGraph::build(2, 1, {{0, 0, 1}}, {}, {{0, 0, 1}});
    auto tails = g.tails(0, 0);
    REQUIRE(tails.size() == 1);
    CHECK(tails[0].splits == (mask(Split::Train) | mask(Split::Test)));
    CHECK(g.membership({0, 0, 1}) == (mask(Split::Train) | mask(Split::Test)));
    CHECK(g.membership({1, 0, 0}) == 0);
}

TEST_CASE("within-split duplicates are dropped and counted") {
    BuildStats stats;
    auto g = KnowledgeGraph::build(3, 1, {{0, 0, 1}, {0, 0, 1}, {1, 0, 2}}, {{1, 0, 2}, {1, 0, 2}}, {}, &stats);
    CHECK(g.triples(Split::Train).size() == 2);
    CHECK(g.triples(Split::Valid).size() == 1);
    CHECK(stats.duplicates_dropped[0] == 1);
    CHECK(stats.duplicates_dropped[1] == 1);
    CHECK(stats.duplicates_dropped[2] == 0);
}

TEST_CASE("out-of-range ids are rejected") {
    CHECK_THROWS_AS(KnowledgeGraph::build(2, 1, {{0, 0, 2}}, {}, {}), Error);
    CHECK_THROWS_AS(KnowledgeGraph::build(2, 1, {{0, 1, 1}}, {}, {}), Error);
    CHECK_THROWS_AS(KnowledgeGraph::build(2, 1, {}, {}, {{-1, 0, 1}}), Error);
}

TEST_CASE("inverse augmentation") {
    SUBCASE("single triple") {
        auto g = add_inverse_relations(KnowledgeGraph::build(2, 1, {{0, 0, 1}}, {}, {}));
        CHECK(g.num_relations() == 2);
        CHECK(g.num_forward_relations() == 1);
        CHECK(g.triples(Split::Train).size() == 2);
        CHECK(g.contains({0, 0, 1}, mask(Split::Train)));
        CHECK(g.contains({1, 1, 0}, mask(Split::Train)));
    }
    SUBCASE("cardinality doubles per split, same split membership") {
        std::mt19937_64 rng(3);
        auto all = random_triples(120, 15, 3, rng);
        std::vector<Triple> train(all.begin(), all.begin() + 100), test(all.begin() + 100, all.end());
        auto g = KnowledgeGraph::build(15, 3, train, {}, test);
        auto a = g.with_inverse_relations();
        CHECK(a.triples(Split::Train).size() == 200);
        CHECK(a.triples(Split::Test).size() == 40);
        for (const auto& t : test) {
            CHECK(a.contains({t.tail, t.relation + 3, t.head}, mask(Split::Test)));
            CHECK(a.contains(t, mask(Split::Test)));
        }
        // Original triples unchanged and in order.
        CHECK(std::equal(train.begin(), train.end(), a.triples(Split::Train).begin()));
    }
    SUBCASE("second application is rejected") {
        auto g = add_inverse_relations(KnowledgeGraph::build(2, 1, {{0, 0, 1}}, {}, {}));
        CHECK_THROWS_AS(add_inverse_relations(g), Error);
    }
    SUBCASE("inverse of inverse maps back") {
        auto g = add_inverse_relations(KnowledgeGraph::build(3, 4, {{0, 3, 1}}, {}, {}));
        for (RelationId r = 0; r < 4; ++r) {
            CHECK(g.inverse_of(r) == r + 4);
            CHECK(g.inverse_of(g.inverse_of(r)) == r);
        }
    }
}

TEST_CASE("write then reload gives identical id sequences") {
    std::mt19937_64 rng(8);
    Dictionary ent, rel;
    for (int i = 0; i < 12; ++i) ent.encode("e" + std::to_string(i));
    for (int i = 0; i < 3; ++i) rel.encode("r" + std::to_string(i));
    auto triples = random_triples(40, 12, 3, rng);
    auto path = scratch("roundtrip.tsv");
    write_triples(path, triples, ent, rel);
    auto back = load_triples(path, ent, rel);
    CHECK(back == triples);
    CHECK(ent.size() == 12);
}
