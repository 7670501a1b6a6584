#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "support.hpp"

using namespace converg;
using namespace converg::testing;

namespace {

// (graph, s, p, o) rendered as text -> bitstring, from the store's entries.
std::map<std::string, std::string> bitstrings(const Store& s) {
    std::map<std::string, std::string> out;
    const Dictionary& d = s.dictionary();
    for (const CondensedEntry& e : s.entries())
        out[d.decode(e.graph).lexical() + " " + d.decode(e.subject).lexical() + " " + d.decode(e.object).lexical()] =
            e.versions.to_string(s.version_count());
    return out;
}

using TripleSet = std::set<std::string>;

TripleSet triple_set(const std::vector<TripleTerms>& v) {
    TripleSet out;
    for (const auto& t : v) out.insert(t[0].to_ntriples() + " " + t[1].to_ntriples() + " " + t[2].to_ntriples());
    return out;
}

}  // namespace

TEST(VersionBitmap, Basics) {
    VersionBitmap b = VersionBitmap::single(VersionOrdinal(2));
    EXPECT_EQ(b.to_string(3), "010");
    b.set(VersionOrdinal(70));
    EXPECT_TRUE(b.test(VersionOrdinal(70)));
    EXPECT_FALSE(b.test(VersionOrdinal(200)));
    EXPECT_EQ(b.popcount(), 2u);
    EXPECT_EQ(b.highest(), 70u);
    b.reset(VersionOrdinal(70));
    EXPECT_EQ(b, VersionBitmap::single(VersionOrdinal(2)));
    EXPECT_EQ(*VersionBitmap::from_string("0101"), VersionBitmap::from_string("01010").value());
    EXPECT_FALSE(VersionBitmap::from_string("01x"));
    VersionBitmap a = *VersionBitmap::from_string("11");
    EXPECT_EQ((a & *VersionBitmap::from_string("01")).to_string(2), "01");
    EXPECT_TRUE((*VersionBitmap::from_string("10") & *VersionBitmap::from_string("01")).none());
    std::vector<std::uint32_t> seen;
    VersionBitmap::from_string("1001")->for_each_set([&](VersionOrdinal m) { seen.push_back(m.value); });
    EXPECT_EQ(seen, (std::vector<std::uint32_t>{1, 4}));
}

TEST(StoreIngest, HeightsVersionOne) {
    Store s;
    IngestReport r = s.ingest_version(parse_nquads(read_file(fixture("heights_v1.nq"))));
    EXPECT_EQ(r.ordinal, VersionOrdinal(1));
    EXPECT_EQ(r.minted_vngs, (std::vector<Term>{Term::iri("urn:converg:vng:1"), Term::iri("urn:converg:vng:2")}));
    EXPECT_EQ(r.quad_count, 3u);
    EXPECT_EQ(r.new_entry_count, 3u);
    for (const CondensedEntry& e : s.entries()) EXPECT_EQ(e.versions.to_string(1), "1");
}

TEST(StoreIngest, HeightsCondensedEntries) {
    Store s = heights_store();
    std::map<std::string, std::string> expected = {
        {"http://example.org/ng/IGN http://example.org/bldg#1 11", "10"},
        {"http://example.org/ng/IGN http://example.org/bldg#1 10.5", "01"},
        {"http://example.org/ng/Gr-Lyon http://example.org/bldg#3 15", "01"},
        {"http://example.org/ng/Gr-Lyon http://example.org/bldg#2 9.1", "10"},
        {"http://example.org/ng/Gr-Lyon http://example.org/bldg#1 10.5", "11"},
    };
    EXPECT_EQ(bitstrings(s), expected);
    EXPECT_TRUE(s.check_invariants());
}

TEST(StoreIngest, EmptyDocumentAddsVersionOnly) {
    Store s = heights_store();
    IngestReport r = s.ingest_version(ParsedDocument{});
    EXPECT_EQ(r.ordinal, VersionOrdinal(3));
    EXPECT_TRUE(r.minted_vngs.empty());
    EXPECT_EQ(s.stats().entry_count, 5u);
    EXPECT_EQ(s.stats().vng_count, 4u);
}

TEST(StoreIngest, DuplicatesAreDeduplicated) {
    Store s;
    auto doc = parse_nquads("<urn:a> <urn:b> <urn:c> <urn:g> .\n<urn:a> <urn:b> <urn:c> <urn:g> .\n");
    IngestReport r = s.ingest_version(doc);
    EXPECT_EQ(r.quad_count, 1u);
    EXPECT_EQ(r.duplicate_count, 1u);
    EXPECT_EQ(s.stats().flat_quad_count, 1u);
}

TEST(StoreIngest, FailureLeavesStoreUnchanged) {
    Store s = heights_store();
    Store before = s;
    ParsedDocument doc = parse_nquads(read_file(fixture("heights_v2.nq")));
    doc.quads.push_back({ex("new"), ex("p"), ex("o"), ex("ng/new")});
    doc.quads.push_back({ex("x"), ex("p"), ex("o"), std::nullopt});
    EXPECT_THROW(s.ingest_version(doc), Error);
    EXPECT_EQ(s, before);
    EXPECT_TRUE(s.dictionary().check_bijection());
    EXPECT_FALSE(s.dictionary().find(ex("new")));
}

TEST(StoreIngest, BlankNodesScopedPerVersion) {
    Store s;
    s.ingest_version(parse_nquads("_:b <urn:p> <urn:o> <urn:g> .\n"));
    s.ingest_version(parse_nquads("_:b <urn:p> <urn:o> <urn:g> .\n"));
    EXPECT_EQ(s.stats().entry_count, 2u);
}

TEST(StoreLookup, PatternAccess) {
    Store s = heights_store();
    const Dictionary& d = s.dictionary();
    auto gr = *d.find(ex("ng/Gr-Lyon"));
    auto height = *d.find(ex("height"));
    EXPECT_EQ(s.lookup_pattern({gr, {}, height, {}}).size(), 3u);
    auto b1 = *d.find(ex("bldg#1"));
    auto v105 = *d.find(dec("10.5"));
    EXPECT_EQ(s.lookup_pattern({gr, b1, height, v105}).size(), 1u);
    EXPECT_EQ(s.lookup_pattern({{}, b1, {}, {}}).size(), 3u);
    EXPECT_EQ(s.lookup_pattern({{}, {}, {}, v105}).size(), 2u);
    EXPECT_TRUE(s.lookup_pattern({gr, TermId{999}, {}, {}}).empty());
}

TEST(StoreVng, ResolveAndMetadata) {
    Store s = heights_store();
    const Dictionary& d = s.dictionary();
    auto [g3, m3] = s.resolve_vng(Term::iri("urn:converg:vng:3"));
    EXPECT_EQ(d.decode(g3), ex("ng/Gr-Lyon"));
    EXPECT_EQ(m3, VersionOrdinal(2));
    auto [g1, m1] = s.resolve_vng(Term::iri("urn:converg:vng:1"));
    EXPECT_EQ(d.decode(g1), ex("ng/Gr-Lyon"));
    EXPECT_EQ(m1, VersionOrdinal(1));
    EXPECT_THROW(s.resolve_vng(Term::iri("urn:example:not-a-vng")), LookupError);
}

TEST(StoreExport, FlatForm) {
    Store s = heights_store();
    auto flat = s.export_flat();
    ASSERT_EQ(flat.size(), 14u);
    std::multiset<std::string> versioned, metadata;
    for (const Quad& q : flat) (q.graph ? versioned : metadata).insert(q.to_nquads());
    auto vq = [](const char* s, const char* o, int vng) {
        return Quad{ex(s), ex("height"), dec(o), Term::iri("urn:converg:vng:" + std::to_string(vng))}.to_nquads();
    };
    EXPECT_EQ(versioned, (std::multiset<std::string>{vq("bldg#1", "10.5", 1), vq("bldg#2", "9.1", 1), vq("bldg#1", "11", 2),
                                                     vq("bldg#1", "10.5", 3), vq("bldg#3", "15", 3),
                                                     vq("bldg#1", "10.5", 4)}));
    auto mt = [](int vng, const std::string& p, const Term& o) {
        return Quad{Term::iri("urn:converg:vng:" + std::to_string(vng)), Term::iri(p), o, std::nullopt}.to_nquads();
    };
    auto v = [](int m) { return version_iri(VersionOrdinal(m)); };
    EXPECT_EQ(metadata, (std::multiset<std::string>{
                            mt(1, vocab::is_version_of, ex("ng/Gr-Lyon")), mt(1, vocab::is_in_version, v(1)),
                            mt(2, vocab::is_version_of, ex("ng/IGN")), mt(2, vocab::is_in_version, v(1)),
                            mt(3, vocab::is_version_of, ex("ng/Gr-Lyon")), mt(3, vocab::is_in_version, v(2)),
                            mt(4, vocab::is_version_of, ex("ng/IGN")), mt(4, vocab::is_in_version, v(2))}));
    EXPECT_TRUE(Store{}.export_flat().empty());
}

TEST(StoreExport, MetadataRoundTripsThroughText) {
    Store s = heights_store();
    auto flat = s.export_flat();
    auto reparsed = parse_nquads(serialize_nquads(flat)).quads;
    EXPECT_EQ(reparsed, flat);
}

TEST(StoreDiff, HeightsExamples) {
    Store s = heights_store();
    auto vng = [](int n) { return Term::iri("urn:converg:vng:" + std::to_string(n)); };
    EXPECT_EQ(s.diff_vng(vng(3), vng(1)), (std::vector<TripleTerms>{{ex("bldg#3"), ex("height"), dec("15")}}));
    EXPECT_EQ(s.diff_vng(vng(1), vng(3)), (std::vector<TripleTerms>{{ex("bldg#2"), ex("height"), dec("9.1")}}));
    EXPECT_TRUE(s.diff_vng(vng(2), vng(2)).empty());
    // Cross-graph: IGN v2 = {bldg#1 10.5} is contained in Gr-Lyon v1.
    EXPECT_TRUE(s.diff_vng(vng(4), vng(1)).empty());
    EXPECT_THROW(s.diff_vng(vng(9), vng(1)), LookupError);
}

TEST(StoreStats, HeightsAndEmpty) {
    EXPECT_EQ(heights_store().stats(), (StoreStats{2, 2, 4, 5, 6, 8}));
    EXPECT_EQ(Store{}.stats(), (StoreStats{}));
}

TEST(StoreMetadata, UserTriplesFollowMintedOnes) {
    Store s = heights_store();
    s.add_metadata(parse_nquads("<urn:converg:vng:1> <http://purl.org/dc/terms/source> \"survey\" .\n"));
    EXPECT_EQ(s.stats().metadata_triple_count, 9u);
    EXPECT_FALSE(s.user_metadata_uses_version_vocab());
    EXPECT_THROW(s.add_metadata(parse_nquads("<urn:a> <urn:b> <urn:c> <urn:g> .\n")), Error);
    EXPECT_EQ(s.stats().metadata_triple_count, 9u);
}

// Per version m, the flat export restricted to vngs of m equals the m-th
// document as a (graph, s, p, o) set.
TEST(StoreProperties, CondensationSoundness) {
    std::mt19937_64 rng(42);
    for (int round = 0; round < 200; ++round) {
        auto docs = random_versions(rng);
        Store s;
        std::size_t flat_before = 0;
        for (const auto& d : docs) {
            IngestReport r = s.ingest_version(d);
            EXPECT_EQ(s.stats().flat_quad_count, flat_before + r.quad_count);
            flat_before = s.stats().flat_quad_count;
        }
        ASSERT_TRUE(s.check_invariants());
        std::vector<std::set<std::string>> by_version(docs.size());
        for (const Quad& q : s.export_flat()) {
            if (!q.graph) continue;
            const VngEntry* v = s.find_vng(*q.graph);
            ASSERT_NE(v, nullptr);
            Quad original{q.subject, q.predicate, q.object, s.dictionary().decode(v->graph)};
            by_version[v->version.value - 1].insert(original.to_nquads());
        }
        std::size_t expected_vngs = 0;
        for (std::size_t m = 0; m < docs.size(); ++m) {
            std::set<std::string> want, graphs;
            for (const Quad& q : docs[m].quads) {
                Quad scoped = q;
                auto scope = [&](Term& t) {
                    if (t.is_blank()) t = Term::blank("v" + std::to_string(m + 1) + "_" + t.lexical());
                };
                scope(scoped.subject);
                scope(scoped.object);
                want.insert(scoped.to_nquads());
                graphs.insert(q.graph->lexical());
            }
            expected_vngs += graphs.size();
            EXPECT_EQ(by_version[m], want) << "version " << m + 1;
        }
        EXPECT_EQ(s.vngs().size(), expected_vngs);
    }
}

TEST(StoreProperties, DiffPartition) {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 100; ++round) {
        Store s = random_store(rng);
        if (s.vngs().empty()) continue;
        const Term a = s.dictionary().decode(pick(rng, s.vngs()).vng);
        const Term b = s.dictionary().decode(pick(rng, s.vngs()).vng);
        auto content = [&](const Term& vng) {
            TripleSet out;
            for (const Quad& q : s.export_flat())
                if (q.graph == vng)
                    out.insert(q.subject.to_ntriples() + " " + q.predicate.to_ntriples() + " " + q.object.to_ntriples());
            return out;
        };
        TripleSet A = content(a), B = content(b);
        TripleSet ab = triple_set(s.diff_vng(a, b)), ba = triple_set(s.diff_vng(b, a)), both, all;
        std::set_intersection(A.begin(), A.end(), B.begin(), B.end(), std::inserter(both, both.end()));
        std::set_union(A.begin(), A.end(), B.begin(), B.end(), std::inserter(all, all.end()));
        TripleSet joined = ab;
        joined.insert(ba.begin(), ba.end());
        joined.insert(both.begin(), both.end());
        EXPECT_EQ(joined, all);
        EXPECT_EQ(ab.size() + ba.size() + both.size(), all.size());
    }
}

TEST(StoreProperties, FlatReingestReproducesEntries) {
    std::mt19937_64 rng(17);
    for (int round = 0; round < 50; ++round) {
        Store s = random_store(rng);
        std::vector<ParsedDocument> docs(s.version_count());
        for (const Quad& q : s.export_flat()) {
            if (!q.graph) continue;
            const VngEntry* v = s.find_vng(*q.graph);
            docs[v->version.value - 1].quads.push_back(
                {q.subject, q.predicate, q.object, s.dictionary().decode(v->graph)});
        }
        Store again;
        for (const auto& d : docs) again.ingest_version(d);
        EXPECT_EQ(bitstrings(again).size(), bitstrings(s).size());
        EXPECT_EQ(again.stats(), s.stats());
    }
}
