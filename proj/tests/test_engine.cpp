#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace converg;
using namespace converg::testing;

namespace {

const std::string prefixes =
    "PREFIX ex: <http://example.org/>\nPREFIX vers: <urn:converg:vocab:>\n"
    "PREFIX xsd: <http://www.w3.org/2001/XMLSchema#>\n";

ResultTable run(const Store& s, const std::string& body) { return execute_query(s, prefixes + body); }

ResultTable table(std::vector<std::string> columns, std::vector<ResultTable::Row> rows) {
    ResultTable t;
    t.columns = std::move(columns);
    t.rows = std::move(rows);
    t.canonicalize();
    return t;
}

Term version(std::uint32_t m) { return version_iri(VersionOrdinal(m)); }
Term vng(int n) { return Term::iri("urn:converg:vng:" + std::to_string(n)); }

}  // namespace

TEST(EngineQueries, Query1MatchesBruteForceOverHeights) {
    Store s = heights_store();
    // Expected rows straight from the two fixture documents.
    ResultTable expected;
    expected.columns = {"version", "subj", "obj"};
    for (std::uint32_t m = 1; m <= 2; ++m) {
        auto doc = parse_nquads(read_file(fixture("heights_v" + std::to_string(m) + ".nq")));
        for (const Quad& q : doc.quads) expected.rows.push_back({version(m), q.subject, q.object});
    }
    expected.canonicalize();
    ResultTable got = execute_query(s, read_file(fixture("query1.rq")));
    EXPECT_EQ(got.rows.size(), 6u);
    EXPECT_EQ(got, expected);
}

TEST(EngineQueries, Query2DiffOfVng3AndVng1) {
    Store s = heights_store();
    ResultTable got = execute_query(s, read_file(fixture("query2.rq")));
    EXPECT_EQ(got, table({"subj", "pred", "obj"}, {{ex("bldg#3"), ex("height"), dec("15")}}));
}

TEST(EngineQueries, Query3MaxByVersion) {
    Store s = heights_store();
    ResultTable got = execute_query(s, read_file(fixture("query3.rq")));
    EXPECT_EQ(got, table({"version", "agg1"}, {{version(1), dec("11")}, {version(2), dec("15")}}));
}

TEST(EngineQueries, Query4CountByVersion) {
    Store s = heights_store();
    ResultTable got = execute_query(s, read_file(fixture("query4.rq")));
    EXPECT_EQ(got, table({"version", "agg1"}, {{version(1), integer(3)}, {version(2), integer(3)}}));
}

TEST(EngineQueries, Query5CountByGraph) {
    Store s = heights_store();
    ResultTable got = execute_query(s, read_file(fixture("query5.rq")));
    EXPECT_EQ(got, table({"graph", "agg1"}, {{ex("ng/Gr-Lyon"), integer(4)}, {ex("ng/IGN"), integer(2)}}));
}

TEST(EngineQueries, Query6DistinctVersionsByGraph) {
    Store s = heights_store();
    ResultTable got = execute_query(s, read_file(fixture("query6.rq")));
    EXPECT_EQ(got, table({"graph", "agg1"}, {{ex("ng/Gr-Lyon"), integer(2)}, {ex("ng/IGN"), integer(1)}}));
}

TEST(EngineGraph, ConstantVngSelectsOneGraphVersion) {
    Store s = heights_store();
    ResultTable got = run(s, "SELECT ?s ?o WHERE { GRAPH <urn:converg:vng:2> { ?s ex:height ?o } }");
    EXPECT_EQ(got, table({"s", "o"}, {{ex("bldg#1"), dec("11")}}));
}

TEST(EngineGraph, PlainGraphNameMatchesNothingWithWarning) {
    Store s = heights_store();
    ResultTable got = run(s, "SELECT ?s WHERE { GRAPH <http://example.org/ng/IGN> { ?s ?p ?o } }");
    EXPECT_TRUE(got.rows.empty());
    ASSERT_EQ(got.warnings.size(), 1u);
    EXPECT_NE(got.warnings[0].find("not a versioned named graph"), std::string::npos);
}

TEST(EngineGraph, GraphVariableRangesOverVngsOnly) {
    Store s = heights_store();
    ResultTable got = run(s, "SELECT ?g WHERE { GRAPH ?g { <http://example.org/bldg#1> ex:height \"10.5\"^^xsd:decimal } }");
    EXPECT_EQ(got, table({"g"}, {{vng(1)}, {vng(3)}, {vng(4)}}));
}

TEST(EngineGraph, GraphVariableAlsoUsedInsideBlock) {
    Store s = heights_store();
    ResultTable got = run(s, "SELECT ?g WHERE { GRAPH ?g { ?g ?p ?o } }");
    EXPECT_TRUE(got.rows.empty());
}

TEST(EngineGraph, DefaultGraphHoldsMetadata) {
    Store s = heights_store();
    ResultTable got = run(s, "SELECT ?v WHERE { ?v vers:is-version-of ex:ng/IGN }");
    EXPECT_EQ(got, table({"v"}, {{vng(2)}, {vng(4)}}));
}

TEST(EngineCondensed, BitmapAndSoundOnHeights) {
    Store s = heights_store();
    auto flat = s.export_flat();
    const std::vector<std::string> queries = {
        "SELECT ?s ?o WHERE { GRAPH ?g { ?s ex:height ?o } }",
        "SELECT ?s ?o ?o2 WHERE { GRAPH ?g { ?s ex:height ?o . ?s ex:height ?o2 } }",
        "SELECT ?s ?t WHERE { GRAPH ?g { ?s ex:height \"10.5\"^^xsd:decimal . ?t ex:height ?x } }",
    };
    for (const std::string& q : queries) {
        sparql::Plan plan = sparql::compile(prefixes + q);
        const auto& gp = std::get<sparql::GraphPattern>(plan.query.where.node);
        const auto& bgp = std::get<sparql::BgpPattern>(gp.inner->node).triples;
        auto rows = eval_bgp_in_graph_var(s, bgp, "g");
        ASSERT_FALSE(rows.empty()) << q;
        for (const CondensedSolution& r : rows) {
            for (std::uint32_t m = 1; m <= s.version_count(); ++m) {
                const VngEntry* v = s.find_vng(*s.dictionary().find(r.graph), VersionOrdinal(m));
                bool all_match = v != nullptr;
                for (const auto& t : bgp) {
                    if (!all_match) break;
                    auto ground = [&](const sparql::TermOrVar& x) {
                        if (auto term = std::get_if<Term>(&x)) return *term;
                        return r.bindings.at(std::get<sparql::Variable>(x).name);
                    };
                    Quad want{ground(t.subject), std::get<Term>(t.predicate), ground(t.object),
                              s.dictionary().decode(v->vng)};
                    all_match = std::find(flat.begin(), flat.end(), want) != flat.end();
                }
                EXPECT_EQ(r.versions.test(VersionOrdinal(m)), all_match) << q << " version " << m;
            }
        }
    }
}

TEST(EngineCondensed, BitmapIntersectionAcrossPatterns) {
    Store s = heights_store();
    sparql::Plan plan = sparql::compile(
        prefixes + "SELECT ?s ?s2 WHERE { GRAPH ?g { ?s ex:height \"10.5\"^^xsd:decimal . ?s2 ex:height \"15\"^^xsd:decimal } }");
    const auto& gp = std::get<sparql::GraphPattern>(plan.query.where.node);
    auto rows = eval_bgp_in_graph_var(s, std::get<sparql::BgpPattern>(gp.inner->node).triples, "g");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].graph, ex("ng/Gr-Lyon"));
    EXPECT_EQ(rows[0].bindings.at("s"), ex("bldg#1"));
    EXPECT_EQ(rows[0].bindings.at("s2"), ex("bldg#3"));
    EXPECT_EQ(rows[0].versions.to_string(2), "01");
}

TEST(EngineCondensed, CountFastPathOnHeights) {
    Store s = heights_store();
    sparql::Plan plan = sparql::compile(prefixes + "SELECT ?s WHERE { GRAPH ?g { ?s ex:height ?o } }");
    const auto& bgp =
        std::get<sparql::BgpPattern>(std::get<sparql::GraphPattern>(plan.query.where.node).inner->node).triples;
    EXPECT_EQ(eval_count_by_version_fast(s, bgp, "g"), (VersionVector{3, 3}));

    plan = sparql::compile(prefixes + "SELECT ?s WHERE { GRAPH ?g { ?s ex:width ?o } }");
    const auto& none =
        std::get<sparql::BgpPattern>(std::get<sparql::GraphPattern>(plan.query.where.node).inner->node).triples;
    EXPECT_EQ(eval_count_by_version_fast(s, none, "g"), (VersionVector{0, 0}));
}

TEST(EngineCondensed, GraphVariableInsideBgpRejected) {
    Store s = heights_store();
    std::vector<sparql::TriplePattern> bgp = {
        {sparql::Variable{"g"}, Term(ex("height")), sparql::Variable{"o"}}};
    EXPECT_THROW(eval_bgp_in_graph_var(s, bgp, "g"), QueryError);
}

TEST(EngineAggregates, EmptyStoreGivesZeroCountGroup) {
    Store s;
    ResultTable got = run(s, "SELECT (COUNT(?s) AS ?n) WHERE { GRAPH ?g { ?s ?p ?o } }");
    EXPECT_EQ(got, table({"n"}, {{integer(0)}}));
    got = run(s, "SELECT ?g (COUNT(?s) AS ?n) WHERE { GRAPH ?g { ?s ?p ?o } } GROUP BY ?g");
    EXPECT_TRUE(got.rows.empty());
}

TEST(EngineAggregates, DistinctVersionsPerGraphBoundedByVersionCount) {
    GenConfig c;
    c.products = 40;
    c.graphs = 3;
    c.versions = 6;
    c.change_rate = 0.2;
    c.seed = 8;
    Store s;
    for (std::uint32_t m = 1; m <= c.versions; ++m) s.ingest_version(generate_version(c, VersionOrdinal(m)));
    ResultTable got = execute_query(s, read_file(fixture("query6.rq")));
    for (const auto& row : got.rows) {
        auto n = row.back()->numeric_value();
        ASSERT_TRUE(n);
        EXPECT_TRUE(*n <= *Decimal::parse(std::to_string(s.stats().version_count)));
    }
    got = run(s, "SELECT ?gr (COUNT(DISTINCT ?v) AS ?n) WHERE { GRAPH ?g { ?p ?x ?y } ?g vers:is-version-of ?gr . "
                 "?g vers:is-in-version ?v } GROUP BY ?gr");
    ASSERT_EQ(got.rows.size(), 3u);
    for (const auto& row : got.rows) EXPECT_EQ(*row[1], integer(6));
}

TEST(EngineAggregates, SumOfDecimalsIsDecimal) {
    Store s = heights_store();
    ResultTable got = run(s, "SELECT ?v (SUM(?h) AS ?total) WHERE { GRAPH ?g { ?b ex:height ?h } ?g vers:is-in-version ?v } GROUP BY ?v");
    EXPECT_EQ(got, table({"v", "total"}, {{version(1), dec("30.6")}, {version(2), dec("36.0")}}));
}

TEST(EngineAggregates, SumOverIriNamesTheGroup) {
    Store s = heights_store();
    try {
        run(s, "SELECT ?g (SUM(?b) AS ?x) WHERE { GRAPH ?g { ?b ex:height ?h } } GROUP BY ?g");
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        EXPECT_NE(std::string(e.what()).find("?g="), std::string::npos) << e.what();
    }
}

TEST(EngineAggregates, MinUsesNumericOrder) {
    Store s = heights_store();
    ResultTable got = run(s, "SELECT (MIN(?h) AS ?m) WHERE { GRAPH ?g { ?b ex:height ?h } }");
    EXPECT_EQ(got, table({"m"}, {{dec("9.1")}}));
}

TEST(EngineAlgebra, JoinWithUnitIsIdentity) {
    std::mt19937_64 rng(11);
    engine::Relation r(3);
    for (int i = 0; i < 20; ++i) {
        std::vector<TermId> row = {rng() % 3, coin(rng) ? engine::unbound : rng() % 3, rng() % 5};
        r.push(row);
    }
    engine::Relation j = engine::join(engine::Relation::unit(3), r);
    auto rows = [](const engine::Relation& rel) {
        std::vector<std::vector<TermId>> out;
        for (std::size_t i = 0; i < rel.size(); ++i) out.emplace_back(rel.row(i).begin(), rel.row(i).end());
        std::sort(out.begin(), out.end());
        return out;
    };
    EXPECT_EQ(rows(j), rows(r));
}

TEST(EngineAlgebra, MinusNeverGrowsAndNeedsSharedVariable) {
    engine::Relation left(2), right(2);
    left.push(std::vector<TermId>{1, engine::unbound});
    left.push(std::vector<TermId>{2, engine::unbound});
    right.push(std::vector<TermId>{engine::unbound, 5});  // disjoint domain
    right.push(std::vector<TermId>{2, 9});
    engine::Relation out = engine::minus(left, right);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out.row(0)[0], 1u);
}

TEST(EngineDeterminism, RepeatedRunsAreIdentical) {
    std::mt19937_64 rng(5);
    Store s = random_store(rng);
    QueryGenerator gen(rng);
    for (int i = 0; i < 20; ++i) {
        std::string q = gen.next(s);
        try {
            EXPECT_EQ(execute_query(s, q).to_tsv(), execute_query(s, q).to_tsv()) << q;
        } catch (const EvaluationError&) {
        }
    }
}

TEST(EngineDifferential, RandomCasesAgreeWithOracle) {
    std::mt19937_64 rng(20240601);
    for (int i = 0; i < 300; ++i) {
        Store s = random_store(rng);
        QueryGenerator gen(rng);
        std::string q = gen.next(s);
        EXPECT_EQ(differential_mismatch(s, q), "") << q;
        EXPECT_EQ(differential_mismatch(s, q, EngineOptions{false}), "") << q;
    }
}

TEST(EngineDifferential, CountFastPathAgreesWithNaivePipeline) {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100; ++i) {
        Store s = random_store(rng);
        QueryGenerator gen(rng);
        std::string text = gen.next(s);
        sparql::Plan plan = sparql::compile(text);
        // Re-express the query's first GRAPH ?g block as a count-by-version.
        auto gp = std::get_if<sparql::GraphPattern>(&plan.query.where.node);
        if (auto j = std::get_if<sparql::JoinPattern>(&plan.query.where.node); j && !gp)
            gp = std::get_if<sparql::GraphPattern>(&j->children.front().node);
        if (!gp || !std::holds_alternative<sparql::Variable>(gp->target)) continue;
        const auto& bgp = std::get<sparql::BgpPattern>(gp->inner->node).triples;
        VersionVector fast = eval_count_by_version_fast(s, bgp, "g");
        std::string count_query = "SELECT ?ver (COUNT(?g) AS ?n) WHERE { GRAPH ?g { " + [&] {
            std::string out;
            for (const auto& t : bgp) {
                auto show = [](const auto& x) {
                    if (auto v = std::get_if<sparql::Variable>(&x)) return "?" + v->name;
                    return std::get<Term>(x).to_ntriples();
                };
                out += show(t.subject) + " " + std::visit([&](const auto& p) -> std::string {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, sparql::PredicatePath>) return "";
                    else return show(sparql::TermOrVar(p));
                }, t.predicate) + " " + show(t.object) + " . ";
            }
            return out;
        }() + "} ?g <urn:converg:vocab:is-in-version> ?ver } GROUP BY ?ver";
        ResultTable naive = evaluate(s, sparql::compile(count_query), EngineOptions{false});
        VersionVector expected(s.version_count(), 0);
        for (const auto& row : naive.rows) {
            std::string iri = row[0]->lexical();
            std::uint32_t m = std::stoul(iri.substr(iri.rfind(':') + 1));
            expected[m - 1] = std::stoull(row[1]->lexical());
        }
        EXPECT_EQ(fast, expected) << count_query;
    }
}
