#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "converg/converg.hpp"

namespace converg::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(CONVERG_FIXTURES) / name; }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Store heights_store() {
    Store s;
    s.ingest_version(parse_nquads(read_file(fixture("heights_v1.nq"))));
    s.ingest_version(parse_nquads(read_file(fixture("heights_v2.nq"))));
    return s;
}

inline Term ex(const std::string& local) { return Term::iri("http://example.org/" + local); }
inline Term dec(const std::string& lex) { return Term::literal(lex, xsd::decimal); }
inline Term integer(long long v) { return Term::literal(std::to_string(v), xsd::integer); }

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() / ("converg-test-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Small term pools so that random patterns actually join.
struct RandomPools {
    std::vector<Term> subjects;
    std::vector<Term> predicates;
    std::vector<Term> objects;
    std::vector<Term> graphs;

    RandomPools() {
        for (int i = 0; i < 4; ++i) subjects.push_back(ex("s" + std::to_string(i)));
        subjects.push_back(Term::blank("b0"));
        for (int i = 0; i < 3; ++i) predicates.push_back(ex("p" + std::to_string(i)));
        objects = {ex("s0"), ex("s1"), ex("o0"), integer(1), integer(7), dec("2.5"), Term::literal("x"),
                   Term::lang_literal("x", "en"), Term::literal("07", xsd::integer), Term::blank("b0")};
        for (int i = 0; i < 3; ++i) graphs.push_back(ex("g" + std::to_string(i)));
    }
};

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline bool coin(std::mt19937_64& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

inline std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Up to 4 versions, 3 graphs, 50 quads per version. Later versions keep a
// random share of the previous one so bitmaps have long runs.
inline std::vector<ParsedDocument> random_versions(std::mt19937_64& rng, std::size_t max_versions = 4) {
    RandomPools pools;
    std::size_t versions = uniform(rng, 1, max_versions);
    std::size_t graph_count = uniform(rng, 1, pools.graphs.size());
    std::vector<ParsedDocument> docs;
    std::vector<Quad> previous;
    for (std::size_t m = 0; m < versions; ++m) {
        ParsedDocument doc;
        std::size_t n = uniform(rng, 0, 50);
        for (const Quad& q : previous)
            if (doc.quads.size() < n && coin(rng, 0.7)) doc.quads.push_back(q);
        while (doc.quads.size() < n) {
            Quad q{pick(rng, pools.subjects), pick(rng, pools.predicates), pick(rng, pools.objects),
                   pools.graphs[uniform(rng, 0, graph_count - 1)]};
            doc.quads.push_back(q);
        }
        std::shuffle(doc.quads.begin(), doc.quads.end(), rng);
        previous = doc.quads;
        docs.push_back(std::move(doc));
    }
    return docs;
}

inline Store random_store(std::mt19937_64& rng, std::size_t max_versions = 4) {
    Store s;
    for (const ParsedDocument& d : random_versions(rng, max_versions)) s.ingest_version(d);
    return s;
}

// Random query text over the pools: 1-3 pattern BGP in a GRAPH block
// (variable or constant) or the default graph, an optional metadata join,
// optional MINUS, optional GROUP BY with one aggregate.
class QueryGenerator {
public:
    explicit QueryGenerator(std::mt19937_64& rng) : rng_(rng) {}

    std::string next(const Store& store) {
        used_.clear();
        std::string graph_var = "g";
        std::string where;
        if (coin(rng_, 0.1)) {
            std::string block = bgp();
            std::vector<std::string> vars(used_.begin(), used_.end());
            vars.push_back(graph_var);
            return "SELECT ?ver (COUNT(?" + pick(rng_, vars) + ") AS ?n) WHERE { GRAPH ?" + graph_var + " { " + block +
                   "} ?" + graph_var + " <urn:converg:vocab:is-in-version> ?ver } GROUP BY ?ver";
        }
        int shape = static_cast<int>(uniform(rng_, 0, 9));
        if (shape == 0) {
            where = metadata_bgp();
        } else if (shape <= 2) {
            where = "GRAPH " + graph_constant(store) + " { " + bgp() + " }";
        } else {
            used_.insert(graph_var);
            where = "GRAPH ?" + graph_var + " { " + bgp() + " }";
            if (coin(rng_, 0.6)) {
                if (coin(rng_)) {
                    used_.insert("ver");
                    where += " ?" + graph_var + " <urn:converg:vocab:is-in-version> ?ver .";
                } else {
                    used_.insert("gr");
                    where += " ?" + graph_var + " <urn:converg:vocab:is-version-of> ?gr .";
                }
            }
        }
        if (coin(rng_, 0.25)) {
            auto saved = used_;
            std::string right = coin(rng_) ? "GRAPH ?" + graph_var + " { " + bgp() + " }"
                                           : "GRAPH " + graph_constant(store) + " { " + bgp() + " }";
            used_ = saved;
            where = "{ " + where + " } MINUS { " + right + " }";
        }
        std::vector<std::string> vars(used_.begin(), used_.end());
        if (vars.empty()) return "SELECT (COUNT(?zz) AS ?n) WHERE { " + where + " }";
        if (coin(rng_, 0.4)) {
            static const char* fns[] = {"COUNT", "COUNT DISTINCT", "MAX", "MIN", "SUM"};
            std::string fn = fns[uniform(rng_, 0, 4)];
            std::string arg = pick(rng_, vars);
            std::string agg = fn == "COUNT DISTINCT" ? "COUNT(DISTINCT ?" + arg + ")" : fn + "(?" + arg + ")";
            if (coin(rng_, 0.3)) return "SELECT (" + agg + " AS ?agg) WHERE { " + where + " }";
            std::string key = pick(rng_, vars);
            return "SELECT ?" + key + " (" + agg + " AS ?agg) WHERE { " + where + " } GROUP BY ?" + key;
        }
        std::string select = "SELECT";
        for (const std::string& v : vars)
            if (coin(rng_, 0.8) || v == vars.front()) select += " ?" + v;
        return select + " WHERE { " + where + " }";
    }

    // A random 1-3 pattern BGP body, without the surrounding braces.
    std::string graph_block() {
        used_.clear();
        return bgp();
    }

private:
    std::string var() {
        static const std::vector<std::string> names = {"a", "b", "c", "d"};
        std::string v = pick(rng_, names);
        used_.insert(v);
        return "?" + v;
    }

    std::string position(const std::vector<Term>& pool, double var_p) {
        if (coin(rng_, var_p)) return var();
        Term t = pick(rng_, pool);
        if (t.is_blank()) t = pool.front();
        return t.to_ntriples();
    }

    std::string bgp() {
        std::size_t n = uniform(rng_, 1, 3);
        std::string out;
        for (std::size_t i = 0; i < n; ++i)
            out += position(pools_.subjects, 0.7) + " " + position(pools_.predicates, 0.3) + " " +
                   position(pools_.objects, 0.6) + " . ";
        return out;
    }

    std::string metadata_bgp() {
        std::string out = var() + " <urn:converg:vocab:is-in-version> " + var() + " . ";
        if (coin(rng_)) out += var() + " <urn:converg:vocab:is-version-of> " + var() + " . ";
        return out;
    }

    std::string graph_constant(const Store& store) {
        if (!store.vngs().empty() && coin(rng_, 0.85))
            return store.dictionary().decode(pick(rng_, store.vngs()).vng).to_ntriples();
        return pick(rng_, pools_.graphs).to_ntriples();
    }

    std::mt19937_64& rng_;
    RandomPools pools_;
    std::set<std::string> used_;
};

// Evaluates with the condensed engine and the flat oracle; returns an empty
// string when they agree (including agreeing on raising EvaluationError).
inline std::string differential_mismatch(const Store& store, const std::string& text, EngineOptions options = {}) {
    sparql::Plan plan = sparql::compile(text);
    std::optional<ResultTable> engine, oracle;
    std::string engine_error, oracle_error;
    try {
        engine = evaluate(store, plan, options);
    } catch (const EvaluationError& e) {
        engine_error = e.what();
    }
    try {
        auto flat = store.export_flat();
        oracle = eval_oracle(flat, plan);
    } catch (const EvaluationError& e) {
        oracle_error = e.what();
    }
    if (engine.has_value() != oracle.has_value())
        return "error mismatch: engine='" + engine_error + "' oracle='" + oracle_error + "'";
    if (engine && !(*engine == *oracle))
        return "result mismatch\nengine:\n" + engine->to_tsv() + "oracle:\n" + oracle->to_tsv();
    return {};
}

}  // namespace converg::testing
