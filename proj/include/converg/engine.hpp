#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "aggregate.hpp"
#include "bitmap.hpp"
#include "error.hpp"
#include "result.hpp"
#include "sparql.hpp"
#include "store.hpp"

namespace converg {

// Per-version counts; index m-1 holds version m.
using VersionVector = std::vector<std::uint64_t>;

struct EngineOptions {
    // Disables the condensed GRAPH/metadata join and the COUNT-by-version
    // vector path, forcing per-vng evaluation.
    bool fast_paths = true;
};

// One output row of BGP evaluation inside a graph variable, kept condensed.
struct CondensedSolution {
    std::map<std::string, Term> bindings;
    Term graph;
    VersionBitmap versions;

    friend bool operator==(const CondensedSolution&, const CondensedSolution&) = default;
};

namespace engine {

inline constexpr TermId unbound = ~TermId{0};
inline constexpr std::size_t max_variables = 64;

using Mask = std::uint64_t;

// Row-major multiset of solutions over the plan's numbered variables.
class Relation {
public:
    explicit Relation(std::size_t width) : width_(width) {}

    static Relation unit(std::size_t width) {
        Relation r(width);
        r.cells_.assign(width, unbound);
        r.rows_ = 1;
        return r;
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return rows_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const TermId> row(std::size_t i) const { return {cells_.data() + i * width_, width_}; }
    std::span<TermId> row(std::size_t i) { return {cells_.data() + i * width_, width_}; }

    void push(std::span<const TermId> r) {
        cells_.insert(cells_.end(), r.begin(), r.end());
        ++rows_;
    }

    Mask mask(std::size_t i) const {
        Mask m = 0;
        auto r = row(i);
        for (std::size_t c = 0; c < width_; ++c)
            if (r[c] != unbound) m |= Mask{1} << c;
        return m;
    }

private:
    std::size_t width_;
    std::size_t rows_ = 0;
    std::vector<TermId> cells_;
};

struct KeyHash {
    std::size_t operator()(const std::vector<TermId>& v) const noexcept {
        std::size_t h = v.size();
        for (TermId x : v) h = hash_combine(h, std::hash<TermId>{}(x));
        return h;
    }
};

inline void project_key(std::span<const TermId> row, Mask cols, std::vector<TermId>& key) {
    key.clear();
    for (std::size_t c = 0; cols; ++c, cols >>= 1)
        if (cols & 1) key.push_back(row[c]);
}

// Rows of `rel` grouped by their set of bound variables, in first-seen order.
struct Buckets {
    std::vector<Mask> masks;
    std::vector<std::vector<std::uint32_t>> rows;

    explicit Buckets(const Relation& rel) {
        std::unordered_map<Mask, std::size_t> index;
        for (std::size_t i = 0; i < rel.size(); ++i) {
            Mask m = rel.mask(i);
            auto [it, inserted] = index.emplace(m, masks.size());
            if (inserted) {
                masks.push_back(m);
                rows.emplace_back();
            }
            rows[it->second].push_back(static_cast<std::uint32_t>(i));
        }
    }
};

// Hash indexes over right-hand buckets, built lazily per shared-column set.
class BucketIndex {
public:
    BucketIndex(const Relation& rel, const Buckets& buckets) : rel_(rel), buckets_(buckets) {}

    const std::vector<std::uint32_t>* probe(std::size_t bucket, Mask shared, std::span<const TermId> left,
                                            std::vector<TermId>& scratch) {
        auto& table = tables_[{bucket, shared}];
        if (!table) {
            table.emplace();
            std::vector<TermId> key;
            for (std::uint32_t r : buckets_.rows[bucket]) {
                project_key(rel_.row(r), shared, key);
                (*table)[key].push_back(r);
            }
        }
        project_key(left, shared, scratch);
        auto it = table->find(scratch);
        return it == table->end() ? nullptr : &it->second;
    }

private:
    struct PairHash {
        std::size_t operator()(const std::pair<std::size_t, Mask>& p) const noexcept {
            return hash_combine(p.first, std::hash<Mask>{}(p.second));
        }
    };
    using Table = std::unordered_map<std::vector<TermId>, std::vector<std::uint32_t>, KeyHash>;

    const Relation& rel_;
    const Buckets& buckets_;
    std::unordered_map<std::pair<std::size_t, Mask>, std::optional<Table>, PairHash> tables_;
};

// Natural join; multiplicities multiply.
inline Relation join(const Relation& left, const Relation& right) {
    Relation out(left.width());
    if (left.empty() || right.empty()) return out;
    Buckets rb(right);
    BucketIndex index(right, rb);
    std::vector<TermId> scratch;
    std::vector<TermId> merged(left.width());
    for (std::size_t i = 0; i < left.size(); ++i) {
        auto l = left.row(i);
        Mask lm = left.mask(i);
        for (std::size_t b = 0; b < rb.masks.size(); ++b) {
            Mask shared = lm & rb.masks[b];
            auto emit = [&](std::uint32_t r) {
                auto rr = right.row(r);
                for (std::size_t c = 0; c < merged.size(); ++c) merged[c] = l[c] != unbound ? l[c] : rr[c];
                out.push(merged);
            };
            if (shared == 0) {
                for (std::uint32_t r : rb.rows[b]) emit(r);
            } else if (auto hits = index.probe(b, shared, l, scratch)) {
                for (std::uint32_t r : *hits) emit(r);
            }
        }
    }
    return out;
}

// SPARQL MINUS: drop a left row when some right row shares at least one bound
// variable with it and agrees on all shared ones.
inline Relation minus(const Relation& left, const Relation& right) {
    Relation out(left.width());
    if (right.empty()) return left;
    Buckets rb(right);
    BucketIndex index(right, rb);
    std::vector<TermId> scratch;
    for (std::size_t i = 0; i < left.size(); ++i) {
        auto l = left.row(i);
        Mask lm = left.mask(i);
        bool removed = false;
        for (std::size_t b = 0; b < rb.masks.size() && !removed; ++b) {
            Mask shared = lm & rb.masks[b];
            if (shared != 0 && index.probe(b, shared, l, scratch)) removed = true;
        }
        if (!removed) out.push(l);
    }
    return out;
}

// A triple pattern with constants resolved to ids. `var` holds the column
// index for variable positions.
struct Slot {
    bool is_var = false;
    std::size_t var = 0;
    TermId id = unbound;
};

struct IdPattern {
    Slot s, p, o;
};

// Where a BGP is matched: the metadata (default) graph, or one versioned
// named graph.
struct Context {
    bool in_vng = false;
    TermId graph = 0;
    VersionOrdinal version;
};

}  // namespace engine

class Evaluator {
public:
    Evaluator(const Store& store, const sparql::Plan& plan, EngineOptions options = {})
        : store_(store), plan_(plan), options_(options), width_(plan.variables.size()) {
        if (width_ > engine::max_variables)
            throw QueryError("query uses more than " + std::to_string(engine::max_variables) + " variables");
        derived_metadata_ok_ = !store.user_metadata_uses_version_vocab();
    }

    ResultTable run() {
        engine::Relation rel = eval_query(plan_.query, engine::Context{}, true);
        ResultTable table;
        std::vector<std::size_t> cols;
        for (std::size_t i = 0; i < plan_.query.projection.size(); ++i) {
            std::string name = plan_.query.output_name(i);
            table.columns.push_back(name);
            cols.push_back(plan_.index_of(name));
        }
        table.rows.reserve(rel.size());
        for (std::size_t i = 0; i < rel.size(); ++i) {
            auto r = rel.row(i);
            ResultTable::Row row;
            row.reserve(cols.size());
            for (std::size_t c : cols) {
                if (r[c] == engine::unbound) row.emplace_back(std::nullopt);
                else row.emplace_back(decode(r[c]));
            }
            table.rows.push_back(std::move(row));
        }
        table.warnings = std::move(warnings_);
        return table;
    }

    // Matches `bgp` inside every named graph at once. For each graph g and each
    // assignment whose patterns hit entries e_1..e_k of g, emits the AND of
    // their version bitmaps when it is non-zero.
    template <typename F>
    void for_each_condensed(const std::vector<sparql::TriplePattern>& bgp, F&& emit) {
        std::vector<engine::IdPattern> pats;
        if (!resolve(bgp, pats)) return;
        std::vector<TermId> row(width_, engine::unbound);
        std::vector<bool> used(pats.size(), false);
        for (TermId g : store_.graphs()) {
            match_condensed(pats, used, row, 0, nullptr, g, [&](const std::vector<TermId>& r, const VersionBitmap& bits) {
                emit(r, g, bits);
            });
        }
    }

    VersionVector count_by_version(const std::vector<sparql::TriplePattern>& bgp) {
        VersionVector counts(store_.version_count(), 0);
        for_each_condensed(bgp, [&](const std::vector<TermId>&, TermId, const VersionBitmap& bits) {
            bits.for_each_set([&](VersionOrdinal m) { ++counts[m.value - 1]; });
        });
        return counts;
    }

    const Term& decode(TermId id) const {
        const Dictionary& dict = store_.dictionary();
        if (id < dict.size()) return dict.decode(id);
        return local_terms_.at(id - dict.size());
    }

private:
    using Relation = engine::Relation;
    using Context = engine::Context;

    // --- term ids --------------------------------------------------------

    // Id for a term that may not be in the store (aggregate results). Terms
    // present in the dictionary always map to their dictionary id, so id
    // equality stays term equality.
    TermId intern(const Term& t) {
        const Dictionary& dict = store_.dictionary();
        if (auto id = dict.find(t)) return *id;
        auto [it, inserted] = local_ids_.emplace(t, dict.size() + local_terms_.size());
        if (inserted) local_terms_.push_back(t);
        return it->second;
    }

    const std::optional<Decimal>& numeric(TermId id) {
        auto it = numeric_cache_.find(id);
        if (it == numeric_cache_.end()) it = numeric_cache_.emplace(id, decode(id).numeric_value()).first;
        return it->second;
    }

    std::strong_ordering compare(TermId a, TermId b) {
        const Term& ta = decode(a);
        const Term& tb = decode(b);
        if (ta.kind() != tb.kind() || !ta.is_literal()) return compare_terms_sparql_order(ta, tb);
        const auto& na = numeric(a);
        const auto& nb = numeric(b);
        if (na && nb) {
            if (auto c = *na <=> *nb; c != 0) return c;
        } else if (na || nb) {
            return na ? std::strong_ordering::less : std::strong_ordering::greater;
        }
        return compare_terms_sparql_order(ta, tb);
    }

    // --- pattern resolution ----------------------------------------------

    engine::Slot slot(const sparql::TermOrVar& t, bool& ok) const {
        if (auto v = std::get_if<sparql::Variable>(&t)) return {true, plan_.index_of(v->name), engine::unbound};
        auto id = store_.dictionary().find(std::get<Term>(t));
        if (!id) ok = false;
        return {false, 0, id.value_or(engine::unbound)};
    }

    engine::Slot slot(const sparql::PredicateItem& p, bool& ok) const {
        if (auto v = std::get_if<sparql::Variable>(&p)) return {true, plan_.index_of(v->name), engine::unbound};
        if (auto t = std::get_if<Term>(&p)) return slot(sparql::TermOrVar{*t}, ok);
        throw QueryError("predicate path reached the evaluator; run validate_and_name first");
    }

    // False when some constant is unknown to the store: nothing can match.
    bool resolve(const std::vector<sparql::TriplePattern>& bgp, std::vector<engine::IdPattern>& out) const {
        bool ok = true;
        for (const sparql::TriplePattern& t : bgp) out.push_back({slot(t.subject, ok), slot(t.predicate, ok), slot(t.object, ok)});
        return ok;
    }

    static std::optional<TermId> bound_value(const engine::Slot& s, const std::vector<TermId>& row) {
        if (!s.is_var) return s.id;
        if (row[s.var] != engine::unbound) return row[s.var];
        return std::nullopt;
    }

    // Binds the three positions against (s, p, o); false on conflict.
    static bool bind(const engine::IdPattern& pat, TermId s, TermId p, TermId o, std::vector<TermId>& row) {
        auto one = [&](const engine::Slot& slot, TermId v) {
            if (!slot.is_var) return slot.id == v;
            TermId& cell = row[slot.var];
            if (cell == engine::unbound) {
                cell = v;
                return true;
            }
            return cell == v;
        };
        return one(pat.s, s) && one(pat.p, p) && one(pat.o, o);
    }

    // Most-bound unused pattern first; ties keep written order.
    static std::size_t pick_next(const std::vector<engine::IdPattern>& pats, const std::vector<bool>& used,
                                 const std::vector<TermId>& row) {
        std::size_t best = pats.size();
        int best_score = -1;
        for (std::size_t i = 0; i < pats.size(); ++i) {
            if (used[i]) continue;
            int score = bound_value(pats[i].s, row).has_value() + bound_value(pats[i].p, row).has_value() +
                        bound_value(pats[i].o, row).has_value();
            if (score > best_score) {
                best = i;
                best_score = score;
            }
        }
        return best;
    }

    template <typename F>
    void match_condensed(const std::vector<engine::IdPattern>& pats, std::vector<bool>& used, std::vector<TermId>& row,
                         std::size_t depth, const VersionBitmap* acc, TermId graph, F&& emit) {
        if (depth == pats.size()) {
            if (acc) emit(row, *acc);
            return;
        }
        std::size_t i = pick_next(pats, used, row);
        const engine::IdPattern& pat = pats[i];
        used[i] = true;
        QuadPattern q{graph, bound_value(pat.s, row), bound_value(pat.p, row), bound_value(pat.o, row)};
        store_.for_each_match(q, [&](const CondensedEntry& e) {
            VersionBitmap bits = acc ? (*acc & e.versions) : e.versions;
            if (bits.none()) return;
            std::vector<TermId> next = row;
            if (!bind(pat, e.subject, e.predicate, e.object, next)) return;
            match_condensed(pats, used, next, depth + 1, &bits, graph, emit);
        });
        used[i] = false;
    }

    void match_in_vng(const std::vector<engine::IdPattern>& pats, std::vector<bool>& used, std::vector<TermId>& row,
                      std::size_t depth, const Context& ctx, Relation& out) {
        if (depth == pats.size()) {
            out.push(row);
            return;
        }
        std::size_t i = pick_next(pats, used, row);
        const engine::IdPattern& pat = pats[i];
        used[i] = true;
        QuadPattern q{ctx.graph, bound_value(pat.s, row), bound_value(pat.p, row), bound_value(pat.o, row)};
        store_.for_each_match(q, [&](const CondensedEntry& e) {
            if (!e.versions.test(ctx.version)) return;
            std::vector<TermId> next = row;
            if (!bind(pat, e.subject, e.predicate, e.object, next)) return;
            match_in_vng(pats, used, next, depth + 1, ctx, out);
        });
        used[i] = false;
    }

    const std::vector<TripleIds>& metadata() {
        if (!metadata_) {
            metadata_.emplace();
            store_.for_each_metadata([&](const TripleIds& t) { metadata_->push_back(t); });
        }
        return *metadata_;
    }

    void match_metadata(const std::vector<engine::IdPattern>& pats, std::vector<bool>& used, std::vector<TermId>& row,
                        std::size_t depth, Relation& out) {
        if (depth == pats.size()) {
            out.push(row);
            return;
        }
        std::size_t i = pick_next(pats, used, row);
        const engine::IdPattern& pat = pats[i];
        used[i] = true;
        for (const TripleIds& t : metadata()) {
            std::vector<TermId> next = row;
            if (!bind(pat, t.s, t.p, t.o, next)) continue;
            match_metadata(pats, used, next, depth + 1, out);
        }
        used[i] = false;
    }

    // --- algebra -----------------------------------------------------------

    Relation eval_bgp(const sparql::BgpPattern& bgp, const Context& ctx) {
        Relation out(width_);
        std::vector<engine::IdPattern> pats;
        if (!resolve(bgp.triples, pats)) return out;
        std::vector<TermId> row(width_, engine::unbound);
        std::vector<bool> used(pats.size(), false);
        if (ctx.in_vng) match_in_vng(pats, used, row, 0, ctx, out);
        else match_metadata(pats, used, row, 0, out);
        return out;
    }

    static bool mentions(const sparql::BgpPattern& bgp, const std::string& var) {
        auto is = [&](const auto& x) {
            auto v = std::get_if<sparql::Variable>(&x);
            return v && v->name == var;
        };
        return std::any_of(bgp.triples.begin(), bgp.triples.end(), [&](const sparql::TriplePattern& t) {
            return is(t.subject) || is(t.predicate) || is(t.object);
        });
    }

    // Metadata triple (?vng vers:p X) answered from the vng table.
    struct DerivedBinding {
        bool version;  // is-in-version (true) or is-version-of (false)
        engine::Slot object;
    };

    // Expands condensed rows of GRAPH ?var { bgp } into one row per set
    // version, binding ?var and any derived metadata patterns.
    Relation eval_graph_var_condensed(const sparql::BgpPattern& bgp, std::size_t var,
                                      const std::vector<DerivedBinding>& derived) {
        Relation out(width_);
        std::vector<TermId> expanded(width_);
        for_each_condensed(bgp.triples, [&](const std::vector<TermId>& row, TermId g, const VersionBitmap& bits) {
            bits.for_each_set([&](VersionOrdinal m) {
                const VngEntry* v = store_.find_vng(g, m);
                if (!v) throw CorruptionError("set version bit without a vng");
                std::copy(row.begin(), row.end(), expanded.begin());
                expanded[var] = v->vng;
                for (const DerivedBinding& d : derived) {
                    TermId value = d.version ? v->version_term : v->graph;
                    if (!d.object.is_var) {
                        if (d.object.id != value) return;
                    } else if (expanded[d.object.var] == engine::unbound) {
                        expanded[d.object.var] = value;
                    } else if (expanded[d.object.var] != value) {
                        return;
                    }
                }
                out.push(expanded);
            });
        });
        return out;
    }

    Relation eval_graph(const sparql::GraphPattern& gp) {
        if (auto t = std::get_if<Term>(&gp.target)) {
            const VngEntry* v = store_.find_vng(*t);
            if (!v) {
                warnings_.push_back("GRAPH " + t->to_ntriples() + " is not a versioned named graph; it matches nothing");
                return Relation(width_);
            }
            return eval_pattern(*gp.inner, Context{true, v->graph, v->version});
        }
        std::size_t var = plan_.index_of(std::get<sparql::Variable>(gp.target).name);
        const std::string& name = std::get<sparql::Variable>(gp.target).name;
        if (options_.fast_paths) {
            if (auto bgp = std::get_if<sparql::BgpPattern>(&gp.inner->node); bgp && !bgp->triples.empty() && !mentions(*bgp, name))
                return eval_graph_var_condensed(*bgp, var, {});
        }
        Relation out(width_);
        for (const VngEntry& v : store_.vngs()) {
            Relation inner = eval_pattern(*gp.inner, Context{true, v.graph, v.version});
            for (std::size_t i = 0; i < inner.size(); ++i) {
                auto r = inner.row(i);
                if (r[var] != engine::unbound && r[var] != v.vng) continue;
                out.push(r);
                out.row(out.size() - 1)[var] = v.vng;
            }
        }
        return out;
    }

    // GRAPH ?v { bgp } joined with default-graph patterns (?v vers:* X): the
    // metadata patterns are answered during expansion instead of joined.
    std::optional<Relation> try_condensed_join(const sparql::JoinPattern& join, const Context& ctx,
                                               std::vector<const sparql::Pattern*>& rest,
                                               std::vector<sparql::BgpPattern>& residual) {
        if (!options_.fast_paths || ctx.in_vng || !derived_metadata_ok_) return std::nullopt;
        const sparql::GraphPattern* graph = nullptr;
        const sparql::BgpPattern* graph_bgp = nullptr;
        std::string var;
        for (const sparql::Pattern& c : join.children) {
            auto gp = std::get_if<sparql::GraphPattern>(&c.node);
            if (!gp || !std::holds_alternative<sparql::Variable>(gp->target)) continue;
            auto bgp = std::get_if<sparql::BgpPattern>(&gp->inner->node);
            if (!bgp || bgp->triples.empty()) continue;
            const std::string& name = std::get<sparql::Variable>(gp->target).name;
            if (mentions(*bgp, name)) continue;
            graph = gp;
            graph_bgp = bgp;
            var = name;
            break;
        }
        if (!graph) return std::nullopt;

        std::vector<DerivedBinding> derived;
        for (const sparql::Pattern& c : join.children) {
            if (auto gp = std::get_if<sparql::GraphPattern>(&c.node); gp == graph) continue;
            auto bgp = std::get_if<sparql::BgpPattern>(&c.node);
            if (!bgp) {
                rest.push_back(&c);
                continue;
            }
            sparql::BgpPattern leftover;
            for (const sparql::TriplePattern& t : bgp->triples) {
                auto s = std::get_if<sparql::Variable>(&t.subject);
                auto p = std::get_if<Term>(&t.predicate);
                bool vocab_pred = p && p->is_iri() && (p->lexical() == vocab::is_in_version || p->lexical() == vocab::is_version_of);
                if (s && s->name == var && vocab_pred) {
                    bool ok = true;
                    engine::Slot obj = slot(t.object, ok);
                    if (!ok) return Relation(width_);  // constant unknown to the store
                    derived.push_back({p->lexical() == vocab::is_in_version, obj});
                } else {
                    leftover.triples.push_back(t);
                }
            }
            if (!leftover.triples.empty()) residual.push_back(std::move(leftover));
        }
        return eval_graph_var_condensed(*graph_bgp, plan_.index_of(var), derived);
    }

    Relation eval_join(const sparql::JoinPattern& join, const Context& ctx) {
        std::vector<const sparql::Pattern*> rest;
        std::vector<sparql::BgpPattern> residual;
        if (auto condensed = try_condensed_join(join, ctx, rest, residual)) {
            Relation acc = std::move(*condensed);
            for (const sparql::BgpPattern& b : residual) {
                if (acc.empty()) break;
                acc = engine::join(acc, eval_bgp(b, ctx));
            }
            for (const sparql::Pattern* p : rest) {
                if (acc.empty()) break;
                acc = engine::join(acc, eval_pattern(*p, ctx));
            }
            return acc;
        }
        Relation acc = Relation::unit(width_);
        for (const sparql::Pattern& c : join.children) {
            acc = engine::join(acc, eval_pattern(c, ctx));
            if (acc.empty()) break;
        }
        return acc;
    }

    Relation eval_pattern(const sparql::Pattern& p, const Context& ctx) {
        return std::visit(
            [&](const auto& n) -> Relation {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, sparql::BgpPattern>) {
                    return eval_bgp(n, ctx);
                } else if constexpr (std::is_same_v<T, sparql::GraphPattern>) {
                    return eval_graph(n);
                } else if constexpr (std::is_same_v<T, sparql::JoinPattern>) {
                    return eval_join(n, ctx);
                } else if constexpr (std::is_same_v<T, sparql::MinusPattern>) {
                    Relation left = eval_pattern(*n.left, ctx);
                    if (left.empty()) return left;
                    return engine::minus(left, eval_pattern(*n.right, ctx));
                } else {
                    return eval_query(*n.query, ctx, false);
                }
            },
            p.node);
    }

    // --- aggregation -----------------------------------------------------

    struct AggState {
        std::size_t count = 0;
        std::unordered_set<TermId> distinct;
        TermId best = engine::unbound;
        SumAccumulator sum;
    };

    std::string describe_group(const std::vector<std::size_t>& cols, std::span<const TermId> key) const {
        std::string out = "(";
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (i) out += ", ";
            out += "?" + plan_.variables[cols[i]] + "=" + (key[i] == engine::unbound ? "UNBOUND" : decode(key[i]).to_ntriples());
        }
        return out + ")";
    }

    Relation group_aggregate(const sparql::Query& q, const Relation& input) {
        std::vector<std::size_t> key_cols;
        if (q.group_by)
            for (const sparql::Variable& v : *q.group_by) key_cols.push_back(plan_.index_of(v.name));
        struct AggSpec {
            sparql::AggregateFunction fn;
            std::size_t arg;
            std::size_t out;
        };
        std::vector<AggSpec> specs;
        for (std::size_t i = 0; i < q.projection.size(); ++i)
            if (auto a = std::get_if<sparql::Aggregate>(&q.projection[i].expr))
                specs.push_back({a->function, plan_.index_of(a->argument.name), plan_.index_of(q.output_name(i))});

        std::unordered_map<std::vector<TermId>, std::size_t, engine::KeyHash> group_index;
        std::vector<std::vector<TermId>> keys;
        std::vector<std::vector<AggState>> states;
        std::vector<TermId> key;
        auto group_of = [&](std::vector<TermId>& k) -> std::size_t {
            auto [it, inserted] = group_index.emplace(k, keys.size());
            if (inserted) {
                keys.push_back(k);
                states.emplace_back(specs.size());
            }
            return it->second;
        };
        if (!q.group_by) {
            key.clear();
            group_of(key);  // one group even over empty input
        }
        for (std::size_t i = 0; i < input.size(); ++i) {
            auto row = input.row(i);
            key.clear();
            for (std::size_t c : key_cols) key.push_back(row[c]);
            std::size_t g = group_of(key);
            for (std::size_t a = 0; a < specs.size(); ++a) {
                TermId v = row[specs[a].arg];
                if (v == engine::unbound) continue;
                AggState& st = states[g][a];
                switch (specs[a].fn) {
                    case sparql::AggregateFunction::count: ++st.count; break;
                    case sparql::AggregateFunction::count_distinct: st.distinct.insert(v); break;
                    case sparql::AggregateFunction::max:
                        if (st.best == engine::unbound || compare(v, st.best) > 0) st.best = v;
                        break;
                    case sparql::AggregateFunction::min:
                        if (st.best == engine::unbound || compare(v, st.best) < 0) st.best = v;
                        break;
                    case sparql::AggregateFunction::sum:
                        if (!st.sum.add(decode(v), numeric(v)))
                            throw EvaluationError("SUM over non-numeric term " + decode(v).to_ntriples() +
                                                  " in group " + describe_group(key_cols, key));
                        break;
                }
            }
        }
        Relation out(width_);
        std::vector<TermId> row(width_);
        for (std::size_t g = 0; g < keys.size(); ++g) {
            std::fill(row.begin(), row.end(), engine::unbound);
            for (std::size_t k = 0; k < key_cols.size(); ++k) row[key_cols[k]] = keys[g][k];
            for (std::size_t a = 0; a < specs.size(); ++a) {
                const AggState& st = states[g][a];
                switch (specs[a].fn) {
                    case sparql::AggregateFunction::count: row[specs[a].out] = intern(count_literal(st.count)); break;
                    case sparql::AggregateFunction::count_distinct:
                        row[specs[a].out] = intern(count_literal(st.distinct.size()));
                        break;
                    case sparql::AggregateFunction::max:
                    case sparql::AggregateFunction::min: row[specs[a].out] = st.best; break;
                    case sparql::AggregateFunction::sum: row[specs[a].out] = intern(st.sum.result()); break;
                }
            }
            out.push(row);
        }
        return out;
    }

    // SELECT ?ver COUNT(?x) { GRAPH ?g { bgp } ?g vers:is-in-version ?ver }
    // GROUP BY ?ver, answered by summing version bitmaps.
    std::optional<Relation> try_count_fast_path(const sparql::Query& q, const Context& ctx) {
        if (!options_.fast_paths || ctx.in_vng || !derived_metadata_ok_ || !q.group_by || q.group_by->size() != 1)
            return std::nullopt;
        auto join = std::get_if<sparql::JoinPattern>(&q.where.node);
        if (!join || join->children.size() != 2) return std::nullopt;
        const sparql::GraphPattern* gp = nullptr;
        const sparql::BgpPattern* meta = nullptr;
        for (const sparql::Pattern& c : join->children) {
            if (auto g = std::get_if<sparql::GraphPattern>(&c.node)) gp = g;
            else if (auto b = std::get_if<sparql::BgpPattern>(&c.node)) meta = b;
        }
        if (!gp || !meta || meta->triples.size() != 1) return std::nullopt;
        auto graph_var = std::get_if<sparql::Variable>(&gp->target);
        auto bgp = std::get_if<sparql::BgpPattern>(&gp->inner->node);
        if (!graph_var || !bgp || bgp->triples.empty()) return std::nullopt;
        const sparql::TriplePattern& t = meta->triples.front();
        auto s = std::get_if<sparql::Variable>(&t.subject);
        auto p = std::get_if<Term>(&t.predicate);
        auto o = std::get_if<sparql::Variable>(&t.object);
        const std::string& version_var = q.group_by->front().name;
        if (!s || !p || !o || s->name != graph_var->name || p->lexical() != vocab::is_in_version ||
            o->name != version_var || version_var == graph_var->name)
            return std::nullopt;
        if (mentions(*bgp, graph_var->name) || mentions(*bgp, version_var)) return std::nullopt;
        std::vector<std::size_t> count_cols;
        for (std::size_t i = 0; i < q.projection.size(); ++i) {
            const auto& item = q.projection[i];
            if (auto v = std::get_if<sparql::Variable>(&item.expr)) {
                if (v->name != version_var) return std::nullopt;
                continue;
            }
            const auto& a = std::get<sparql::Aggregate>(item.expr);
            if (a.function != sparql::AggregateFunction::count) return std::nullopt;
            const std::string& arg = a.argument.name;
            if (arg != graph_var->name && arg != version_var && !mentions(*bgp, arg)) return std::nullopt;
            count_cols.push_back(plan_.index_of(q.output_name(i)));
        }
        if (count_cols.empty()) return std::nullopt;

        VersionVector counts = count_by_version(bgp->triples);
        std::size_t ver_col = plan_.index_of(version_var);
        Relation out(width_);
        std::vector<TermId> row(width_);
        for (std::uint32_t m = 1; m <= counts.size(); ++m) {
            if (counts[m - 1] == 0) continue;
            auto id = store_.dictionary().find(version_iri(VersionOrdinal(m)));
            if (!id) throw CorruptionError("version IRI missing for a populated version");
            std::fill(row.begin(), row.end(), engine::unbound);
            row[ver_col] = *id;
            for (std::size_t c : count_cols) row[c] = intern(count_literal(counts[m - 1]));
            out.push(row);
        }
        return out;
    }

    Relation eval_query(const sparql::Query& q, const Context& ctx, bool top_level) {
        Relation rel(width_);
        bool aggregated = q.group_by || q.has_aggregates();
        if (auto fast = top_level ? try_count_fast_path(q, ctx) : std::nullopt) {
            rel = std::move(*fast);
        } else {
            rel = eval_pattern(q.where, ctx);
            if (aggregated) rel = group_aggregate(q, rel);
        }
        // Sub-select boundary: only projected names survive.
        Relation out(width_);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < q.projection.size(); ++i) keep.push_back(plan_.index_of(q.output_name(i)));
        std::vector<TermId> row(width_);
        for (std::size_t i = 0; i < rel.size(); ++i) {
            std::fill(row.begin(), row.end(), engine::unbound);
            auto r = rel.row(i);
            for (std::size_t c : keep) row[c] = r[c];
            out.push(row);
        }
        return out;
    }

    const Store& store_;
    const sparql::Plan& plan_;
    EngineOptions options_;
    std::size_t width_;
    bool derived_metadata_ok_ = true;
    std::optional<std::vector<TripleIds>> metadata_;
    std::vector<Term> local_terms_;
    std::unordered_map<Term, TermId> local_ids_;
    std::unordered_map<TermId, std::optional<Decimal>> numeric_cache_;
    std::vector<std::string> warnings_;
};

// Evaluates a normalized plan against the store; rows in canonical order.
inline ResultTable evaluate(const Store& store, const sparql::Plan& plan, EngineOptions options = {}) {
    ResultTable table = Evaluator(store, plan, options).run();
    table.canonicalize();
    return table;
}

// parse -> validate -> evaluate -> canonical sort.
inline ResultTable execute_query(const Store& store, std::string_view text, EngineOptions options = {}) {
    return evaluate(store, sparql::compile(text), options);
}

namespace engine {

inline sparql::Plan bgp_plan(const std::vector<sparql::TriplePattern>& bgp, const std::string& graph_var) {
    sparql::Query q;
    q.where = sparql::Pattern{sparql::GraphPattern{sparql::Variable{graph_var},
                                                   sparql::Box<sparql::Pattern>(sparql::Pattern{sparql::BgpPattern{bgp}})}};
    std::set<std::string> vars = sparql::detail::visible_vars(q.where);
    for (const std::string& v : vars) q.projection.push_back({sparql::Variable{v}, std::nullopt});
    sparql::Plan plan = sparql::validate_and_name(q);
    auto inner = std::get_if<sparql::BgpPattern>(
        &std::get<sparql::GraphPattern>(plan.query.where.node).inner->node);
    if (!inner || inner->triples.empty()) throw QueryError("BGP must be non-empty");
    for (const auto& t : inner->triples) {
        auto is_graph_var = [&](const auto& x) {
            auto v = std::get_if<sparql::Variable>(&x);
            return v && v->name == graph_var;
        };
        if (is_graph_var(t.subject) || is_graph_var(t.predicate) || is_graph_var(t.object))
            throw QueryError("graph variable ?" + graph_var + " may not occur inside the BGP");
    }
    return plan;
}

}  // namespace engine

// Condensed BGP evaluation over all named graphs: one row per (assignment,
// graph) with the AND of the matched entries' bitmaps.
inline std::vector<CondensedSolution> eval_bgp_in_graph_var(const Store& store,
                                                            const std::vector<sparql::TriplePattern>& bgp,
                                                            const std::string& graph_var) {
    sparql::Plan plan = engine::bgp_plan(bgp, graph_var);
    const auto& triples =
        std::get<sparql::BgpPattern>(std::get<sparql::GraphPattern>(plan.query.where.node).inner->node).triples;
    Evaluator ev(store, plan);
    std::vector<CondensedSolution> out;
    ev.for_each_condensed(triples, [&](const std::vector<TermId>& row, TermId g, const VersionBitmap& bits) {
        CondensedSolution s{{}, store.dictionary().decode(g), bits};
        for (std::size_t i = 0; i < row.size(); ++i)
            if (row[i] != engine::unbound) s.bindings.emplace(plan.variables[i], ev.decode(row[i]));
        out.push_back(std::move(s));
    });
    return out;
}

// Per-version count of BGP solutions across all named graphs, accumulated by
// adding the condensed rows' bitmaps.
inline VersionVector eval_count_by_version_fast(const Store& store, const std::vector<sparql::TriplePattern>& bgp,
                                                const std::string& graph_var) {
    sparql::Plan plan = engine::bgp_plan(bgp, graph_var);
    const auto& triples =
        std::get<sparql::BgpPattern>(std::get<sparql::GraphPattern>(plan.query.where.node).inner->node).triples;
    return Evaluator(store, plan).count_by_version(triples);
}

}  // namespace converg
