#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aggregate.hpp"
#include "error.hpp"
#include "result.hpp"
#include "sparql.hpp"
#include "term.hpp"

namespace converg {

namespace oracle {

using Solution = std::map<std::string, Term>;
using Solutions = std::vector<Solution>;

// Straightforward evaluation over a flat quad list: term-level bindings,
// nested loops, no indexes and no version bitmaps.
class FlatEvaluator {
public:
    FlatEvaluator(std::span<const Quad> quads, const sparql::Plan& plan) : plan_(plan) {
        for (const Quad& q : quads) {
            std::optional<Term> g = q.graph;
            graphs_[key(g)].push_back({q.subject, q.predicate, q.object});
            if (g && std::find(graph_names_.begin(), graph_names_.end(), *g) == graph_names_.end())
                graph_names_.push_back(*g);
        }
    }

    ResultTable run() {
        Solutions sols = eval_query(plan_.query, std::nullopt);
        ResultTable table;
        for (std::size_t i = 0; i < plan_.query.projection.size(); ++i)
            table.columns.push_back(plan_.query.output_name(i));
        for (const Solution& s : sols) {
            ResultTable::Row row;
            for (const std::string& c : table.columns) {
                auto it = s.find(c);
                row.push_back(it == s.end() ? std::nullopt : std::optional<Term>(it->second));
            }
            table.rows.push_back(std::move(row));
        }
        table.canonicalize();
        return table;
    }

private:
    using Graph = std::optional<Term>;

    static bool compatible(const Solution& a, const Solution& b) {
        for (const auto& [k, v] : a) {
            auto it = b.find(k);
            if (it != b.end() && it->second != v) return false;
        }
        return true;
    }

    static bool shares_variable(const Solution& a, const Solution& b) {
        for (const auto& [k, v] : a)
            if (b.contains(k)) return true;
        return false;
    }

    static bool unify(const sparql::TermOrVar& pattern, const Term& value, Solution& s) {
        if (auto t = std::get_if<Term>(&pattern)) return *t == value;
        const std::string& name = std::get<sparql::Variable>(pattern).name;
        auto [it, inserted] = s.emplace(name, value);
        return inserted || it->second == value;
    }

    static sparql::TermOrVar predicate_of(const sparql::TriplePattern& t) {
        if (auto v = std::get_if<sparql::Variable>(&t.predicate)) return *v;
        return std::get<Term>(t.predicate);
    }

    Solutions eval_bgp(const sparql::BgpPattern& bgp, const Graph& graph) {
        Solutions current{Solution{}};
        auto it = graphs_.find(key(graph));
        static const std::vector<std::array<Term, 3>> empty;
        const auto& triples = it == graphs_.end() ? empty : it->second;
        for (const sparql::TriplePattern& t : bgp.triples) {
            Solutions next;
            sparql::TermOrVar p = predicate_of(t);
            for (const Solution& s : current) {
                for (const auto& tr : triples) {
                    Solution extended = s;
                    if (unify(t.subject, tr[0], extended) && unify(p, tr[1], extended) && unify(t.object, tr[2], extended))
                        next.push_back(std::move(extended));
                }
            }
            current = std::move(next);
        }
        return current;
    }

    static Solutions join(const Solutions& left, const Solutions& right) {
        Solutions out;
        for (const Solution& l : left) {
            for (const Solution& r : right) {
                if (!compatible(l, r)) continue;
                Solution m = l;
                m.insert(r.begin(), r.end());
                out.push_back(std::move(m));
            }
        }
        return out;
    }

    Solutions eval_pattern(const sparql::Pattern& p, const Graph& graph) {
        if (auto bgp = std::get_if<sparql::BgpPattern>(&p.node)) return eval_bgp(*bgp, graph);
        if (auto gp = std::get_if<sparql::GraphPattern>(&p.node)) {
            Solutions out;
            for (const Term& g : graph_names_) {
                Solution binding;
                if (!unify(gp->target, g, binding)) continue;
                for (const Solution& s : eval_pattern(*gp->inner, g)) {
                    if (!compatible(s, binding)) continue;
                    Solution m = s;
                    m.insert(binding.begin(), binding.end());
                    out.push_back(std::move(m));
                }
            }
            return out;
        }
        if (auto jp = std::get_if<sparql::JoinPattern>(&p.node)) {
            Solutions acc{Solution{}};
            for (const sparql::Pattern& c : jp->children) acc = join(acc, eval_pattern(c, graph));
            return acc;
        }
        if (auto mp = std::get_if<sparql::MinusPattern>(&p.node)) {
            Solutions left = eval_pattern(*mp->left, graph);
            Solutions right = eval_pattern(*mp->right, graph);
            Solutions out;
            for (const Solution& l : left) {
                bool removed = false;
                for (const Solution& r : right)
                    if (shares_variable(l, r) && compatible(l, r)) removed = true;
                if (!removed) out.push_back(l);
            }
            return out;
        }
        return eval_query(*std::get<sparql::SubSelectPattern>(p.node).query, graph);
    }

    Solutions eval_query(const sparql::Query& q, const Graph& graph) {
        Solutions sols = eval_pattern(q.where, graph);
        if (q.group_by || q.has_aggregates()) sols = aggregate(q, sols);
        Solutions out;
        for (const Solution& s : sols) {
            Solution projected;
            for (std::size_t i = 0; i < q.projection.size(); ++i) {
                std::string name = q.output_name(i);
                if (auto it = s.find(name); it != s.end()) projected.emplace(name, it->second);
            }
            out.push_back(std::move(projected));
        }
        return out;
    }

    static Solutions aggregate(const sparql::Query& q, const Solutions& input) {
        std::vector<std::pair<Solution, Solutions>> groups;
        if (!q.group_by) groups.push_back({Solution{}, {}});
        for (const Solution& s : input) {
            Solution key;
            if (q.group_by)
                for (const sparql::Variable& v : *q.group_by)
                    if (auto it = s.find(v.name); it != s.end()) key.emplace(v.name, it->second);
            auto g = std::find_if(groups.begin(), groups.end(), [&](const auto& e) { return e.first == key; });
            if (g == groups.end()) {
                groups.push_back({key, {}});
                g = std::prev(groups.end());
            }
            g->second.push_back(s);
        }
        Solutions out;
        for (const auto& [key, members] : groups) {
            Solution row = key;
            for (std::size_t i = 0; i < q.projection.size(); ++i) {
                auto a = std::get_if<sparql::Aggregate>(&q.projection[i].expr);
                if (!a) continue;
                std::vector<Term> values;
                for (const Solution& m : members)
                    if (auto it = m.find(a->argument.name); it != m.end()) values.push_back(it->second);
                std::optional<Term> result;
                switch (a->function) {
                    case sparql::AggregateFunction::count: result = count_literal(values.size()); break;
                    case sparql::AggregateFunction::count_distinct: {
                        std::set<std::string> seen;
                        for (const Term& t : values) seen.insert(t.to_ntriples());
                        result = count_literal(seen.size());
                        break;
                    }
                    case sparql::AggregateFunction::max:
                    case sparql::AggregateFunction::min:
                        for (const Term& t : values) {
                            if (!result) {
                                result = t;
                                continue;
                            }
                            auto c = compare_terms_sparql_order(t, *result);
                            if (a->function == sparql::AggregateFunction::max ? c > 0 : c < 0) result = t;
                        }
                        break;
                    case sparql::AggregateFunction::sum: {
                        SumAccumulator sum;
                        for (const Term& t : values)
                            if (!sum.add(t, t.numeric_value()))
                                throw EvaluationError("SUM over non-numeric term " + t.to_ntriples());
                        result = sum.result();
                        break;
                    }
                }
                if (result) row.emplace(q.output_name(i), *result);
            }
            out.push_back(std::move(row));
        }
        return out;
    }

    const sparql::Plan& plan_;
    static std::string key(const Graph& g) { return g ? g->to_ntriples() : std::string(); }

    std::map<std::string, std::vector<std::array<Term, 3>>> graphs_;
    std::vector<Term> graph_names_;
};

}  // namespace oracle

// Reference evaluator over the flat export (named graphs are the vngs, the
// default graph holds the metadata triples). Rows in canonical order.
inline ResultTable eval_oracle(std::span<const Quad> flat, const sparql::Plan& plan) {
    return oracle::FlatEvaluator(flat, plan).run();
}

}  // namespace converg
