#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bitmap.hpp"
#include "dictionary.hpp"
#include "error.hpp"
#include "model.hpp"
#include "nquads.hpp"
#include "term.hpp"

namespace converg {

// One row of the condensed model: a quad key plus the versions containing it.
struct CondensedEntry {
    TermId graph;
    TermId subject;
    TermId predicate;
    TermId object;
    VersionBitmap versions;

    friend bool operator==(const CondensedEntry&, const CondensedEntry&) = default;
};

struct VngEntry {
    std::uint64_t counter;
    TermId vng;
    TermId graph;
    VersionOrdinal version;
    TermId version_term;

    friend bool operator==(const VngEntry&, const VngEntry&) = default;
};

struct TripleIds {
    TermId s;
    TermId p;
    TermId o;

    friend bool operator==(const TripleIds&, const TripleIds&) = default;
};

using TripleTerms = std::array<Term, 3>;

struct IngestReport {
    VersionOrdinal ordinal;
    std::vector<Term> minted_vngs;
    std::size_t quad_count = 0;  // after deduplication
    std::size_t duplicate_count = 0;
    std::size_t new_entry_count = 0;
};

struct StoreStats {
    std::size_t version_count = 0;
    std::size_t graph_count = 0;
    std::size_t vng_count = 0;
    std::size_t entry_count = 0;
    std::size_t flat_quad_count = 0;
    std::size_t metadata_triple_count = 0;

    friend bool operator==(const StoreStats&, const StoreStats&) = default;
};

// Unbound positions are wildcards.
struct QuadPattern {
    std::optional<TermId> graph;
    std::optional<TermId> subject;
    std::optional<TermId> predicate;
    std::optional<TermId> object;
};

namespace detail {

struct IdPairHash {
    std::size_t operator()(const std::pair<TermId, TermId>& p) const noexcept {
        return hash_combine(std::hash<TermId>{}(p.first), p.second);
    }
};

struct QuadKey {
    TermId g, s, p, o;
    friend bool operator==(const QuadKey&, const QuadKey&) = default;
};

struct QuadKeyHash {
    std::size_t operator()(const QuadKey& k) const noexcept {
        std::size_t h = std::hash<TermId>{}(k.g);
        h = hash_combine(h, k.s);
        h = hash_combine(h, k.p);
        return hash_combine(h, k.o);
    }
};

}  // namespace detail

// The condensed versioned quad store. Single writer: ingestion and metadata
// calls need exclusive access; every const member is safe to call from
// concurrent readers.
class Store {
public:
    using EntryIndex = std::uint32_t;

    // Ingests one document as the next version. Atomic: on any exception the
    // store is left exactly as it was.
    IngestReport ingest_version(const ParsedDocument& doc, std::optional<std::string> label = std::nullopt) {
        const VersionOrdinal m(static_cast<std::uint32_t>(version_count_ + 1));
        Checkpoint cp = checkpoint();
        std::vector<EntryIndex> touched;
        IngestReport report;
        report.ordinal = m;
        try {
            std::vector<TermId> graph_order;
            std::unordered_set<TermId> graphs_in_version;
            const std::string blank_prefix = "v" + std::to_string(m.value) + "_";
            for (const Quad& q : doc.quads) {
                if (!q.graph) throw Error("default-graph quad in version document: " + q.to_nquads());
                if (!q.well_formed()) throw Error("malformed quad: " + q.to_nquads());
                TermId g = dict_.encode(*q.graph);
                TermId s = dict_.encode(scope_blank(q.subject, blank_prefix));
                TermId p = dict_.encode(q.predicate);
                TermId o = dict_.encode(scope_blank(q.object, blank_prefix));
                if (graphs_in_version.insert(g).second) graph_order.push_back(g);
                detail::QuadKey key{g, s, p, o};
                if (auto it = keys_.find(key); it != keys_.end()) {
                    CondensedEntry& e = entries_[it->second];
                    if (e.versions.test(m)) {
                        ++report.duplicate_count;
                        continue;
                    }
                    e.versions.set(m);
                    touched.push_back(it->second);
                } else {
                    add_entry(CondensedEntry{g, s, p, o, VersionBitmap::single(m)});
                    ++report.new_entry_count;
                }
                ++report.quad_count;
            }
            for (TermId g : graph_order) report.minted_vngs.push_back(dict_.decode(mint(g, m).vng));
        } catch (...) {
            for (EntryIndex idx : touched) entries_[idx].versions.reset(m);
            rollback(cp);
            throw;
        }
        version_count_ = m.value;
        if (label) labels_[m.value] = *label;
        return report;
    }

    // Adds user metadata triples to the default graph.
    void add_metadata(const ParsedDocument& doc) {
        Checkpoint cp = checkpoint();
        try {
            const std::string blank_prefix = "m" + std::to_string(user_metadata_.size()) + "_";
            for (const Quad& q : doc.quads) {
                if (q.graph) throw Error("metadata must be in the default graph: " + q.to_nquads());
                if (!q.well_formed()) throw Error("malformed triple: " + q.to_nquads());
                TripleIds t{dict_.encode(scope_blank(q.subject, blank_prefix)), dict_.encode(q.predicate),
                            dict_.encode(scope_blank(q.object, blank_prefix))};
                if (std::find(user_metadata_.begin(), user_metadata_.end(), t) == user_metadata_.end())
                    user_metadata_.push_back(t);
            }
        } catch (...) {
            rollback(cp);
            throw;
        }
    }

    // Calls f(entry) for every entry matching the bound positions, in
    // insertion order.
    template <typename F>
    void for_each_match(const QuadPattern& pat, F&& f) const {
        auto matches = [&](const CondensedEntry& e) {
            return (!pat.graph || e.graph == *pat.graph) && (!pat.subject || e.subject == *pat.subject) &&
                   (!pat.predicate || e.predicate == *pat.predicate) && (!pat.object || e.object == *pat.object);
        };
        auto scan = [&](const std::vector<EntryIndex>& list) {
            for (EntryIndex i : list)
                if (matches(entries_[i])) f(entries_[i]);
        };
        if (pat.graph && pat.subject && pat.predicate && pat.object) {
            if (auto it = keys_.find({*pat.graph, *pat.subject, *pat.predicate, *pat.object}); it != keys_.end())
                f(entries_[it->second]);
            return;
        }
        if (pat.subject) {
            if (auto it = by_subject_.find(*pat.subject); it != by_subject_.end()) scan(it->second);
            return;
        }
        if (pat.graph && pat.predicate) {
            if (auto it = by_graph_predicate_.find({*pat.graph, *pat.predicate}); it != by_graph_predicate_.end())
                scan(it->second);
            return;
        }
        if (pat.graph) {
            if (auto it = by_graph_.find(*pat.graph); it != by_graph_.end()) scan(it->second);
            return;
        }
        for (const CondensedEntry& e : entries_)
            if (matches(e)) f(e);
    }

    std::vector<const CondensedEntry*> lookup_pattern(const QuadPattern& pat) const {
        std::vector<const CondensedEntry*> out;
        for_each_match(pat, [&](const CondensedEntry& e) { out.push_back(&e); });
        return out;
    }

    // Inverse of vng minting. Throws LookupError for IRIs that name no vng.
    std::pair<TermId, VersionOrdinal> resolve_vng(const Term& vng_iri) const {
        if (const VngEntry* v = find_vng(vng_iri)) return {v->graph, v->version};
        throw LookupError("not a versioned named graph: " + vng_iri.to_ntriples());
    }

    const VngEntry* find_vng(const Term& vng_iri) const {
        auto id = dict_.find(vng_iri);
        return id ? find_vng_by_id(*id) : nullptr;
    }

    const VngEntry* find_vng_by_id(TermId vng) const {
        auto it = vng_by_term_.find(vng);
        return it == vng_by_term_.end() ? nullptr : &vngs_[it->second];
    }

    const VngEntry* find_vng(TermId graph, VersionOrdinal m) const {
        auto it = vng_by_graph_version_.find({graph, m.value});
        return it == vng_by_graph_version_.end() ? nullptr : &vngs_[it->second];
    }

    // Flat model: one quad per (entry, set version) in the vng of that pair,
    // followed by the metadata graph.
    std::vector<Quad> export_flat() const {
        std::vector<Quad> out;
        for (const CondensedEntry& e : entries_) {
            e.versions.for_each_set([&](VersionOrdinal m) {
                const VngEntry* v = find_vng(e.graph, m);
                if (!v) throw CorruptionError("entry references a version without a vng");
                out.push_back(Quad{dict_.decode(e.subject), dict_.decode(e.predicate), dict_.decode(e.object),
                                   dict_.decode(v->vng)});
            });
        }
        for_each_metadata([&](const TripleIds& t) {
            out.push_back(Quad{dict_.decode(t.s), dict_.decode(t.p), dict_.decode(t.o), std::nullopt});
        });
        return out;
    }

    // Triples of versioned graph `a` that are absent from versioned graph `b`.
    std::vector<TripleTerms> diff_vng(const Term& a, const Term& b) const {
        auto [ga, ma] = resolve_vng(a);
        auto [gb, mb] = resolve_vng(b);
        std::vector<TripleTerms> out;
        auto emit = [&](const CondensedEntry& e) {
            out.push_back({dict_.decode(e.subject), dict_.decode(e.predicate), dict_.decode(e.object)});
        };
        if (ga == gb) {
            for_each_match({ga, {}, {}, {}}, [&](const CondensedEntry& e) {
                if (e.versions.test(ma) && !e.versions.test(mb)) emit(e);
            });
            return out;
        }
        std::unordered_set<detail::QuadKey, detail::QuadKeyHash> in_b;
        for_each_match({gb, {}, {}, {}}, [&](const CondensedEntry& e) {
            if (e.versions.test(mb)) in_b.insert({0, e.subject, e.predicate, e.object});
        });
        for_each_match({ga, {}, {}, {}}, [&](const CondensedEntry& e) {
            if (e.versions.test(ma) && !in_b.contains({0, e.subject, e.predicate, e.object})) emit(e);
        });
        return out;
    }

    StoreStats stats() const {
        StoreStats s;
        s.version_count = version_count_;
        s.graph_count = graphs_.size();
        s.vng_count = vngs_.size();
        s.entry_count = entries_.size();
        for (const CondensedEntry& e : entries_) s.flat_quad_count += e.versions.popcount();
        s.metadata_triple_count = 2 * vngs_.size() + user_metadata_.size();
        return s;
    }

    // Auto-minted triples (two per vng, vng order) then user triples.
    template <typename F>
    void for_each_metadata(F&& f) const {
        if (!vngs_.empty()) {
            TermId version_of = *dict_.find(Term::iri(vocab::is_version_of));
            TermId in_version = *dict_.find(Term::iri(vocab::is_in_version));
            for (const VngEntry& v : vngs_) {
                f(TripleIds{v.vng, version_of, v.graph});
                f(TripleIds{v.vng, in_version, v.version_term});
            }
        }
        for (const TripleIds& t : user_metadata_) f(t);
    }

    // True when user metadata reuses the versioning vocabulary, in which case
    // vng bindings cannot be derived from the vng table alone.
    bool user_metadata_uses_version_vocab() const {
        auto a = dict_.find(Term::iri(vocab::is_version_of));
        auto b = dict_.find(Term::iri(vocab::is_in_version));
        for (const TripleIds& t : user_metadata_)
            if ((a && t.p == *a) || (b && t.p == *b)) return true;
        return false;
    }

    const Dictionary& dictionary() const noexcept { return dict_; }
    const std::vector<CondensedEntry>& entries() const noexcept { return entries_; }
    const std::vector<VngEntry>& vngs() const noexcept { return vngs_; }
    const std::vector<TripleIds>& user_metadata() const noexcept { return user_metadata_; }
    const std::vector<TermId>& graphs() const noexcept { return graphs_; }
    std::uint32_t version_count() const noexcept { return version_count_; }
    std::uint64_t vng_counter() const noexcept { return vngs_.empty() ? 0 : vngs_.back().counter; }
    const std::map<std::uint32_t, std::string>& labels() const noexcept { return labels_; }

    bool check_invariants() const {
        if (!dict_.check_bijection()) return false;
        for (const CondensedEntry& e : entries_)
            if (e.versions.none() || e.versions.highest() > version_count_) return false;
        return true;
    }

    friend bool operator==(const Store& a, const Store& b) {
        return a.dict_ == b.dict_ && a.entries_ == b.entries_ && a.vngs_ == b.vngs_ &&
               a.user_metadata_ == b.user_metadata_ && a.version_count_ == b.version_count_ && a.labels_ == b.labels_;
    }

    // Rebuilds a store from persisted parts. Used by snapshot loading; ids are
    // taken as given and validated.
    static Store restore(Dictionary dict, std::uint32_t version_count, std::map<std::uint32_t, std::string> labels,
                         const std::vector<std::pair<std::uint64_t, std::pair<TermId, VersionOrdinal>>>& vng_rows,
                         std::vector<CondensedEntry> entries, std::vector<TripleIds> user_metadata) {
        Store st;
        st.dict_ = std::move(dict);
        st.version_count_ = version_count;
        st.labels_ = std::move(labels);
        auto check_id = [&](TermId id) {
            if (id >= st.dict_.size()) throw CorruptionError("term id " + std::to_string(id) + " not in dictionary");
        };
        std::uint64_t expected_counter = 1;
        for (const auto& [counter, gv] : vng_rows) {
            if (counter != expected_counter++) throw CorruptionError("vng counters are not dense");
            check_id(gv.first);
            if (gv.second.value == 0 || gv.second.value > version_count)
                throw CorruptionError("vng version out of range");
            auto find = [&](const Term& t) {
                auto id = st.dict_.find(t);
                if (!id) throw CorruptionError("dictionary lacks " + t.to_ntriples());
                return *id;
            };
            TermId vng = find(mint_vng_iri(st.dict_.decode(gv.first), gv.second, counter));
            TermId version_term = find(version_iri(gv.second));
            find(Term::iri(vocab::is_version_of));
            find(Term::iri(vocab::is_in_version));
            st.add_vng(VngEntry{counter, vng, gv.first, gv.second, version_term});
        }
        for (CondensedEntry& e : entries) {
            check_id(e.graph);
            check_id(e.subject);
            check_id(e.predicate);
            check_id(e.object);
            if (e.versions.none() || e.versions.highest() > version_count)
                throw CorruptionError("entry bitmap out of range");
            if (st.keys_.contains({e.graph, e.subject, e.predicate, e.object}))
                throw CorruptionError("duplicate entry");
            bool ok = true;
            e.versions.for_each_set([&](VersionOrdinal m) { ok = ok && st.find_vng(e.graph, m) != nullptr; });
            if (!ok) throw CorruptionError("entry references a version without a vng");
            st.add_entry(std::move(e));
        }
        for (const TripleIds& t : user_metadata) {
            check_id(t.s);
            check_id(t.p);
            check_id(t.o);
        }
        st.user_metadata_ = std::move(user_metadata);
        return st;
    }

private:
    struct Checkpoint {
        std::size_t dict_size, entries, graphs, vngs, user_metadata;
    };

    Checkpoint checkpoint() const {
        return {dict_.size(), entries_.size(), graphs_.size(), vngs_.size(), user_metadata_.size()};
    }

    void rollback(const Checkpoint& cp) {
        while (entries_.size() > cp.entries) {
            const CondensedEntry& e = entries_.back();
            auto idx = static_cast<EntryIndex>(entries_.size() - 1);
            keys_.erase({e.graph, e.subject, e.predicate, e.object});
            pop_index(by_subject_, e.subject, idx);
            pop_index(by_graph_predicate_, std::pair{e.graph, e.predicate}, idx);
            pop_index(by_graph_, e.graph, idx);
            entries_.pop_back();
        }
        while (vngs_.size() > cp.vngs) {
            const VngEntry& v = vngs_.back();
            vng_by_term_.erase(v.vng);
            vng_by_graph_version_.erase({v.graph, v.version.value});
            vngs_.pop_back();
        }
        while (graphs_.size() > cp.graphs) {
            known_graphs_.erase(graphs_.back());
            graphs_.pop_back();
        }
        user_metadata_.resize(cp.user_metadata);
        dict_.truncate(cp.dict_size);
    }

    template <typename Map, typename Key>
    static void pop_index(Map& map, const Key& key, EntryIndex idx) {
        auto it = map.find(key);
        if (it == map.end()) return;
        if (!it->second.empty() && it->second.back() == idx) it->second.pop_back();
        if (it->second.empty()) map.erase(it);
    }

    static Term scope_blank(const Term& t, const std::string& prefix) {
        return t.is_blank() ? Term::blank(prefix + t.lexical()) : t;
    }

    void add_entry(CondensedEntry e) {
        auto idx = static_cast<EntryIndex>(entries_.size());
        keys_.emplace(detail::QuadKey{e.graph, e.subject, e.predicate, e.object}, idx);
        by_subject_[e.subject].push_back(idx);
        by_graph_predicate_[{e.graph, e.predicate}].push_back(idx);
        by_graph_[e.graph].push_back(idx);
        if (known_graphs_.insert(e.graph).second) graphs_.push_back(e.graph);
        entries_.push_back(std::move(e));
    }

    const VngEntry& mint(TermId graph, VersionOrdinal m) {
        std::uint64_t counter = vng_counter() + 1;
        TermId vng = dict_.encode(mint_vng_iri(dict_.decode(graph), m, counter));
        TermId version_term = dict_.encode(version_iri(m));
        dict_.encode(Term::iri(vocab::is_version_of));
        dict_.encode(Term::iri(vocab::is_in_version));
        add_vng(VngEntry{counter, vng, graph, m, version_term});
        return vngs_.back();
    }

    void add_vng(VngEntry v) {
        if (vng_by_term_.contains(v.vng)) throw CorruptionError("vng IRI minted twice");
        vng_by_term_.emplace(v.vng, vngs_.size());
        vng_by_graph_version_.emplace(std::pair{v.graph, TermId{v.version.value}}, vngs_.size());
        vngs_.push_back(v);
    }

    Dictionary dict_;
    std::vector<CondensedEntry> entries_;
    std::unordered_map<detail::QuadKey, EntryIndex, detail::QuadKeyHash> keys_;
    std::unordered_map<TermId, std::vector<EntryIndex>> by_subject_;
    std::unordered_map<std::pair<TermId, TermId>, std::vector<EntryIndex>, detail::IdPairHash> by_graph_predicate_;
    std::unordered_map<TermId, std::vector<EntryIndex>> by_graph_;
    std::vector<TermId> graphs_;  // first-appearance order
    std::unordered_set<TermId> known_graphs_;
    std::vector<VngEntry> vngs_;
    std::unordered_map<TermId, std::size_t> vng_by_term_;
    std::unordered_map<std::pair<TermId, TermId>, std::size_t, detail::IdPairHash> vng_by_graph_version_;
    std::vector<TripleIds> user_metadata_;
    std::uint32_t version_count_ = 0;
    std::map<std::uint32_t, std::string> labels_;
};

}  // namespace converg
