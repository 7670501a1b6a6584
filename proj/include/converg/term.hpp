#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "numeric.hpp"

namespace converg {

namespace xsd {
inline constexpr std::string_view ns = "http://www.w3.org/2001/XMLSchema#";
inline const std::string string_ = std::string(ns) + "string";
inline const std::string integer = std::string(ns) + "integer";
inline const std::string decimal = std::string(ns) + "decimal";
inline const std::string double_ = std::string(ns) + "double";
inline const std::string boolean = std::string(ns) + "boolean";
}  // namespace xsd

namespace rdf {
inline const std::string type = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
inline const std::string lang_string = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";
}  // namespace rdf

class Term {
public:
    enum class Kind : std::uint8_t { BlankNode = 0, Iri = 1, Literal = 2 };

    Term() = default;

    static Term iri(std::string value) {
        if (!valid_iri(value)) throw std::invalid_argument("invalid IRI: '" + value + "'");
        return Term(Kind::Iri, std::move(value), {}, {});
    }

    // A datatype of xsd:string is the same term as a plain literal and is
    // stored as absent.
    static Term literal(std::string lexical, std::string datatype = {}) {
        if (datatype == xsd::string_) datatype.clear();
        if (!datatype.empty() && !valid_iri(datatype))
            throw std::invalid_argument("invalid datatype IRI: '" + datatype + "'");
        if (datatype == rdf::lang_string)
            throw std::invalid_argument("rdf:langString literal requires a language tag");
        return Term(Kind::Literal, std::move(lexical), std::move(datatype), {});
    }

    static Term lang_literal(std::string lexical, std::string language) {
        if (!valid_language(language)) throw std::invalid_argument("invalid language tag: '" + language + "'");
        return Term(Kind::Literal, std::move(lexical), {}, std::move(language));
    }

    static Term blank(std::string label) {
        if (!valid_blank_label(label)) throw std::invalid_argument("invalid blank node label: '" + label + "'");
        return Term(Kind::BlankNode, std::move(label), {}, {});
    }

    Kind kind() const noexcept { return kind_; }
    bool is_iri() const noexcept { return kind_ == Kind::Iri; }
    bool is_literal() const noexcept { return kind_ == Kind::Literal; }
    bool is_blank() const noexcept { return kind_ == Kind::BlankNode; }

    const std::string& lexical() const noexcept { return lexical_; }
    // Empty when absent.
    const std::string& datatype() const noexcept { return datatype_; }
    const std::string& language() const noexcept { return language_; }

    // Datatype as RDF 1.1 defines it for literals (xsd:string / rdf:langString
    // when none is stored). Empty for non-literals.
    std::string effective_datatype() const {
        if (!is_literal()) return {};
        if (!language_.empty()) return rdf::lang_string;
        return datatype_.empty() ? xsd::string_ : datatype_;
    }

    friend bool operator==(const Term&, const Term&) = default;

    // N-Triples surface form.
    std::string to_ntriples() const {
        std::string out;
        switch (kind_) {
            case Kind::Iri:
                append_iri(out, lexical_);
                break;
            case Kind::BlankNode:
                out += "_:";
                out += lexical_;
                break;
            case Kind::Literal:
                out += '"';
                for (char c : lexical_) {
                    switch (c) {
                        case '"': out += "\\\""; break;
                        case '\\': out += "\\\\"; break;
                        case '\n': out += "\\n"; break;
                        case '\r': out += "\\r"; break;
                        default: out += c;
                    }
                }
                out += '"';
                if (!language_.empty()) {
                    out += '@';
                    out += language_;
                } else if (!datatype_.empty()) {
                    out += "^^";
                    append_iri(out, datatype_);
                }
                break;
        }
        return out;
    }

    // Numeric value when the literal has an XSD numeric datatype, or is a
    // plain literal whose lexical form reads as a number.
    std::optional<Decimal> numeric_value() const {
        if (!is_literal() || !language_.empty()) return std::nullopt;
        if (!datatype_.empty() && !is_numeric_datatype(datatype_)) return std::nullopt;
        return Decimal::parse(lexical_);
    }

    static bool is_numeric_datatype(std::string_view dt) {
        static constexpr std::array<std::string_view, 16> local_names = {
            "integer", "decimal", "double", "float", "int", "long", "short", "byte",
            "nonNegativeInteger", "positiveInteger", "negativeInteger", "nonPositiveInteger",
            "unsignedInt", "unsignedLong", "unsignedShort", "unsignedByte"};
        if (!dt.starts_with(xsd::ns)) return false;
        dt.remove_prefix(xsd::ns.size());
        return std::find(local_names.begin(), local_names.end(), dt) != local_names.end();
    }

    static bool valid_iri(std::string_view v) {
        if (v.empty()) return false;
        for (unsigned char c : v) {
            if (c <= 0x20 || c == '<' || c == '>') return false;
        }
        return true;
    }

    static bool valid_language(std::string_view tag) {
        if (tag.empty()) return false;
        std::size_t i = 0;
        auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
        auto alnum = [&](char c) { return alpha(c) || (c >= '0' && c <= '9'); };
        while (i < tag.size() && alpha(tag[i])) ++i;
        if (i == 0) return false;
        while (i < tag.size()) {
            if (tag[i] != '-') return false;
            std::size_t start = ++i;
            while (i < tag.size() && alnum(tag[i])) ++i;
            if (i == start) return false;
        }
        return true;
    }

    static bool valid_blank_label(std::string_view label) {
        if (label.empty() || label.back() == '.' || label.front() == '.' || label.front() == '-') return false;
        for (unsigned char c : label) {
            bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                      c == '-' || c == '.' || c >= 0x80;
            if (!ok) return false;
        }
        return true;
    }

private:
    Term(Kind kind, std::string lexical, std::string datatype, std::string language)
        : kind_(kind), lexical_(std::move(lexical)), datatype_(std::move(datatype)), language_(std::move(language)) {}

    static void append_iri(std::string& out, std::string_view iri) {
        static constexpr char hex[] = "0123456789ABCDEF";
        out += '<';
        for (unsigned char c : iri) {
            if (c == '"' || c == '{' || c == '}' || c == '|' || c == '^' || c == '`' || c == '\\') {
                out += "\\u00";
                out += hex[c >> 4];
                out += hex[c & 0xF];
            } else {
                out += static_cast<char>(c);
            }
        }
        out += '>';
    }

    Kind kind_ = Kind::Iri;
    std::string lexical_;
    std::string datatype_;
    std::string language_;
};

// Total order used by MAX/MIN: blank nodes < IRIs < literals. Literals that
// read as numbers precede all others and are ordered by value; ties and
// non-numeric literals fall back to (lexical, datatype, language) codepoint
// order.
inline std::strong_ordering compare_terms_sparql_order(const Term& a, const Term& b) {
    if (a.kind() != b.kind()) return a.kind() <=> b.kind();
    auto lexical_order = [&]() {
        if (auto c = a.lexical().compare(b.lexical()); c != 0) return c <=> 0;
        if (auto c = a.datatype().compare(b.datatype()); c != 0) return c <=> 0;
        return a.language().compare(b.language()) <=> 0;
    };
    if (!a.is_literal()) return lexical_order();
    auto na = a.numeric_value();
    auto nb = b.numeric_value();
    if (na && nb) {
        if (auto c = *na <=> *nb; c != 0) return c;
        return lexical_order();
    }
    if (na) return std::strong_ordering::less;
    if (nb) return std::strong_ordering::greater;
    return lexical_order();
}

struct Quad {
    Term subject;
    Term predicate;
    Term object;
    std::optional<Term> graph;  // nullopt = default graph

    friend bool operator==(const Quad&, const Quad&) = default;

    bool well_formed() const noexcept {
        return (subject.is_iri() || subject.is_blank()) && predicate.is_iri() && (!graph || graph->is_iri());
    }

    std::string to_nquads() const {
        std::string line = subject.to_ntriples() + ' ' + predicate.to_ntriples() + ' ' + object.to_ntriples();
        if (graph) line += ' ' + graph->to_ntriples();
        line += " .";
        return line;
    }
};

inline std::size_t hash_combine(std::size_t seed, std::size_t v) noexcept {
    return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

}  // namespace converg

template <>
struct std::hash<converg::Term> {
    std::size_t operator()(const converg::Term& t) const noexcept {
        std::hash<std::string> h;
        std::size_t seed = static_cast<std::size_t>(t.kind());
        seed = converg::hash_combine(seed, h(t.lexical()));
        seed = converg::hash_combine(seed, h(t.datatype()));
        return converg::hash_combine(seed, h(t.language()));
    }
};

template <>
struct std::hash<converg::Quad> {
    std::size_t operator()(const converg::Quad& q) const noexcept {
        std::hash<converg::Term> h;
        std::size_t seed = h(q.subject);
        seed = converg::hash_combine(seed, h(q.predicate));
        seed = converg::hash_combine(seed, h(q.object));
        return converg::hash_combine(seed, q.graph ? h(*q.graph) : 0);
    }
};
