#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "nquads.hpp"
#include "term.hpp"

namespace converg::sparql {

// Heap-allocated value with deep copy and deep equality, for recursive ASTs.
template <typename T>
class Box {
public:
    Box() : ptr_(std::make_unique<T>()) {}
    Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}
    Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
    Box(Box&&) noexcept = default;
    Box& operator=(const Box& other) {
        if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
        return *this;
    }
    Box& operator=(Box&&) noexcept = default;

    T& operator*() { return *ptr_; }
    const T& operator*() const { return *ptr_; }
    T* operator->() { return ptr_.get(); }
    const T* operator->() const { return ptr_.get(); }

    friend bool operator==(const Box& a, const Box& b) { return *a.ptr_ == *b.ptr_; }

private:
    std::unique_ptr<T> ptr_;
};

struct Variable {
    std::string name;  // without '?'
    friend bool operator==(const Variable&, const Variable&) = default;
    friend auto operator<=>(const Variable&, const Variable&) = default;
};

using TermOrVar = std::variant<Term, Variable>;

// p1/p2/... sequence of named predicates.
struct PredicatePath {
    std::vector<Term> steps;
    friend bool operator==(const PredicatePath&, const PredicatePath&) = default;
};

using PredicateItem = std::variant<Term, Variable, PredicatePath>;

struct TriplePattern {
    TermOrVar subject;
    PredicateItem predicate;
    TermOrVar object;
    friend bool operator==(const TriplePattern&, const TriplePattern&) = default;
};

struct Query;
struct Pattern;

struct BgpPattern {
    std::vector<TriplePattern> triples;
    friend bool operator==(const BgpPattern&, const BgpPattern&) = default;
};

struct GraphPattern {
    TermOrVar target;
    Box<Pattern> inner;
    friend bool operator==(const GraphPattern&, const GraphPattern&) = default;
};

struct JoinPattern {
    std::vector<Pattern> children;
    friend bool operator==(const JoinPattern&, const JoinPattern&);
};

struct MinusPattern {
    Box<Pattern> left;
    Box<Pattern> right;
    friend bool operator==(const MinusPattern&, const MinusPattern&) = default;
};

struct SubSelectPattern {
    Box<Query> query;
    friend bool operator==(const SubSelectPattern&, const SubSelectPattern&) = default;
};

struct Pattern {
    std::variant<BgpPattern, GraphPattern, JoinPattern, MinusPattern, SubSelectPattern> node;
    friend bool operator==(const Pattern&, const Pattern&) = default;
};

inline bool operator==(const JoinPattern& a, const JoinPattern& b) { return a.children == b.children; }

enum class AggregateFunction { count, count_distinct, max, min, sum };

struct Aggregate {
    AggregateFunction function;
    Variable argument;
    friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct ProjectionItem {
    std::variant<Variable, Aggregate> expr;
    std::optional<Variable> alias;  // aggregates only; absent = auto "aggN"
    friend bool operator==(const ProjectionItem&, const ProjectionItem&) = default;
};

struct Query {
    std::vector<std::pair<std::string, std::string>> prefixes;  // declaration order
    std::vector<ProjectionItem> projection;
    Pattern where;
    std::optional<std::vector<Variable>> group_by;
    friend bool operator==(const Query&, const Query&) = default;

    bool has_aggregates() const {
        return std::any_of(projection.begin(), projection.end(),
                           [](const ProjectionItem& p) { return std::holds_alternative<Aggregate>(p.expr); });
    }

    // Output column / variable name of projection item i.
    std::string output_name(std::size_t i) const {
        const ProjectionItem& item = projection[i];
        if (auto v = std::get_if<Variable>(&item.expr)) return v->name;
        if (item.alias) return item.alias->name;
        std::size_t n = 0;
        for (std::size_t k = 0; k <= i; ++k)
            if (std::holds_alternative<Aggregate>(projection[k].expr)) ++n;
        return "agg" + std::to_string(n);
    }
};

// Normalized query: prefixes expanded, paths desugared into chains, and
// every variable numbered (index into `variables`, first-occurrence order).
struct Plan {
    Query query;
    std::vector<std::string> variables;
    friend bool operator==(const Plan&, const Plan&) = default;

    std::size_t index_of(const std::string& name) const {
        auto it = std::find(variables.begin(), variables.end(), name);
        if (it == variables.end()) throw QueryError("unknown variable ?" + name);
        return static_cast<std::size_t>(it - variables.begin());
    }
};

inline constexpr std::string_view supported_subset =
    "supported: PREFIX, SELECT, WHERE, GRAPH, MINUS, GROUP BY, nested groups, sub-SELECT, "
    "COUNT, COUNT(DISTINCT), MAX, MIN, SUM";

namespace detail {

enum class Tok { iri, pname, var, string, number, word, punct, end };

struct Token {
    Tok kind;
    std::string text;  // iri: resolved value; string: unescaped; others: raw
    std::size_t line;
    std::size_t column;
};

inline bool is_name_char(unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c >= 0x80;
}

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    std::vector<Token> tokenize() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            if (pos_ >= text_.size()) {
                out.push_back({Tok::end, "", line_, col()});
                return out;
            }
            out.push_back(next());
        }
    }

private:
    std::size_t col() const { return pos_ - line_start_ + 1; }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col()); }

    void skip_space() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '\n') {
                ++pos_;
                ++line_;
                line_start_ = pos_;
            } else if (c == ' ' || c == '\t' || c == '\r') {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    Token next() {
        std::size_t line = line_, column = col();
        char c = text_[pos_];
        auto tok = [&](Tok k, std::string t) { return Token{k, std::move(t), line, column}; };
        if (c == '<') return tok(Tok::iri, read_iri());
        if (c == '?' || c == '$') {
            ++pos_;
            std::size_t start = pos_;
            while (pos_ < text_.size() && (is_name_char(text_[pos_]) && text_[pos_] != '-')) ++pos_;
            if (pos_ == start) fail("expected variable name");
            return tok(Tok::var, std::string(text_.substr(start, pos_ - start)));
        }
        if (c == '"' || c == '\'') return tok(Tok::string, read_string(c));
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            ((c == '+' || c == '-' || c == '.') && pos_ + 1 < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
            return tok(Tok::number, read_number());
        }
        if (c == '_' && pos_ + 1 < text_.size() && text_[pos_ + 1] == ':') fail("blank nodes are not supported in queries");
        if (std::string_view("{}().;,*/^@[]").find(c) != std::string_view::npos) {
            ++pos_;
            if (c == '^' && pos_ < text_.size() && text_[pos_] == '^') {
                ++pos_;
                return tok(Tok::punct, "^^");
            }
            return tok(Tok::punct, std::string(1, c));
        }
        if (is_name_char(static_cast<unsigned char>(c)) || c == ':') {
            std::size_t start = pos_;
            while (pos_ < text_.size() && (is_name_char(text_[pos_]) || text_[pos_] == '.')) ++pos_;
            if (pos_ < text_.size() && text_[pos_] == ':') {
                ++pos_;
                while (pos_ < text_.size() && (is_name_char(text_[pos_]) || text_[pos_] == '.' ||
                                               text_[pos_] == ':' || text_[pos_] == '/' || text_[pos_] == '%'))
                    ++pos_;
                while (pos_ > start && (text_[pos_ - 1] == '.' || text_[pos_ - 1] == '/')) --pos_;
                return tok(Tok::pname, std::string(text_.substr(start, pos_ - start)));
            }
            while (pos_ > start && text_[pos_ - 1] == '.') --pos_;
            return tok(Tok::word, std::string(text_.substr(start, pos_ - start)));
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::uint32_t read_hex(std::size_t n) {
        if (pos_ + n > text_.size()) fail("truncated unicode escape");
        std::uint32_t cp = 0;
        for (std::size_t i = 0; i < n; ++i) {
            char h = text_[pos_ + i];
            if (!std::isxdigit(static_cast<unsigned char>(h))) fail("invalid hex digit");
            cp = cp * 16 + static_cast<std::uint32_t>(std::isdigit(static_cast<unsigned char>(h))
                                                          ? h - '0'
                                                          : std::tolower(h) - 'a' + 10);
        }
        pos_ += n;
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail("unicode escape out of range");
        return cp;
    }

    std::string read_iri() {
        ++pos_;
        std::string value;
        while (true) {
            if (pos_ >= text_.size() || text_[pos_] == '\n') fail("unterminated IRI");
            char c = text_[pos_];
            if (c == '>') break;
            if (c == '\\' && pos_ + 1 < text_.size() && (text_[pos_ + 1] == 'u' || text_[pos_ + 1] == 'U')) {
                std::size_t n = text_[pos_ + 1] == 'u' ? 4 : 8;
                pos_ += 2;
                ::converg::detail::append_utf8(value, read_hex(n));
                continue;
            }
            if (static_cast<unsigned char>(c) <= 0x20) fail("whitespace in IRI");
            value += c;
            ++pos_;
        }
        ++pos_;
        if (!Term::valid_iri(value)) fail("invalid IRI");
        return value;
    }

    std::string read_string(char quote) {
        ++pos_;
        std::string value;
        while (true) {
            if (pos_ >= text_.size() || text_[pos_] == '\n') fail("unterminated string");
            char c = text_[pos_];
            if (c == quote) break;
            if (c == '\\') {
                if (pos_ + 1 >= text_.size()) fail("dangling escape");
                char e = text_[pos_ + 1];
                pos_ += 2;
                switch (e) {
                    case 't': value += '\t'; break;
                    case 'n': value += '\n'; break;
                    case 'r': value += '\r'; break;
                    case 'b': value += '\b'; break;
                    case 'f': value += '\f'; break;
                    case '"': value += '"'; break;
                    case '\'': value += '\''; break;
                    case '\\': value += '\\'; break;
                    case 'u': ::converg::detail::append_utf8(value, read_hex(4)); break;
                    case 'U': ::converg::detail::append_utf8(value, read_hex(8)); break;
                    default: pos_ -= 2; fail(std::string("invalid escape '\\") + e + "'");
                }
                continue;
            }
            value += c;
            ++pos_;
        }
        ++pos_;
        return value;
    }

    std::string read_number() {
        std::size_t start = pos_;
        if (text_[pos_] == '+' || text_[pos_] == '-') ++pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ + 1 < text_.size() && text_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t line_start_ = 0;
};

inline std::string upper(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

inline const std::set<std::string>& unsupported_keywords() {
    static const std::set<std::string> words = {
        "FILTER", "OPTIONAL", "UNION", "ORDER",  "LIMIT",   "OFFSET",  "BIND",     "VALUES", "SERVICE",
        "CONSTRUCT", "ASK",   "DESCRIBE", "FROM", "NAMED", "HAVING", "BASE",     "EXISTS", "NOT",
        "INSERT", "DELETE", "LOAD", "CLEAR", "DROP", "CREATE", "WITH", "REDUCED", "AVG", "SAMPLE", "GROUP_CONCAT"};
    return words;
}

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(Lexer(text).tokenize()) {}

    Query parse_top() {
        Query q;
        while (is_word("PREFIX")) {
            advance();
            const Token& ns = expect(Tok::pname, "prefix name ending in ':'");
            if (ns.text.back() != ':' || std::count(ns.text.begin(), ns.text.end(), ':') != 1)
                error_at(ns, "malformed prefix declaration '" + ns.text + "'");
            std::string name = ns.text.substr(0, ns.text.size() - 1);
            std::string iri = expect(Tok::iri, "IRI").text;
            prefixes_[name] = iri;
            auto it = std::find_if(q.prefixes.begin(), q.prefixes.end(), [&](auto& p) { return p.first == name; });
            if (it != q.prefixes.end()) it->second = iri;
            else q.prefixes.emplace_back(name, iri);
        }
        if (peek().kind == Tok::word && !is_word("SELECT")) check_unsupported(peek());
        parse_select_into(q);
        if (peek().kind != Tok::end) {
            check_unsupported(peek());
            fail_expected({"end of query"});
        }
        check_scoping(q);
        return q;
    }

private:
    const Token& peek(std::size_t ahead = 0) const { return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)]; }
    const Token& advance() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    bool is_word(std::string_view w, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::word && upper(peek(ahead).text) == w;
    }
    bool is_punct(std::string_view p, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::punct && peek(ahead).text == p;
    }

    [[noreturn]] void error_at(const Token& t, const std::string& msg) const { throw ParseError(msg, t.line, t.column); }

    [[noreturn]] void fail_expected(std::initializer_list<std::string_view> expected) const {
        std::string msg = "expected one of {";
        bool first = true;
        for (auto e : expected) {
            if (!first) msg += ", ";
            msg += e;
            first = false;
        }
        const Token& t = peek();
        msg += "} but found " + (t.kind == Tok::end ? std::string("end of input") : "'" + t.text + "'");
        error_at(t, msg);
    }

    void check_unsupported(const Token& t) const {
        if (t.kind == Tok::word && unsupported_keywords().contains(upper(t.text)))
            error_at(t, "unsupported operator '" + upper(t.text) + "'; " + std::string(supported_subset));
    }

    const Token& expect(Tok kind, std::string_view what) {
        if (peek().kind != kind) {
            check_unsupported(peek());
            fail_expected({what});
        }
        return advance();
    }

    void expect_punct(std::string_view p) {
        if (!is_punct(p)) {
            check_unsupported(peek());
            fail_expected({std::string("'") + std::string(p) + "'"});
        }
        advance();
    }

    void expect_word(std::string_view w) {
        if (!is_word(w)) {
            check_unsupported(peek());
            fail_expected({w});
        }
        advance();
    }

    Term expand_pname(const Token& t, std::string_view text) const {
        auto colon = text.find(':');
        std::string prefix(text.substr(0, colon));
        auto it = prefixes_.find(prefix);
        if (it == prefixes_.end()) error_at(t, "unknown prefix '" + prefix + ":'");
        std::string iri = it->second + std::string(text.substr(colon + 1));
        if (!Term::valid_iri(iri)) error_at(t, "invalid IRI after prefix expansion");
        return Term::iri(std::move(iri));
    }

    // A prefixed name whose local part contains '/' is one IRI, unless every
    // '/'-separated segment after the first is itself a declared prefixed
    // name, in which case it is a path.
    std::vector<Term> expand_pname_or_path(const Token& t) const {
        std::vector<std::string_view> segments;
        std::string_view text = t.text;
        std::size_t start = 0;
        while (true) {
            auto slash = text.find('/', start);
            segments.push_back(text.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start));
            if (slash == std::string_view::npos) break;
            start = slash + 1;
        }
        bool is_path = segments.size() > 1;
        for (std::size_t i = 1; i < segments.size() && is_path; ++i) {
            auto colon = segments[i].find(':');
            is_path = colon != std::string_view::npos && prefixes_.contains(std::string(segments[i].substr(0, colon)));
        }
        if (!is_path) return {expand_pname(t, text)};
        std::vector<Term> steps;
        for (auto seg : segments) steps.push_back(expand_pname(t, seg));
        return steps;
    }

    std::vector<Variable> projected_names(const Query& q) const {
        std::vector<Variable> names;
        for (std::size_t i = 0; i < q.projection.size(); ++i) names.push_back({q.output_name(i)});
        return names;
    }

    void parse_select_into(Query& q) {
        expect_word("SELECT");
        if (is_word("DISTINCT") || is_word("REDUCED"))
            error_at(peek(), "unsupported operator 'SELECT " + upper(peek().text) + "'; " + std::string(supported_subset));
        if (is_punct("*")) error_at(peek(), "unsupported operator 'SELECT *'; " + std::string(supported_subset));
        while (true) {
            if (peek().kind == Tok::var) {
                q.projection.push_back({Variable{advance().text}, std::nullopt});
            } else if (is_punct("(")) {
                advance();
                Aggregate agg = parse_aggregate();
                expect_word("AS");
                Variable alias{expect(Tok::var, "variable").text};
                expect_punct(")");
                q.projection.push_back({agg, alias});
            } else if (peek().kind == Tok::word && is_aggregate_name(peek().text)) {
                q.projection.push_back({parse_aggregate(), std::nullopt});
            } else {
                break;
            }
        }
        if (q.projection.empty()) {
            check_unsupported(peek());
            fail_expected({"variable", "aggregate"});
        }
        if (is_word("WHERE")) advance();
        q.where = parse_group();
        if (is_word("GROUP")) {
            advance();
            expect_word("BY");
            std::vector<Variable> vars;
            while (peek().kind == Tok::var) vars.push_back({advance().text});
            if (vars.empty()) fail_expected({"variable"});
            q.group_by = std::move(vars);
        }
    }

    static bool is_aggregate_name(std::string_view w) {
        std::string u = upper(w);
        return u == "COUNT" || u == "MAX" || u == "MIN" || u == "SUM";
    }

    Aggregate parse_aggregate() {
        const Token& name = advance();
        std::string fn = upper(name.text);
        if (!is_aggregate_name(fn)) {
            check_unsupported(name);
            error_at(name, "expected aggregate (COUNT, MAX, MIN, SUM)");
        }
        expect_punct("(");
        bool distinct = false;
        if (is_word("DISTINCT")) {
            if (fn != "COUNT") error_at(peek(), "DISTINCT is only supported inside COUNT");
            advance();
            distinct = true;
        }
        if (is_punct("*")) error_at(peek(), "unsupported operator 'COUNT(*)'; " + std::string(supported_subset));
        Variable arg{expect(Tok::var, "variable").text};
        expect_punct(")");
        AggregateFunction f = fn == "COUNT" ? (distinct ? AggregateFunction::count_distinct : AggregateFunction::count)
                              : fn == "MAX" ? AggregateFunction::max
                              : fn == "MIN" ? AggregateFunction::min
                                            : AggregateFunction::sum;
        return {f, std::move(arg)};
    }

    static Pattern collapse(std::vector<Pattern> elements) {
        if (elements.empty()) return Pattern{BgpPattern{}};
        if (elements.size() == 1) return std::move(elements.front());
        return Pattern{JoinPattern{std::move(elements)}};
    }

    Pattern parse_group() {
        expect_punct("{");
        if (is_word("SELECT")) {
            Query sub;
            parse_select_into(sub);
            expect_punct("}");
            return Pattern{SubSelectPattern{Box<Query>(std::move(sub))}};
        }
        std::vector<Pattern> elements;
        BgpPattern* open_bgp = nullptr;
        while (!is_punct("}")) {
            const Token& t = peek();
            if (t.kind == Tok::end) fail_expected({"'}'"});
            check_unsupported(t);
            if (is_word("GRAPH")) {
                advance();
                TermOrVar target = parse_graph_target();
                Pattern inner = parse_group();
                elements.push_back(Pattern{GraphPattern{std::move(target), Box<Pattern>(std::move(inner))}});
                open_bgp = nullptr;
            } else if (is_word("MINUS")) {
                advance();
                Pattern right = parse_group();
                Pattern left = collapse(std::move(elements));
                elements.clear();
                elements.push_back(Pattern{MinusPattern{Box<Pattern>(std::move(left)), Box<Pattern>(std::move(right))}});
                open_bgp = nullptr;
            } else if (is_punct("{")) {
                elements.push_back(parse_group());
                open_bgp = nullptr;
            } else if (is_word("SELECT")) {
                error_at(t, "sub-SELECT must be enclosed in its own '{ }' group");
            } else {
                if (!open_bgp) {
                    elements.push_back(Pattern{BgpPattern{}});
                    open_bgp = &std::get<BgpPattern>(elements.back().node);
                }
                parse_triples_same_subject(open_bgp->triples);
                if (!is_punct(".")) {
                    if (!is_punct("}") && !is_word("GRAPH") && !is_word("MINUS") && !is_punct("{")) {
                        check_unsupported(peek());
                        fail_expected({"'.'", "'}'"});
                    }
                    open_bgp = nullptr;
                }
            }
            if (is_punct(".")) advance();
        }
        advance();
        return collapse(std::move(elements));
    }

    TermOrVar parse_graph_target() {
        const Token& t = peek();
        if (t.kind == Tok::var) return Variable{advance().text};
        if (t.kind == Tok::iri) return Term::iri(advance().text);
        if (t.kind == Tok::pname) {
            advance();
            return expand_pname(t, t.text);
        }
        fail_expected({"variable", "IRI"});
    }

    TermOrVar parse_var_or_term(bool allow_literal) {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::var: return Variable{advance().text};
            case Tok::iri: return Term::iri(advance().text);
            case Tok::pname: {
                advance();
                return expand_pname(t, t.text);
            }
            case Tok::string:
                if (allow_literal) return parse_literal();
                break;
            case Tok::number:
                if (allow_literal) {
                    std::string lex = advance().text;
                    bool has_exp = lex.find_first_of("eE") != std::string::npos;
                    bool has_dot = lex.find('.') != std::string::npos;
                    return Term::literal(lex, has_exp ? xsd::double_ : has_dot ? xsd::decimal : xsd::integer);
                }
                break;
            case Tok::word:
                if (allow_literal && (t.text == "true" || t.text == "false"))
                    return Term::literal(advance().text, xsd::boolean);
                check_unsupported(t);
                break;
            default: break;
        }
        if (is_punct("[")) error_at(t, "blank nodes are not supported in queries");
        fail_expected(allow_literal ? std::initializer_list<std::string_view>{"variable", "IRI", "literal"}
                                    : std::initializer_list<std::string_view>{"variable", "IRI"});
    }

    Term parse_literal() {
        std::string lex = advance().text;
        if (is_punct("@")) {
            advance();
            const Token& tag = advance();
            std::string text = tag.text;
            // "en-GB" lexes as one word; "en" "-" "GB" never occurs because '-' is a name char.
            if ((tag.kind != Tok::word) || !Term::valid_language(text)) error_at(tag, "invalid language tag");
            return Term::lang_literal(std::move(lex), std::move(text));
        }
        if (is_punct("^^")) {
            advance();
            const Token& dt = peek();
            if (dt.kind == Tok::iri) return make_literal(dt, std::move(lex), advance().text);
            if (dt.kind == Tok::pname) {
                advance();
                return make_literal(dt, std::move(lex), expand_pname(dt, dt.text).lexical());
            }
            fail_expected({"datatype IRI"});
        }
        return Term::literal(std::move(lex));
    }

    Term make_literal(const Token& at, std::string lex, std::string datatype) const {
        try {
            return Term::literal(std::move(lex), std::move(datatype));
        } catch (const std::invalid_argument& e) {
            error_at(at, e.what());
        }
    }

    PredicateItem parse_predicate() {
        const Token& t = peek();
        if (t.kind == Tok::var) return Variable{advance().text};
        if (t.kind == Tok::word && t.text == "a") {
            advance();
            return Term::iri(rdf::type);
        }
        std::vector<Term> steps;
        auto read_step = [&]() {
            const Token& s = peek();
            if (s.kind == Tok::iri) {
                steps.push_back(Term::iri(advance().text));
            } else if (s.kind == Tok::pname) {
                advance();
                for (Term& step : expand_pname_or_path(s)) steps.push_back(std::move(step));
            } else {
                check_unsupported(s);
                fail_expected({"variable", "IRI", "'a'"});
            }
        };
        read_step();
        while (is_punct("/")) {
            advance();
            read_step();
        }
        if (steps.size() == 1) return std::move(steps.front());
        return PredicatePath{std::move(steps)};
    }

    void parse_triples_same_subject(std::vector<TriplePattern>& out) {
        TermOrVar subject = parse_var_or_term(true);
        while (true) {
            PredicateItem predicate = parse_predicate();
            while (true) {
                TermOrVar object = parse_var_or_term(true);
                out.push_back({subject, predicate, std::move(object)});
                if (!is_punct(",")) break;
                advance();
            }
            if (!is_punct(";")) break;
            while (is_punct(";")) advance();
            if (is_punct(".") || is_punct("}")) break;
        }
    }

    // Projection scoping and aggregate placement rules.
    void check_scoping(const Query& q) const;

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    std::map<std::string, std::string> prefixes_;
};

inline void collect_pattern_vars(const TermOrVar& t, std::set<std::string>& out) {
    if (auto v = std::get_if<Variable>(&t)) out.insert(v->name);
}

// Variables in scope after evaluating a pattern.
inline std::set<std::string> visible_vars(const Pattern& p);

inline std::set<std::string> visible_vars(const Query& q) {
    std::set<std::string> out;
    for (std::size_t i = 0; i < q.projection.size(); ++i) out.insert(q.output_name(i));
    return out;
}

inline std::set<std::string> visible_vars(const Pattern& p) {
    std::set<std::string> out;
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, BgpPattern>) {
                for (const TriplePattern& t : n.triples) {
                    collect_pattern_vars(t.subject, out);
                    if (auto v = std::get_if<Variable>(&t.predicate)) out.insert(v->name);
                    collect_pattern_vars(t.object, out);
                }
            } else if constexpr (std::is_same_v<T, GraphPattern>) {
                collect_pattern_vars(n.target, out);
                out.merge(visible_vars(*n.inner));
            } else if constexpr (std::is_same_v<T, JoinPattern>) {
                for (const Pattern& c : n.children) out.merge(visible_vars(c));
            } else if constexpr (std::is_same_v<T, MinusPattern>) {
                out = visible_vars(*n.left);
            } else {
                out = visible_vars(*n.query);
            }
        },
        p.node);
    return out;
}

inline void check_query_scoping(const Query& q) {
    std::set<std::string> visible = visible_vars(q.where);
    bool aggregates = q.has_aggregates();
    std::set<std::string> seen;
    for (std::size_t i = 0; i < q.projection.size(); ++i) {
        const ProjectionItem& item = q.projection[i];
        std::string name = q.output_name(i);
        if (!seen.insert(name).second) throw QueryError("duplicate projected name ?" + name);
        if (auto v = std::get_if<Variable>(&item.expr)) {
            if (q.group_by) {
                bool grouped = std::find(q.group_by->begin(), q.group_by->end(), *v) != q.group_by->end();
                if (!grouped) throw QueryError("projected variable ?" + v->name + " is not in GROUP BY");
            } else if (aggregates) {
                throw QueryError("aggregate misuse: ?" + v->name +
                                 " is projected next to an aggregate without GROUP BY");
            } else if (!visible.contains(v->name)) {
                throw QueryError("projected variable ?" + v->name + " is not visible in the WHERE pattern");
            }
        } else if (visible.contains(name)) {
            throw QueryError("aggregate alias ?" + name + " is already bound in the WHERE pattern");
        }
    }
    // Nested sub-selects follow the same rules.
    std::vector<const Pattern*> stack{&q.where};
    while (!stack.empty()) {
        const Pattern* p = stack.back();
        stack.pop_back();
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, GraphPattern>) {
                    stack.push_back(&*n.inner);
                } else if constexpr (std::is_same_v<T, JoinPattern>) {
                    for (const Pattern& c : n.children) stack.push_back(&c);
                } else if constexpr (std::is_same_v<T, MinusPattern>) {
                    stack.push_back(&*n.left);
                    stack.push_back(&*n.right);
                } else if constexpr (std::is_same_v<T, SubSelectPattern>) {
                    check_query_scoping(*n.query);
                }
            },
            p->node);
    }
}

inline void Parser::check_scoping(const Query& q) const { check_query_scoping(q); }

// --- printing ---------------------------------------------------------------

inline std::string print_term_or_var(const TermOrVar& t) {
    if (auto v = std::get_if<Variable>(&t)) return "?" + v->name;
    return std::get<Term>(t).to_ntriples();
}

inline std::string print_predicate(const PredicateItem& p) {
    if (auto v = std::get_if<Variable>(&p)) return "?" + v->name;
    if (auto t = std::get_if<Term>(&p)) return t->to_ntriples();
    std::string out;
    for (const Term& step : std::get<PredicatePath>(p).steps) {
        if (!out.empty()) out += '/';
        out += step.to_ntriples();
    }
    return out;
}

inline std::string print_select(const Query& q);
inline std::string print_content(const Pattern& p);

inline std::string print_element(const Pattern& p) {
    if (auto g = std::get_if<GraphPattern>(&p.node))
        return "GRAPH " + print_term_or_var(g->target) + " { " + print_content(*g->inner) + " }";
    return "{ " + print_content(p) + " }";
}

inline std::string print_content(const Pattern& p) {
    return std::visit(
        [](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, BgpPattern>) {
                std::string out;
                for (const TriplePattern& t : n.triples) {
                    if (!out.empty()) out += " . ";
                    out += print_term_or_var(t.subject) + " " + print_predicate(t.predicate) + " " +
                           print_term_or_var(t.object);
                }
                return out;
            } else if constexpr (std::is_same_v<T, GraphPattern>) {
                return print_element(Pattern{n});
            } else if constexpr (std::is_same_v<T, JoinPattern>) {
                std::string out;
                for (const Pattern& c : n.children) {
                    if (!out.empty()) out += " ";
                    out += print_element(c);
                }
                return out;
            } else if constexpr (std::is_same_v<T, MinusPattern>) {
                return print_element(*n.left) + " MINUS { " + print_content(*n.right) + " }";
            } else {
                return print_select(*n.query);
            }
        },
        p.node);
}

inline std::string print_select(const Query& q) {
    std::string out = "SELECT";
    for (const ProjectionItem& item : q.projection) {
        out += ' ';
        if (auto v = std::get_if<Variable>(&item.expr)) {
            out += "?" + v->name;
            continue;
        }
        const Aggregate& a = std::get<Aggregate>(item.expr);
        std::string body;
        switch (a.function) {
            case AggregateFunction::count: body = "COUNT(?" + a.argument.name + ")"; break;
            case AggregateFunction::count_distinct: body = "COUNT(DISTINCT ?" + a.argument.name + ")"; break;
            case AggregateFunction::max: body = "MAX(?" + a.argument.name + ")"; break;
            case AggregateFunction::min: body = "MIN(?" + a.argument.name + ")"; break;
            case AggregateFunction::sum: body = "SUM(?" + a.argument.name + ")"; break;
        }
        out += item.alias ? "(" + body + " AS ?" + item.alias->name + ")" : body;
    }
    out += " WHERE { " + print_content(q.where) + " }";
    if (q.group_by) {
        out += " GROUP BY";
        for (const Variable& v : *q.group_by) out += " ?" + v.name;
    }
    return out;
}

}  // namespace detail

// Parses the supported SELECT subset. Throws ParseError (with position) for
// syntax problems and QueryError for scoping / aggregate misuse.
inline Query parse_query(std::string_view text) { return detail::Parser(text).parse_top(); }

// Renders a query back to text that parse_query accepts and maps to an equal
// AST.
inline std::string to_sparql(const Query& q) {
    std::string out;
    for (const auto& [name, iri] : q.prefixes) out += "PREFIX " + name + ": <" + iri + ">\n";
    return out + detail::print_select(q);
}

namespace detail {

class Normalizer {
public:
    Query run(const Query& q) {
        Query out = q;
        normalize_query(out);
        return out;
    }

    std::vector<std::string> variables;

    void register_var(const std::string& name) {
        if (std::find(variables.begin(), variables.end(), name) == variables.end()) variables.push_back(name);
    }

private:
    // Names that cannot clash with user variables (not valid SPARQL names).
    std::string fresh_var() { return "path." + std::to_string(++fresh_); }

    void normalize_query(Query& q) {
        for (std::size_t i = 0; i < q.projection.size(); ++i) {
            if (auto a = std::get_if<Aggregate>(&q.projection[i].expr)) register_var(a->argument.name);
            register_var(q.output_name(i));
        }
        normalize_pattern(q.where);
        if (q.group_by) {
            auto visible = visible_vars(q.where);
            for (const Variable& v : *q.group_by) {
                if (!visible.contains(v.name))
                    throw QueryError("GROUP BY variable ?" + v.name + " is not visible in the WHERE pattern");
                register_var(v.name);
            }
        }
    }

    void register_term(const TermOrVar& t) {
        if (auto v = std::get_if<Variable>(&t)) register_var(v->name);
    }

    void normalize_pattern(Pattern& p) {
        std::visit(
            [&](auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, BgpPattern>) {
                    std::vector<TriplePattern> expanded;
                    for (TriplePattern& t : n.triples) {
                        if (auto path = std::get_if<PredicatePath>(&t.predicate)) {
                            TermOrVar current = t.subject;
                            for (std::size_t i = 0; i < path->steps.size(); ++i) {
                                TermOrVar next = i + 1 == path->steps.size() ? t.object : TermOrVar{Variable{fresh_var()}};
                                expanded.push_back({current, path->steps[i], next});
                                current = next;
                            }
                        } else {
                            expanded.push_back(std::move(t));
                        }
                    }
                    n.triples = std::move(expanded);
                    for (const TriplePattern& t : n.triples) {
                        register_term(t.subject);
                        if (auto v = std::get_if<Variable>(&t.predicate)) register_var(v->name);
                        register_term(t.object);
                    }
                } else if constexpr (std::is_same_v<T, GraphPattern>) {
                    register_term(n.target);
                    normalize_pattern(*n.inner);
                } else if constexpr (std::is_same_v<T, JoinPattern>) {
                    for (Pattern& c : n.children) normalize_pattern(c);
                } else if constexpr (std::is_same_v<T, MinusPattern>) {
                    normalize_pattern(*n.left);
                    normalize_pattern(*n.right);
                } else {
                    normalize_query(*n.query);
                }
            },
            p.node);
    }

    std::size_t fresh_ = 0;
};

}  // namespace detail

// Expands predicate paths into chains over fresh variables, checks GROUP BY
// visibility and numbers every variable. Idempotent on its own output query.
inline Plan validate_and_name(const Query& q) {
    detail::Normalizer n;
    Plan plan;
    plan.query = n.run(q);
    plan.variables = std::move(n.variables);
    return plan;
}

inline Plan compile(std::string_view text) { return validate_and_name(parse_query(text)); }

}  // namespace converg::sparql
