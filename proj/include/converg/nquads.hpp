#pragma once

#include <cstdint>
#include <istream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"
#include "term.hpp"

namespace converg {

enum class ParseMode { strict, lenient };

// Which graph positions a document may use. Version files must be graph
// scoped; metadata files must stay in the default graph.
enum class GraphPolicy { any, named_only, default_only };

struct ParseWarning {
    std::size_t line;
    std::string message;

    friend bool operator==(const ParseWarning&, const ParseWarning&) = default;
};

struct ParsedDocument {
    std::vector<Quad> quads;  // file order
    std::vector<ParseWarning> warnings;
};

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

// Reads N-Triples terms from one line. Throws ParseError with the line
// number it was constructed with.
class TermReader {
public:
    TermReader(std::string_view text, std::size_t line) : text_(text), line_(line) {}

    bool at_end() const noexcept { return pos_ >= text_.size(); }
    char peek() const noexcept { return at_end() ? '\0' : text_[pos_]; }
    std::size_t column() const noexcept { return pos_ + 1; }

    void skip_ws() {
        while (!at_end() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    [[noreturn]] void fail(const std::string& message) const { throw ParseError(message, line_, column()); }

    Term read_term() {
        switch (peek()) {
            case '<': return Term::iri(read_iri());
            case '_': return read_blank();
            case '"': return read_literal();
            default: fail("expected IRI, blank node or literal");
        }
    }

    std::string read_iri() {
        ++pos_;  // '<'
        std::string value;
        while (true) {
            if (at_end()) fail("unterminated IRI");
            char c = text_[pos_];
            if (c == '>') break;
            if (c == '\\') {
                std::uint32_t cp = read_unicode_escape();
                append_utf8(value, cp);
                continue;
            }
            if (static_cast<unsigned char>(c) <= 0x20 || c == '<' || c == '"' || c == '{' || c == '}' || c == '|' ||
                c == '^' || c == '`')
                fail(std::string("character not allowed in IRI"));
            value += c;
            ++pos_;
        }
        ++pos_;
        if (value.empty()) fail("empty IRI");
        if (!Term::valid_iri(value)) fail("invalid IRI");
        return value;
    }

    // Consumes the statement '.', allowing only whitespace or a comment after it.
    void read_term_terminator() {
        ++pos_;
        skip_ws();
        if (!at_end() && peek() != '#') fail("unexpected content after '.'");
    }

    void expect_ws_or(char terminator) {
        if (at_end()) return;
        char c = peek();
        if (c != ' ' && c != '\t' && c != terminator) fail("expected whitespace after term");
    }

private:
    Term read_blank() {
        if (pos_ + 1 >= text_.size() || text_[pos_ + 1] != ':') fail("expected '_:' blank node");
        pos_ += 2;
        std::size_t start = pos_;
        while (!at_end()) {
            char c = text_[pos_];
            if (c == ' ' || c == '\t') break;
            ++pos_;
        }
        std::string label(text_.substr(start, pos_ - start));
        // A trailing '.' belongs to the statement terminator.
        while (!label.empty() && label.back() == '.') {
            label.pop_back();
            --pos_;
        }
        if (!Term::valid_blank_label(label)) {
            pos_ = start;
            fail("invalid blank node label");
        }
        return Term::blank(std::move(label));
    }

    Term read_literal() {
        ++pos_;  // '"'
        std::string lexical;
        while (true) {
            if (at_end()) fail("unterminated string literal");
            char c = text_[pos_];
            if (c == '"') break;
            if (c == '\\') {
                if (pos_ + 1 >= text_.size()) fail("dangling escape");
                char e = text_[pos_ + 1];
                switch (e) {
                    case 't': lexical += '\t'; pos_ += 2; continue;
                    case 'n': lexical += '\n'; pos_ += 2; continue;
                    case 'r': lexical += '\r'; pos_ += 2; continue;
                    case '"': lexical += '"'; pos_ += 2; continue;
                    case '\\': lexical += '\\'; pos_ += 2; continue;
                    case 'u':
                    case 'U': append_utf8(lexical, read_unicode_escape()); continue;
                    default: fail(std::string("unsupported escape '\\") + e + "'");
                }
            }
            lexical += c;
            ++pos_;
        }
        ++pos_;
        if (peek() == '@') {
            ++pos_;
            std::size_t start = pos_;
            while (!at_end() && text_[pos_] != ' ' && text_[pos_] != '\t') ++pos_;
            std::string tag(text_.substr(start, pos_ - start));
            while (!tag.empty() && tag.back() == '.') {
                tag.pop_back();
                --pos_;
            }
            if (!Term::valid_language(tag)) {
                pos_ = start;
                fail("invalid language tag");
            }
            return Term::lang_literal(std::move(lexical), std::move(tag));
        }
        if (peek() == '^') {
            if (pos_ + 2 >= text_.size() || text_[pos_ + 1] != '^' || text_[pos_ + 2] != '<')
                fail("expected '^^<' datatype");
            pos_ += 2;
            std::string dt = read_iri();
            if (dt == rdf::lang_string) fail("rdf:langString literal without language tag");
            return Term::literal(std::move(lexical), std::move(dt));
        }
        return Term::literal(std::move(lexical));
    }

    std::uint32_t read_unicode_escape() {
        // pos_ at backslash
        if (pos_ + 1 >= text_.size()) fail("dangling escape");
        char kind = text_[pos_ + 1];
        std::size_t n = kind == 'u' ? 4 : kind == 'U' ? 8 : 0;
        if (n == 0) fail("only \\u and \\U escapes are allowed here");
        if (pos_ + 2 + n > text_.size()) fail("truncated unicode escape");
        std::uint32_t cp = 0;
        for (std::size_t i = 0; i < n; ++i) {
            char h = text_[pos_ + 2 + i];
            std::uint32_t v;
            if (h >= '0' && h <= '9') v = h - '0';
            else if (h >= 'a' && h <= 'f') v = h - 'a' + 10;
            else if (h >= 'A' && h <= 'F') v = h - 'A' + 10;
            else fail("invalid hex digit in unicode escape");
            cp = cp * 16 + v;
        }
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail("unicode escape out of range");
        pos_ += 2 + n;
        return cp;
    }

    std::string_view text_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

inline std::string_view trim_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

inline bool is_blank_or_comment(std::string_view line) {
    auto pos = line.find_first_not_of(" \t");
    return pos == std::string_view::npos || line[pos] == '#';
}

// Parses one statement line (already known not to be blank or a comment).
inline Quad parse_statement(std::string_view text, std::size_t line_no, GraphPolicy policy) {
    TermReader r(text, line_no);
    r.skip_ws();
    Quad q;
    std::size_t col = r.column();
    q.subject = r.read_term();
    if (q.subject.is_literal()) throw ParseError("subject must be an IRI or blank node", line_no, col);
    r.expect_ws_or('.');
    r.skip_ws();
    col = r.column();
    if (r.peek() != '<') r.fail("predicate must be an IRI");
    q.predicate = r.read_term();
    r.expect_ws_or('.');
    r.skip_ws();
    q.object = r.read_term();
    r.expect_ws_or('.');
    r.skip_ws();
    if (r.peek() != '.') {
        col = r.column();
        if (r.peek() != '<') r.fail("graph label must be an IRI");
        q.graph = r.read_term();
        r.expect_ws_or('.');
        r.skip_ws();
    }
    if (r.peek() != '.') r.fail("expected '.'");
    r.read_term_terminator();
    if (policy == GraphPolicy::named_only && !q.graph)
        throw ParseError("default-graph quad not allowed in a version file", line_no, 1);
    if (policy == GraphPolicy::default_only && q.graph)
        throw ParseError("named-graph quad not allowed here", line_no, col);
    return q;
}

}  // namespace detail

inline ParsedDocument parse_nquads(std::string_view input, ParseMode mode = ParseMode::strict,
                                   GraphPolicy policy = GraphPolicy::any) {
    ParsedDocument doc;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < input.size()) {
        std::size_t end = input.find('\n', start);
        if (end == std::string_view::npos) end = input.size();
        std::string_view line = detail::trim_cr(input.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (detail::is_blank_or_comment(line)) continue;
        try {
            doc.quads.push_back(detail::parse_statement(line, line_no, policy));
        } catch (const ParseError& e) {
            if (mode == ParseMode::strict) throw;
            doc.warnings.push_back({line_no, e.what()});
        } catch (const std::invalid_argument& e) {
            if (mode == ParseMode::strict) throw ParseError(e.what(), line_no, 1);
            doc.warnings.push_back({line_no, e.what()});
        }
    }
    return doc;
}

inline ParsedDocument parse_nquads(std::istream& in, ParseMode mode = ParseMode::strict,
                                   GraphPolicy policy = GraphPolicy::any) {
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_nquads(content, mode, policy);
}

// Parses a single term in N-Triples syntax (the whole string must be one term).
inline Term parse_ntriples_term(std::string_view text, std::size_t line_no = 1) {
    detail::TermReader r(text, line_no);
    Term t;
    try {
        t = r.read_term();
    } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), line_no, 1);
    }
    if (!r.at_end()) r.fail("trailing characters after term");
    return t;
}

inline std::string serialize_nquads(std::span<const Quad> quads) {
    std::string out;
    for (const Quad& q : quads) {
        out += q.to_nquads();
        out += '\n';
    }
    return out;
}

}  // namespace converg
