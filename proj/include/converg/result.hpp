#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "term.hpp"

namespace converg {

// Final query output: named columns and rows of optional terms (nullopt =
// unbound).
struct ResultTable {
    using Row = std::vector<std::optional<Term>>;

    std::vector<std::string> columns;
    std::vector<Row> rows;
    std::vector<std::string> warnings;  // not part of equality

    friend bool operator==(const ResultTable& a, const ResultTable& b) {
        return a.columns == b.columns && a.rows == b.rows;
    }

    static std::string cell_text(const std::optional<Term>& t) { return t ? t->to_ntriples() : std::string(); }

    // Canonical order: ascending by the tab-joined N-Triples form of each row.
    void canonicalize() {
        std::vector<std::string> keys;
        keys.reserve(rows.size());
        for (const Row& r : rows) {
            std::string k;
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) k += '\t';
                k += cell_text(r[i]);
            }
            keys.push_back(std::move(k));
        }
        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
        std::vector<Row> sorted;
        sorted.reserve(rows.size());
        for (std::size_t i : order) sorted.push_back(std::move(rows[i]));
        rows = std::move(sorted);
    }

    std::string to_tsv() const {
        std::string out;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out += '\t';
            out += columns[i];
        }
        out += '\n';
        for (const Row& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) out += '\t';
                std::string cell = cell_text(r[i]);
                // Literals may carry raw tabs; escape them so columns stay aligned.
                for (char c : cell) {
                    if (c == '\t') out += "\\t";
                    else out += c;
                }
            }
            out += '\n';
        }
        return out;
    }

    std::string to_csv() const {
        auto field = [](const std::string& s) {
            if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
            std::string q = "\"";
            for (char c : s) {
                if (c == '"') q += "\"\"";
                else q += c;
            }
            return q + "\"";
        };
        std::string out;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out += ',';
            out += field(columns[i]);
        }
        out += '\n';
        for (const Row& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) out += ',';
                out += field(cell_text(r[i]));
            }
            out += '\n';
        }
        return out;
    }
};

}  // namespace converg
