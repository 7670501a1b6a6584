#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "numeric.hpp"
#include "term.hpp"

namespace converg {

inline Term count_literal(std::size_t n) { return Term::literal(std::to_string(n), xsd::integer); }

// Exact SUM. The result is xsd:integer when every input was integer-typed
// (or a plain integer lexical form), xsd:decimal otherwise. The empty sum is 0.
class SumAccumulator {
public:
    // Returns false when the term is not numeric.
    bool add(const Term& t) { return add(t, t.numeric_value()); }

    bool add(const Term& t, const std::optional<Decimal>& value) {
        if (!value) return false;
        total_ = total_ + *value;
        const std::string& dt = t.datatype();
        bool integer_typed = dt.empty() ? value->is_integer() && t.lexical().find_first_of(".eE") == std::string::npos
                                        : Term::is_numeric_datatype(dt) && dt != xsd::decimal &&
                                              dt != xsd::double_ && !dt.ends_with("#float");
        all_integer_ = all_integer_ && integer_typed;
        return true;
    }

    Term result() const {
        if (all_integer_) return Term::literal(total_.to_string(), xsd::integer);
        std::string lex = total_.to_string();
        if (lex.find('.') == std::string::npos) lex += ".0";
        return Term::literal(std::move(lex), xsd::decimal);
    }

private:
    Decimal total_;
    bool all_integer_ = true;
};

}  // namespace converg
