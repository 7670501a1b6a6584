#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

namespace converg {

// Exact decimal number: unscaled * 10^-scale, scale >= 0, normalized so that
// the unscaled value carries no trailing zero once scale > 0. Normalization
// makes equality structural.
class Decimal {
public:
    using Integer = boost::multiprecision::cpp_int;

    Decimal() = default;
    explicit Decimal(std::int64_t v) : unscaled_(v) {}

    // Accepts [+-]? digits [. digits]? ([eE] [+-]? digits)? with at least one
    // digit in the mantissa. Double-style exponents are applied exactly.
    static std::optional<Decimal> parse(std::string_view text) {
        std::size_t i = 0;
        bool negative = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
            negative = text[i] == '-';
            ++i;
        }
        std::string digits;
        std::int64_t scale = 0;
        bool any_digit = false;
        while (i < text.size() && is_digit(text[i])) {
            digits.push_back(text[i++]);
            any_digit = true;
        }
        if (i < text.size() && text[i] == '.') {
            ++i;
            while (i < text.size() && is_digit(text[i])) {
                digits.push_back(text[i++]);
                ++scale;
                any_digit = true;
            }
        }
        if (!any_digit) return std::nullopt;
        if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
            ++i;
            bool exp_negative = false;
            if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
                exp_negative = text[i] == '-';
                ++i;
            }
            std::int64_t exponent = 0;
            bool exp_digit = false;
            while (i < text.size() && is_digit(text[i])) {
                if (exponent > 100000) return std::nullopt;
                exponent = exponent * 10 + (text[i++] - '0');
                exp_digit = true;
            }
            if (!exp_digit) return std::nullopt;
            scale += exp_negative ? exponent : -exponent;
        }
        if (i != text.size()) return std::nullopt;

        Decimal d;
        d.unscaled_ = Integer(digits.empty() ? std::string("0") : strip_leading_zeros(digits));
        if (negative) d.unscaled_ = -d.unscaled_;
        if (scale < 0) {
            d.unscaled_ *= pow10(static_cast<unsigned>(-scale));
            scale = 0;
        }
        d.scale_ = static_cast<unsigned>(scale);
        d.normalize();
        return d;
    }

    bool is_integer() const noexcept { return scale_ == 0; }

    Decimal operator+(const Decimal& other) const {
        Decimal r;
        unsigned s = std::max(scale_, other.scale_);
        r.unscaled_ = rescaled(s) + other.rescaled(s);
        r.scale_ = s;
        r.normalize();
        return r;
    }

    friend bool operator==(const Decimal& a, const Decimal& b) {
        return a.scale_ == b.scale_ && a.unscaled_ == b.unscaled_;
    }

    friend std::strong_ordering operator<=>(const Decimal& a, const Decimal& b) {
        unsigned s = std::max(a.scale_, b.scale_);
        Integer x = a.rescaled(s);
        Integer y = b.rescaled(s);
        if (x < y) return std::strong_ordering::less;
        if (y < x) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }

    // Canonical lexical form: integers without a point, others with the
    // shortest fraction that represents the value exactly.
    std::string to_string() const {
        std::string digits = boost::multiprecision::cpp_int(abs(unscaled_)).str();
        std::string out = unscaled_ < 0 ? "-" : "";
        if (scale_ == 0) return out + digits;
        if (digits.size() <= scale_) digits.insert(0, scale_ - digits.size() + 1, '0');
        out += digits.substr(0, digits.size() - scale_);
        out += '.';
        out += digits.substr(digits.size() - scale_);
        return out;
    }

private:
    static bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

    static std::string strip_leading_zeros(const std::string& s) {
        auto pos = s.find_first_not_of('0');
        return pos == std::string::npos ? std::string("0") : s.substr(pos);
    }

    static Integer pow10(unsigned n) {
        Integer r = 1;
        for (unsigned i = 0; i < n; ++i) r *= 10;
        return r;
    }

    Integer rescaled(unsigned s) const { return unscaled_ * pow10(s - scale_); }

    void normalize() {
        if (unscaled_ == 0) {
            scale_ = 0;
            return;
        }
        while (scale_ > 0 && unscaled_ % 10 == 0) {
            unscaled_ /= 10;
            --scale_;
        }
    }

    Integer unscaled_ = 0;
    unsigned scale_ = 0;
};

}  // namespace converg
