#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <boost/container/small_vector.hpp>

#include "model.hpp"

namespace converg {

// Presence bits over version ordinals: ordinal m lives at bit index m-1.
// Trailing zero words are never stored, so equality is structural.
class VersionBitmap {
public:
    VersionBitmap() = default;

    static VersionBitmap single(VersionOrdinal m) {
        VersionBitmap b;
        b.set(m);
        return b;
    }

    void set(VersionOrdinal m) {
        std::size_t bit = m.value - 1;
        std::size_t word = bit / 64;
        if (word >= words_.size()) words_.resize(word + 1, 0);
        words_[word] |= std::uint64_t{1} << (bit % 64);
    }

    void reset(VersionOrdinal m) {
        std::size_t bit = m.value - 1;
        std::size_t word = bit / 64;
        if (word >= words_.size()) return;
        words_[word] &= ~(std::uint64_t{1} << (bit % 64));
        trim();
    }

    bool test(VersionOrdinal m) const noexcept {
        std::size_t bit = m.value - 1;
        std::size_t word = bit / 64;
        return word < words_.size() && ((words_[word] >> (bit % 64)) & 1u);
    }

    bool none() const noexcept { return words_.empty(); }
    bool any() const noexcept { return !words_.empty(); }

    std::size_t popcount() const noexcept {
        std::size_t n = 0;
        for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
        return n;
    }

    // Highest set ordinal, 0 when empty.
    std::uint32_t highest() const noexcept {
        if (words_.empty()) return 0;
        std::size_t last = words_.size() - 1;
        return static_cast<std::uint32_t>(last * 64 + (64 - std::countl_zero(words_[last])));
    }

    VersionBitmap& operator&=(const VersionBitmap& other) {
        if (words_.size() > other.words_.size()) words_.resize(other.words_.size());
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
        trim();
        return *this;
    }

    friend VersionBitmap operator&(VersionBitmap a, const VersionBitmap& b) { return a &= b; }

    friend bool operator==(const VersionBitmap& a, const VersionBitmap& b) { return a.words_ == b.words_; }

    template <typename F>
    void for_each_set(F&& f) const {
        for (std::size_t w = 0; w < words_.size(); ++w) {
            std::uint64_t bits = words_[w];
            while (bits) {
                int b = std::countr_zero(bits);
                f(VersionOrdinal(static_cast<std::uint32_t>(w * 64 + b + 1)));
                bits &= bits - 1;
            }
        }
    }

    // Version 1 leftmost, padded with zeros to `length` characters.
    std::string to_string(std::uint32_t length) const {
        std::string out(length, '0');
        for_each_set([&](VersionOrdinal m) {
            if (m.value <= length) out[m.value - 1] = '1';
        });
        return out;
    }

    static std::optional<VersionBitmap> from_string(std::string_view text) {
        VersionBitmap b;
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] == '1') b.set(VersionOrdinal(static_cast<std::uint32_t>(i + 1)));
            else if (text[i] != '0') return std::nullopt;
        }
        return b;
    }

private:
    void trim() {
        while (!words_.empty() && words_.back() == 0) words_.pop_back();
    }

    boost::container::small_vector<std::uint64_t, 1> words_;
};

}  // namespace converg
