#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "term.hpp"

namespace converg {

using TermId = std::uint64_t;

// Dense, bijective Term <-> TermId mapping shared by every quad position.
class Dictionary {
public:
    static constexpr TermId max_id = std::numeric_limits<std::uint32_t>::max() - 1;

    TermId encode(const Term& t) {
        if (auto it = forward_.find(t); it != forward_.end()) return it->second;
        if (reverse_.size() > max_id) throw Error("dictionary capacity exhausted");
        TermId id = reverse_.size();
        reverse_.push_back(t);
        forward_.emplace(t, id);
        return id;
    }

    std::optional<TermId> find(const Term& t) const {
        if (auto it = forward_.find(t); it != forward_.end()) return it->second;
        return std::nullopt;
    }

    const Term& decode(TermId id) const {
        if (id >= reverse_.size()) throw LookupError("unknown term id " + std::to_string(id));
        return reverse_[id];
    }

    std::size_t size() const noexcept { return reverse_.size(); }

    // Drops every id >= n. Used to roll back a failed ingestion.
    void truncate(std::size_t n) {
        while (reverse_.size() > n) {
            forward_.erase(reverse_.back());
            reverse_.pop_back();
        }
    }

    bool check_bijection() const {
        if (forward_.size() != reverse_.size()) return false;
        for (TermId id = 0; id < reverse_.size(); ++id) {
            auto it = forward_.find(reverse_[id]);
            if (it == forward_.end() || it->second != id) return false;
        }
        return true;
    }

    friend bool operator==(const Dictionary& a, const Dictionary& b) { return a.reverse_ == b.reverse_; }

private:
    std::unordered_map<Term, TermId> forward_;
    std::vector<Term> reverse_;
};

}  // namespace converg
