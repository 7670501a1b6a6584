#pragma once

#include <compare>
#include <cstdint>
#include <string>

#include "term.hpp"

namespace converg {

// 1-based index of a bulk ingestion.
struct VersionOrdinal {
    std::uint32_t value = 0;

    constexpr VersionOrdinal() = default;
    constexpr explicit VersionOrdinal(std::uint32_t v) : value(v) {}

    friend constexpr auto operator<=>(VersionOrdinal, VersionOrdinal) = default;
};

namespace vocab {
inline constexpr std::string_view prefix = "vers";
inline constexpr std::string_view ns = "urn:converg:vocab:";
inline const std::string is_version_of = std::string(ns) + "is-version-of";
inline const std::string is_in_version = std::string(ns) + "is-in-version";
inline constexpr std::string_view vng_ns = "urn:converg:vng:";
inline constexpr std::string_view version_ns = "urn:converg:version:";
}  // namespace vocab

// The graph and version only fix which record the counter is attached to;
// the IRI itself is determined by the global counter.
inline Term mint_vng_iri(const Term& /*graph*/, VersionOrdinal /*version*/, std::uint64_t counter) {
    return Term::iri(std::string(vocab::vng_ns) + std::to_string(counter));
}

inline Term version_iri(VersionOrdinal version) {
    return Term::iri(std::string(vocab::version_ns) + std::to_string(version.value));
}

// Identity of one versioned named graph.
struct VngRecord {
    Term vng_iri;
    Term graph;
    VersionOrdinal version;

    friend bool operator==(const VngRecord&, const VngRecord&) = default;
};

}  // namespace converg
