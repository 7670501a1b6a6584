#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "error.hpp"
#include "model.hpp"
#include "nquads.hpp"
#include "term.hpp"

namespace converg {

namespace bsbm {
inline const std::string ns = "http://www4.wiwiss.fu-berlin.de/bizer/bsbm/";
inline const std::string vocabulary = ns + "v01/vocabulary/";
inline const std::string instances = ns + "v01/instances/";
inline const std::string product_class = vocabulary + "Product";
inline const std::string rating2 = vocabulary + "rating2";
}  // namespace bsbm

struct GenConfig {
    std::uint32_t products = 10;
    std::uint32_t graphs = 1;
    std::uint32_t versions = 1;
    double change_rate = 0.1;
    std::int64_t rating_min = 1;
    std::int64_t rating_max = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (products == 0 || graphs == 0 || versions == 0)
            throw Error("gen: products, graphs and versions must be positive");
        if (!(change_rate >= 0.0 && change_rate <= 1.0)) throw Error("gen: change rate must lie in [0, 1]");
        if (rating_min > rating_max) throw Error("gen: empty rating range");
    }
};

namespace gen_detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream key for one (seed, version, graph, product, purpose) cell.
inline std::uint64_t cell(std::uint64_t seed, std::uint32_t version, std::uint32_t graph, std::uint32_t product,
                          std::uint32_t purpose) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ version);
    h = splitmix64(h ^ (std::uint64_t{graph} << 32 | product));
    return splitmix64(h ^ purpose);
}

inline double unit_interval(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

}  // namespace gen_detail

inline Term product_iri(std::uint32_t p) { return Term::iri(bsbm::instances + "Product" + std::to_string(p)); }
inline Term bsbm_graph_iri(std::uint32_t g) { return Term::iri("http://example.org/bsbm/graph" + std::to_string(g)); }

// Rating of product p in graph g at version m. Version k > 1 re-rolls with
// probability change_rate; the value at m is the draw of the latest re-roll
// at or before m (or version 1's draw), so no predecessor is materialized.
inline std::int64_t generated_rating(const GenConfig& cfg, std::uint32_t m, std::uint32_t g, std::uint32_t p) {
    std::uint32_t source = 1;
    for (std::uint32_t k = m; k >= 2; --k) {
        if (gen_detail::unit_interval(gen_detail::cell(cfg.seed, k, g, p, 0)) < cfg.change_rate) {
            source = k;
            break;
        }
    }
    auto span = static_cast<std::uint64_t>(cfg.rating_max - cfg.rating_min) + 1;
    return cfg.rating_min + static_cast<std::int64_t>(gen_detail::cell(cfg.seed, source, g, p, 1) % span);
}

inline ParsedDocument generate_version(const GenConfig& cfg, VersionOrdinal m) {
    cfg.validate();
    if (m.value < 1 || m.value > cfg.versions) throw Error("gen: version ordinal out of range");
    ParsedDocument doc;
    doc.quads.reserve(std::size_t{2} * cfg.products * cfg.graphs);
    const Term type = Term::iri(rdf::type);
    const Term product_class = Term::iri(bsbm::product_class);
    const Term rating = Term::iri(bsbm::rating2);
    for (std::uint32_t g = 1; g <= cfg.graphs; ++g) {
        Term graph = bsbm_graph_iri(g);
        for (std::uint32_t p = 1; p <= cfg.products; ++p) {
            Term product = product_iri(p);
            doc.quads.push_back({product, type, product_class, graph});
            Term value = Term::literal(std::to_string(generated_rating(cfg, m.value, g, p)), xsd::integer);
            doc.quads.push_back({product, rating, value, graph});
        }
    }
    return doc;
}

inline std::string version_file_name(std::uint32_t m) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "v%04u.nq", m);
    return buf;
}

// Writes v0001.nq .. vNNNN.nq into `out`.
inline void write_generated(const GenConfig& cfg, const std::filesystem::path& out) {
    cfg.validate();
    std::filesystem::create_directories(out);
    for (std::uint32_t m = 1; m <= cfg.versions; ++m) {
        ParsedDocument doc = generate_version(cfg, VersionOrdinal(m));
        std::filesystem::path file = out / version_file_name(m);
        std::ofstream os(file, std::ios::binary);
        os << serialize_nquads(doc.quads);
        if (!os) throw IoError("gen: cannot write " + file.string());
    }
}

}  // namespace converg
