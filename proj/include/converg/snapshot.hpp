#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include "error.hpp"
#include "nquads.hpp"
#include "store.hpp"

// Snapshot directory layout (UTF-8, '\n' line endings):
//   MANIFEST  format-version / version-count / vng-counter / label lines
//   DICT      <id>\t<term>
//   VNG       <counter>\t<graph id>\t<ordinal>
//   ENTRIES   <graph>\t<s>\t<p>\t<o>\t<bits, version 1 leftmost>
//   META      user metadata triples (N-Triples)
//   CHECKSUM  <file> <sha-256 hex> for each file above
//
// Saving writes a sibling "<dir>.new", moves the current directory aside to
// "<dir>.old", then renames the new one into place. A reader that finds no
// MANIFEST falls back to "<dir>.old", so an interrupted save never loses the
// previous snapshot.

namespace converg {

inline constexpr int snapshot_format_version = 1;
inline constexpr std::array<std::string_view, 5> snapshot_files = {"MANIFEST", "DICT", "VNG", "ENTRIES", "META"};

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

namespace detail {

inline std::filesystem::path sibling(const std::filesystem::path& dir, std::string_view suffix) {
    std::filesystem::path clean = dir;
    if (!clean.has_filename()) clean = clean.parent_path();
    return clean.string() + std::string(suffix);
}

inline void write_file_synced(const std::filesystem::path& path, std::string_view content) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw IoError("cannot create " + path.string());
    std::size_t written = 0;
    while (written < content.size()) {
        ssize_t n = ::write(fd, content.data() + written, content.size() - written);
        if (n < 0) {
            ::close(fd);
            throw IoError("write failed: " + path.string());
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) throw IoError("fsync failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptionError("missing snapshot file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t end = line.find(sep, start);
        parts.push_back(line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return parts;
}

template <typename T>
T parse_number(std::string_view text, const std::string& where) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw CorruptionError(where + ": expected a number, got '" + std::string(text) + "'");
    return value;
}

inline std::map<std::string, std::string> render_snapshot(const Store& store) {
    const Dictionary& dict = store.dictionary();
    std::map<std::string, std::string> files;

    std::string manifest = "format-version=" + std::to_string(snapshot_format_version) + "\n";
    manifest += "version-count=" + std::to_string(store.version_count()) + "\n";
    manifest += "vng-counter=" + std::to_string(store.vng_counter()) + "\n";
    for (const auto& [ordinal, label] : store.labels()) {
        if (label.find('\n') != std::string::npos || label.find('\r') != std::string::npos)
            throw Error("version label may not contain line breaks");
        manifest += "label " + std::to_string(ordinal) + " " + label + "\n";
    }
    files["MANIFEST"] = std::move(manifest);

    std::string dict_text;
    for (TermId id = 0; id < dict.size(); ++id) {
        dict_text += std::to_string(id);
        dict_text += '\t';
        dict_text += dict.decode(id).to_ntriples();
        dict_text += '\n';
    }
    files["DICT"] = std::move(dict_text);

    std::string vng_text;
    for (const VngEntry& v : store.vngs())
        vng_text += std::to_string(v.counter) + "\t" + std::to_string(v.graph) + "\t" +
                    std::to_string(v.version.value) + "\n";
    files["VNG"] = std::move(vng_text);

    std::string entries_text;
    for (const CondensedEntry& e : store.entries())
        entries_text += std::to_string(e.graph) + "\t" + std::to_string(e.subject) + "\t" +
                        std::to_string(e.predicate) + "\t" + std::to_string(e.object) + "\t" +
                        e.versions.to_string(store.version_count()) + "\n";
    files["ENTRIES"] = std::move(entries_text);

    std::string meta;
    for (const TripleIds& t : store.user_metadata())
        meta += Quad{dict.decode(t.s), dict.decode(t.p), dict.decode(t.o), std::nullopt}.to_nquads() + "\n";
    files["META"] = std::move(meta);

    std::string checksum;
    for (std::string_view name : snapshot_files)
        checksum += std::string(name) + " " + sha256_hex(files[std::string(name)]) + "\n";
    files["CHECKSUM"] = std::move(checksum);
    return files;
}

}  // namespace detail

inline void save_snapshot(const Store& store, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    auto files = detail::render_snapshot(store);
    const fs::path staging = detail::sibling(dir, ".new");
    const fs::path old = detail::sibling(dir, ".old");
    std::error_code ec;
    fs::remove_all(staging, ec);
    if (!fs::create_directories(staging, ec) && ec) throw IoError("cannot create " + staging.string());
    for (const auto& [name, content] : files) detail::write_file_synced(staging / name, content);
    if (fs::exists(dir)) {
        fs::remove_all(old, ec);
        fs::rename(dir, old, ec);
        if (ec) throw IoError("cannot move " + dir.string() + " aside: " + ec.message());
    }
    fs::rename(staging, dir, ec);
    if (ec) throw IoError("cannot install snapshot at " + dir.string() + ": " + ec.message());
    fs::remove_all(old, ec);
}

inline bool snapshot_exists(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "MANIFEST") || std::filesystem::exists(detail::sibling(dir, ".old") / "MANIFEST");
}

inline Store load_snapshot(const std::filesystem::path& requested) {
    namespace fs = std::filesystem;
    fs::path dir = requested;
    if (!fs::exists(dir / "MANIFEST")) {
        fs::path old = detail::sibling(requested, ".old");
        if (fs::exists(old / "MANIFEST")) dir = old;
        else throw CorruptionError("no snapshot in " + requested.string() + " (MANIFEST missing)");
    }

    std::map<std::string, std::string> files;
    for (std::string_view name : snapshot_files) files[std::string(name)] = detail::read_file(dir / name);
    std::string checksum_text = detail::read_file(dir / "CHECKSUM");
    std::map<std::string, std::string> digests;
    for (std::string_view line : detail::split_lines(checksum_text)) {
        auto parts = detail::split(line, ' ');
        if (parts.size() != 2) throw CorruptionError("CHECKSUM: malformed line '" + std::string(line) + "'");
        digests[std::string(parts[0])] = std::string(parts[1]);
    }
    for (std::string_view name : snapshot_files) {
        auto it = digests.find(std::string(name));
        if (it == digests.end()) throw CorruptionError("CHECKSUM: no digest for " + std::string(name));
        if (it->second != sha256_hex(files[std::string(name)]))
            throw CorruptionError("checksum mismatch for " + std::string(name));
    }

    // MANIFEST
    std::uint32_t version_count = 0;
    std::uint64_t vng_counter = 0;
    std::map<std::uint32_t, std::string> labels;
    {
        auto lines = detail::split_lines(files["MANIFEST"]);
        if (lines.size() < 3) throw CorruptionError("MANIFEST: truncated");
        if (lines[0] != "format-version=" + std::to_string(snapshot_format_version))
            throw CorruptionError("MANIFEST: unsupported " + std::string(lines[0]));
        auto value_of = [](std::string_view line, std::string_view key) {
            if (!line.starts_with(key) || line.size() <= key.size() || line[key.size()] != '=')
                throw CorruptionError("MANIFEST: expected " + std::string(key));
            return line.substr(key.size() + 1);
        };
        version_count = detail::parse_number<std::uint32_t>(value_of(lines[1], "version-count"), "MANIFEST");
        vng_counter = detail::parse_number<std::uint64_t>(value_of(lines[2], "vng-counter"), "MANIFEST");
        for (std::size_t i = 3; i < lines.size(); ++i) {
            std::string_view line = lines[i];
            if (!line.starts_with("label ")) throw CorruptionError("MANIFEST: unexpected line " + std::to_string(i + 1));
            line.remove_prefix(6);
            auto space = line.find(' ');
            if (space == std::string_view::npos) throw CorruptionError("MANIFEST: malformed label line");
            auto ordinal = detail::parse_number<std::uint32_t>(line.substr(0, space), "MANIFEST label");
            if (ordinal == 0 || ordinal > version_count) throw CorruptionError("MANIFEST: label ordinal out of range");
            labels[ordinal] = std::string(line.substr(space + 1));
        }
    }

    Dictionary dict;
    {
        auto lines = detail::split_lines(files["DICT"]);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            auto tab = lines[i].find('\t');
            if (tab == std::string_view::npos) throw CorruptionError("DICT: malformed line " + std::to_string(i + 1));
            auto id = detail::parse_number<TermId>(lines[i].substr(0, tab), "DICT");
            if (id != i) throw CorruptionError("DICT: ids are not dense at line " + std::to_string(i + 1));
            Term t;
            try {
                t = parse_ntriples_term(lines[i].substr(tab + 1), i + 1);
            } catch (const ParseError& e) {
                throw CorruptionError(std::string("DICT: ") + e.what());
            }
            if (dict.encode(t) != id) throw CorruptionError("DICT: duplicate term at line " + std::to_string(i + 1));
        }
    }

    std::vector<std::pair<std::uint64_t, std::pair<TermId, VersionOrdinal>>> vng_rows;
    for (std::string_view line : detail::split_lines(files["VNG"])) {
        auto parts = detail::split(line, '\t');
        if (parts.size() != 3) throw CorruptionError("VNG: malformed line");
        vng_rows.push_back({detail::parse_number<std::uint64_t>(parts[0], "VNG"),
                            {detail::parse_number<TermId>(parts[1], "VNG"),
                             VersionOrdinal(detail::parse_number<std::uint32_t>(parts[2], "VNG"))}});
    }
    if (vng_rows.size() != vng_counter) throw CorruptionError("MANIFEST: vng-counter disagrees with VNG");

    std::vector<CondensedEntry> entries;
    for (std::string_view line : detail::split_lines(files["ENTRIES"])) {
        auto parts = detail::split(line, '\t');
        if (parts.size() != 5) throw CorruptionError("ENTRIES: malformed line");
        if (parts[4].size() != version_count) throw CorruptionError("ENTRIES: bitstring length != version-count");
        auto bits = VersionBitmap::from_string(parts[4]);
        if (!bits) throw CorruptionError("ENTRIES: invalid bitstring");
        entries.push_back(CondensedEntry{detail::parse_number<TermId>(parts[0], "ENTRIES"),
                                         detail::parse_number<TermId>(parts[1], "ENTRIES"),
                                         detail::parse_number<TermId>(parts[2], "ENTRIES"),
                                         detail::parse_number<TermId>(parts[3], "ENTRIES"), std::move(*bits)});
    }

    std::vector<TripleIds> meta;
    try {
        auto doc = parse_nquads(files["META"], ParseMode::strict, GraphPolicy::default_only);
        for (const Quad& q : doc.quads) {
            auto s = dict.find(q.subject);
            auto p = dict.find(q.predicate);
            auto o = dict.find(q.object);
            if (!s || !p || !o) throw CorruptionError("META: triple uses a term missing from DICT");
            meta.push_back({*s, *p, *o});
        }
    } catch (const ParseError& e) {
        throw CorruptionError(std::string("META: ") + e.what());
    }

    return Store::restore(std::move(dict), version_count, std::move(labels), vng_rows, std::move(entries),
                          std::move(meta));
}

}  // namespace converg
