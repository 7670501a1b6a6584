#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "converg/converg.hpp"

namespace converg::cli {

namespace fs = std::filesystem;

// Wrong invocation or input the user can fix; exit code 1.
class UsageError : public Error {
public:
    using Error::Error;
};

// Advisory lock on "<store>.lock": shared for readers, exclusive for writers.
class StoreLock {
public:
    StoreLock(const fs::path& store, bool exclusive) {
        fs::path path = store;
        path += ".lock";
        if (path.has_parent_path()) {
            std::error_code ec;
            fs::create_directories(path.parent_path(), ec);
        }
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw IoError("cannot open lock file " + path.string());
        if (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
            ::close(fd_);
            throw IoError("cannot lock " + path.string());
        }
    }
    StoreLock(const StoreLock&) = delete;
    StoreLock& operator=(const StoreLock&) = delete;
    ~StoreLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }

private:
    int fd_ = -1;
};

inline std::string read_text(const std::string& file, std::istream& in) {
    if (file == "-") {
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    std::ifstream is(file, std::ios::binary);
    if (!is) throw UsageError("cannot read " + file);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Fills in the store directory from CONVERG_STORE when the positional list is
// one short.
inline std::vector<std::string> with_store(std::vector<std::string> args, std::size_t expected) {
    if (args.size() + 1 == expected) {
        const char* env = std::getenv("CONVERG_STORE");
        if (!env || !*env) throw UsageError("no store directory given and CONVERG_STORE is not set");
        args.insert(args.begin(), env);
    }
    if (args.size() != expected)
        throw UsageError("expected " + std::to_string(expected) + " positional arguments, got " + std::to_string(args.size()));
    return args;
}

inline Store open_store(const fs::path& dir) {
    if (!snapshot_exists(dir)) throw UsageError("no store at " + dir.string() + " (run init first)");
    return load_snapshot(dir);
}

inline Term parse_vng_argument(const std::string& text) {
    std::string iri = text;
    if (iri.size() >= 2 && iri.front() == '<' && iri.back() == '>') iri = iri.substr(1, iri.size() - 2);
    if (!Term::valid_iri(iri)) throw UsageError("not an IRI: " + text);
    return Term::iri(iri);
}

inline void print_report(const IngestReport& r, std::ostream& out) {
    out << "version=" << r.ordinal.value << "\n";
    out << "quads=" << r.quad_count << "\n";
    out << "duplicates=" << r.duplicate_count << "\n";
    out << "new-entries=" << r.new_entry_count << "\n";
    for (const Term& v : r.minted_vngs) out << "vng=" << v.to_ntriples() << "\n";
}

inline void print_stats(const StoreStats& s, std::ostream& out) {
    out << "versions=" << s.version_count << "\n";
    out << "graphs=" << s.graph_count << "\n";
    out << "vngs=" << s.vng_count << "\n";
    out << "entries=" << s.entry_count << "\n";
    out << "flat-quads=" << s.flat_quad_count << "\n";
    out << "metadata-triples=" << s.metadata_triple_count << "\n";
}

// Runs one command line. Results go to `out`, diagnostics to `err`.
// Returns 0 on success, 1 on user error, 2 on corruption or I/O failure.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in = std::cin) {
    CLI::App app{"Versioned quad store with condensed version bitmaps", "converg"};
    app.require_subcommand(1);

    std::vector<std::string> init_args, load_args, query_args, diff_args, export_args, stats_args;
    std::string label, format = "tsv";
    GenConfig gen;
    std::string gen_out;

    auto* init = app.add_subcommand("init", "Create an empty store");
    init->add_option("dir", init_args, "Store directory");
    auto* load = app.add_subcommand("load", "Ingest one N-Quads file as the next version");
    load->add_option("args", load_args, "[dir] file.nq")->required();
    load->add_option("--label", label, "Opaque label recorded for the version");
    auto* query = app.add_subcommand("query", "Run a SPARQL query file ('-' for stdin)");
    query->add_option("args", query_args, "[dir] file.rq")->required();
    query->add_option("--format", format, "tsv or csv")->check(CLI::IsMember({"tsv", "csv"}));
    auto* diff = app.add_subcommand("diff", "Triples in vngA that are absent from vngB");
    diff->add_option("args", diff_args, "[dir] vngA vngB")->required();
    auto* exp = app.add_subcommand("export-flat", "Print the flat model as N-Quads");
    exp->add_option("dir", export_args, "Store directory");
    auto* stats = app.add_subcommand("stats", "Print store cardinalities");
    stats->add_option("dir", stats_args, "Store directory");
    auto* gencmd = app.add_subcommand("gen", "Write a synthetic multi-version dataset");
    gencmd->add_option("--out", gen_out, "Output directory")->required();
    gencmd->add_option("--products", gen.products)->required();
    gencmd->add_option("--graphs", gen.graphs)->required();
    gencmd->add_option("--versions", gen.versions)->required();
    gencmd->add_option("--change-rate", gen.change_rate)->required();
    gencmd->add_option("--seed", gen.seed)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "converg: " << e.what() << "\n";
        return 1;
    }

    std::string command = app.get_subcommands().front()->get_name();
    std::string context;
    try {
        if (command == "init") {
            auto args = with_store(init_args, 1);
            StoreLock lock(args[0], true);
            if (snapshot_exists(args[0])) throw UsageError("store already exists at " + args[0]);
            save_snapshot(Store{}, args[0]);
        } else if (command == "load") {
            auto args = with_store(load_args, 2);
            context = args[1];
            StoreLock lock(args[0], true);
            Store store = open_store(args[0]);
            ParsedDocument doc = parse_nquads(read_text(args[1], in), ParseMode::strict, GraphPolicy::named_only);
            IngestReport report = store.ingest_version(doc, label.empty() ? std::nullopt : std::optional(label));
            save_snapshot(store, args[0]);
            print_report(report, out);
        } else if (command == "query") {
            auto args = with_store(query_args, 2);
            context = args[1];
            std::string text = read_text(args[1], in);
            StoreLock lock(args[0], false);
            Store store = open_store(args[0]);
            ResultTable table = execute_query(store, text);
            for (const std::string& w : table.warnings) err << "converg query: warning: " << w << "\n";
            out << (format == "csv" ? table.to_csv() : table.to_tsv());
        } else if (command == "diff") {
            auto args = with_store(diff_args, 3);
            StoreLock lock(args[0], false);
            Store store = open_store(args[0]);
            for (const TripleTerms& t : store.diff_vng(parse_vng_argument(args[1]), parse_vng_argument(args[2])))
                out << t[0].to_ntriples() << ' ' << t[1].to_ntriples() << ' ' << t[2].to_ntriples() << " .\n";
        } else if (command == "export-flat") {
            auto args = with_store(export_args, 1);
            StoreLock lock(args[0], false);
            Store store = open_store(args[0]);
            auto quads = store.export_flat();
            out << serialize_nquads(quads);
        } else if (command == "stats") {
            auto args = with_store(stats_args, 1);
            StoreLock lock(args[0], false);
            print_stats(open_store(args[0]).stats(), out);
        } else if (command == "gen") {
            write_generated(gen, gen_out);
        }
    } catch (const Error& e) {
        err << "converg " << command << ": " << (context.empty() ? "" : context + ": ") << e.what() << "\n";
        return e.is_corruption() ? 2 : 1;
    } catch (const fs::filesystem_error& e) {
        err << "converg " << command << ": " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace converg::cli
