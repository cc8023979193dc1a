#include "speclab/cli_harness.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "speclab/errors.hpp"
#include "speclab/green_toolkit.hpp"
#include "speclab/point_process.hpp"
#include "speclab/spectral_engine.hpp"
#include "speclab/stats.hpp"

namespace speclab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::pair<Experiment, const char*> kNames[] = {
    {Experiment::spectrum, "spectrum"},
    {Experiment::ids, "ids"},
    {Experiment::poisson, "poisson"},
    {Experiment::superposition, "superposition"},
    {Experiment::wegner_minami, "wegner-minami"},
    {Experiment::green_expansion, "green-expansion"},
    {Experiment::frac_moment, "frac-moment"},
    {Experiment::appendix_phi, "appendix-phi"},
};

const std::set<std::string> kKnownKeys = {
    "experiment", "model",     "E",          "B",      "energies", "intervals",         "sites", "site",
    "pairs",      "Ls",        "n_samples",  "seed",   "epsilon",  "delta",             "use_blocks",
    "spacings",   "intensity_samples",       "z",      "s",        "K",                 "M",     "bin_width",
    "output_dir",
};

// Stream offset for the independent intensity estimate in the poisson experiment.
constexpr std::uint64_t kIntensitySeedOffset = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::string to_string(Experiment e)
{
    for (const auto& [k, name]: kNames) {
        if (k == e) return name;
    }
    return "unknown";
}

std::optional<Experiment> parse_experiment(std::string_view name)
{
    for (const auto& [k, n]: kNames) {
        if (name == n) return k;
    }
    return std::nullopt;
}

std::string format_real(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------- parsing

namespace {

class Reader {
public:
    Reader(const json& doc, std::vector<std::string>& errors): doc_(doc), errors_(errors) {}

    bool has(const char* key) const { return doc_.contains(key); }

    void fail(const std::string& msg) { errors_.push_back(msg); }

    std::optional<double> real(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        if (!v->is_number()) return mismatch(key, "a number"), std::nullopt;
        const double x = v->get<double>();
        if (!std::isfinite(x)) return fail(std::string(key) + ": must be finite"), std::nullopt;
        return x;
    }

    std::optional<long long> integer(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        if (!v->is_number_integer()) return mismatch(key, "an integer"), std::nullopt;
        return v->get<long long>();
    }

    std::optional<std::uint64_t> unsigned_integer(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer()) {
            fail(std::string(key) + ": must be non-negative");
            return std::nullopt;
        }
        return mismatch(key, "a non-negative integer"), std::nullopt;
    }

    std::optional<bool> boolean(const char* key)
    {
        const json* v = find(key, false);
        if (!v) return std::nullopt;
        if (!v->is_boolean()) return mismatch(key, "true or false"), std::nullopt;
        return v->get<bool>();
    }

    std::optional<std::string> string(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        if (!v->is_string()) return mismatch(key, "a string"), std::nullopt;
        return v->get<std::string>();
    }

    std::optional<std::complex<double>> complex(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        if (v->is_number()) return std::complex<double>(v->get<double>(), 0.0);
        if (!is_real_pair(*v)) return mismatch(key, "[re, im]"), std::nullopt;
        return std::complex<double>((*v)[0].get<double>(), (*v)[1].get<double>());
    }

    std::optional<std::vector<std::pair<double, double>>> real_pairs(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        // A single [a, b] is accepted as shorthand for [[a, b]].
        if (is_real_pair(*v)) return std::vector<std::pair<double, double>>{{(*v)[0], (*v)[1]}};
        if (!v->is_array() || v->empty()) return mismatch(key, "a non-empty list of [lo, hi]"), std::nullopt;
        std::vector<std::pair<double, double>> out;
        for (const auto& e: *v) {
            if (!is_real_pair(e)) return mismatch(key, "a non-empty list of [lo, hi]"), std::nullopt;
            out.emplace_back(e[0].get<double>(), e[1].get<double>());
        }
        return out;
    }

    std::optional<std::vector<double>> reals(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        if (!v->is_array() || v->empty()) return mismatch(key, "a non-empty list of numbers"), std::nullopt;
        std::vector<double> out;
        for (const auto& e: *v) {
            if (!e.is_number()) return mismatch(key, "a non-empty list of numbers"), std::nullopt;
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::optional<std::vector<int>> ints(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        auto c = as_coord(*v);
        if (!c || c->empty()) return mismatch(key, "a non-empty list of integers"), std::nullopt;
        return c;
    }

    std::optional<Coord> coord(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        auto c = as_coord(*v);
        if (!c) return mismatch(key, "a list of integers"), std::nullopt;
        return c;
    }

    std::optional<std::vector<Coord>> coords(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        if (!v->is_array() || v->empty()) return mismatch(key, "a non-empty list of sites"), std::nullopt;
        std::vector<Coord> out;
        for (const auto& e: *v) {
            auto c = as_coord(e);
            if (!c) return mismatch(key, "a non-empty list of sites"), std::nullopt;
            out.push_back(*c);
        }
        return out;
    }

    std::optional<std::vector<std::pair<Coord, Coord>>> coord_pairs(const char* key, bool required)
    {
        const json* v = find(key, required);
        if (!v) return std::nullopt;
        const char* want = "a non-empty list of [site, site]";
        if (!v->is_array() || v->empty()) return mismatch(key, want), std::nullopt;
        std::vector<std::pair<Coord, Coord>> out;
        for (const auto& e: *v) {
            if (!e.is_array() || e.size() != 2) return mismatch(key, want), std::nullopt;
            auto a = as_coord(e[0]);
            auto b = as_coord(e[1]);
            if (!a || !b) return mismatch(key, want), std::nullopt;
            out.emplace_back(*a, *b);
        }
        return out;
    }

private:
    const json* find(const char* key, bool required)
    {
        auto it = doc_.find(key);
        if (it == doc_.end()) {
            if (required) fail(std::string("missing required key \"") + key + "\"");
            return nullptr;
        }
        return &*it;
    }

    void mismatch(const char* key, const char* want) { fail(std::string(key) + ": expected " + want); }

    static bool is_real_pair(const json& v)
    {
        return v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number();
    }

    static std::optional<Coord> as_coord(const json& v)
    {
        if (!v.is_array()) return std::nullopt;
        Coord c;
        for (const auto& e: v) {
            if (!e.is_number_integer()) return std::nullopt;
            c.push_back(e.get<int>());
        }
        return c;
    }

    const json& doc_;
    std::vector<std::string>& errors_;
};

json parse_strict(std::string_view text, std::vector<std::string>& errors)
{
    std::vector<std::set<std::string>> seen;
    auto cb = [&](int depth, json::parse_event_t event, json& parsed) {
        switch (event) {
        case json::parse_event_t::object_start: seen.emplace_back(); break;
        case json::parse_event_t::object_end: seen.pop_back(); break;
        case json::parse_event_t::key: {
            const auto key = parsed.get<std::string>();
            if (!seen.back().insert(key).second) {
                errors.push_back("duplicate key \"" + key + "\" (nesting depth " + std::to_string(depth) + ")");
            }
            break;
        }
        default: break;
        }
        return true;
    };
    try {
        return json::parse(text.begin(), text.end(), cb);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
}

bool needs_point_scaling(Experiment e)
{
    return e == Experiment::ids || e == Experiment::poisson || e == Experiment::superposition ||
           e == Experiment::appendix_phi;
}

void check_site(const Coord& c, int d, const std::string& what, std::vector<std::string>& errors)
{
    if (static_cast<int>(c.size()) != d) {
        errors.push_back(what + ": expected " + std::to_string(d) + " coordinates");
    }
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::optional<Experiment> expected)
{
    std::vector<std::string> errors;
    const json doc = parse_strict(text, errors);
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    ExperimentConfig cfg;
    cfg.source = doc;
    Reader r(doc, errors);

    for (const auto& [key, value]: doc.items()) {
        if (!kKnownKeys.count(key)) errors.push_back("unknown key \"" + key + "\"");
    }

    if (auto name = r.string("experiment", !expected)) {
        if (auto e = parse_experiment(*name)) {
            cfg.experiment = *e;
            if (expected && *expected != *e) {
                errors.push_back("experiment \"" + *name + "\" does not match the command \"" + to_string(*expected) +
                                 "\"");
            }
        } else {
            errors.push_back("experiment: unknown name \"" + *name + "\"");
        }
    } else if (expected) {
        cfg.experiment = *expected;
    }
    const Experiment ex = cfg.experiment;

    // model
    bool model_ok = false;
    if (!doc.contains("model")) {
        errors.push_back("missing required key \"model\"");
    } else if (!doc["model"].is_object()) {
        errors.push_back("model: expected an object with d, alpha, L");
    } else {
        const json& m = doc["model"];
        for (const auto& [key, value]: m.items()) {
            if (key != "d" && key != "alpha" && key != "L") errors.push_back("unknown key \"model." + key + "\"");
        }
        std::vector<std::string> merr;
        Reader mr(m, merr);
        const auto d = mr.integer("d", true);
        const auto alpha = mr.real("alpha", true);
        const auto L = mr.integer("L", ex != Experiment::appendix_phi);
        for (auto& e: merr) errors.push_back("model." + e);
        if (d && *d < 1) errors.push_back("model.d must be >= 1");
        if (alpha && !(*alpha > 1.0)) {
            errors.push_back("model.alpha must be > 1 (the growing potential 1 + |n|^alpha needs alpha > 1)");
        }
        if (L && *L < 1) errors.push_back("model.L must be >= 1");
        if (d && alpha && needs_point_scaling(ex) && !(*d - *alpha > 0.0)) {
            errors.push_back("d - alpha must be > 0 for " + to_string(ex) + " (the rescaling uses L^(d-alpha))");
        }
        if (d && alpha) {
            cfg.model.d = static_cast<int>(*d);
            cfg.model.alpha = *alpha;
            cfg.model.L = L ? static_cast<int>(*L) : 1;
            model_ok = *d >= 1 && (!L || *L >= 1);
        }
    }
    const int d = cfg.model.d;

    const bool mc = ex != Experiment::appendix_phi && ex != Experiment::green_expansion;
    if (auto n = r.unsigned_integer("n_samples", mc && ex != Experiment::spectrum)) {
        cfg.n_samples = static_cast<std::size_t>(*n);
    } else if (ex == Experiment::spectrum) {
        cfg.n_samples = 1;
    }
    if (mc && doc.contains("n_samples") && cfg.n_samples == 0) errors.push_back("n_samples must be > 0");
    if (auto s = r.unsigned_integer("seed", mc || cfg.n_samples > 0)) cfg.seed = *s;

    if (auto v = r.real("E", ex == Experiment::poisson || ex == Experiment::superposition)) cfg.E = v;
    if (auto v = r.real_pairs("B", ex == Experiment::poisson)) {
        cfg.B = *v;
        try {
            BorelSet check(cfg.B);
        } catch (const ConfigError& e) {
            errors.push_back(std::string("B: ") + e.what());
        }
    }
    if (auto v = r.reals("energies", ex == Experiment::ids)) {
        cfg.energies = *v;
        if (!std::is_sorted(cfg.energies.begin(), cfg.energies.end())) errors.push_back("energies must be ascending");
    }
    if (auto v = r.real_pairs("intervals", ex == Experiment::wegner_minami)) {
        cfg.intervals = *v;
        for (const auto& [lo, hi]: cfg.intervals) {
            if (!(lo < hi)) errors.push_back("intervals: each needs lo < hi");
        }
    }
    if (auto v = r.coords("sites", false)) {
        cfg.sites = *v;
        if (model_ok) {
            for (const auto& c: cfg.sites) check_site(c, d, "sites", errors);
        }
    }
    if (auto v = r.coord("site", ex == Experiment::green_expansion)) {
        cfg.site = *v;
        if (model_ok) check_site(cfg.site, d, "site", errors);
    }
    if (auto v = r.coord_pairs("pairs", ex == Experiment::frac_moment)) {
        cfg.pairs = *v;
        if (model_ok) {
            for (const auto& [a, b]: cfg.pairs) {
                check_site(a, d, "pairs", errors);
                check_site(b, d, "pairs", errors);
            }
        }
    }
    if (auto v = r.ints("Ls", ex == Experiment::appendix_phi)) {
        cfg.Ls = *v;
        for (int L: cfg.Ls) {
            if (L < 1) errors.push_back("Ls: every L must be >= 1");
        }
        if (!std::is_sorted(cfg.Ls.begin(), cfg.Ls.end())) errors.push_back("Ls must be increasing");
    }
    if (auto v = r.real("epsilon", false)) cfg.epsilon = *v;
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) errors.push_back("epsilon must lie in (0, 1)");
    if (auto v = r.real("delta", false)) cfg.delta = *v;
    if (!(cfg.delta > 0.0)) errors.push_back("delta must be > 0");
    if (auto v = r.boolean("use_blocks")) cfg.use_blocks = *v;
    if (auto v = r.boolean("spacings")) cfg.spacings = *v;
    if (auto v = r.unsigned_integer("intensity_samples", false)) cfg.intensity_samples = static_cast<std::size_t>(*v);

    const bool needs_z = ex == Experiment::green_expansion || ex == Experiment::frac_moment ||
                         ex == Experiment::appendix_phi;
    if (auto v = r.complex("z", needs_z)) cfg.z = *v;
    if (ex == Experiment::superposition && !(cfg.z.imag() > 0.0)) errors.push_back("z: superposition needs Im z > 0");
    if (ex == Experiment::frac_moment && cfg.z.imag() == 0.0) errors.push_back("z: frac-moment needs Im z != 0");
    if (auto v = r.real("s", false)) cfg.s = *v;
    if (ex == Experiment::frac_moment && !(cfg.s > 0.0 && cfg.s < 1.0)) errors.push_back("s must lie in (0, 1)");
    if (auto v = r.integer("K", ex == Experiment::green_expansion)) {
        if (*v < 0) errors.push_back("K must be >= 0");
        cfg.K = static_cast<int>(*v);
    }
    if (auto v = r.real("M", false)) {
        cfg.M = v;
        if (!(*v > 2.0 * d)) errors.push_back("M must exceed 2d");
    }
    if (auto v = r.real("bin_width", false)) {
        if (*v < 0.0) errors.push_back("bin_width must be >= 0");
        cfg.bin_width = *v;
    }
    if (auto v = r.string("output_dir", false)) cfg.output_dir = *v;

    if (ex == Experiment::poisson && doc.contains("n_samples") && cfg.n_samples > 0 && cfg.n_samples < kMinGofSamples) {
        errors.push_back("n_samples must be >= " + std::to_string(kMinGofSamples) + " for the goodness-of-fit test");
    }

    if (!errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem" +
                          (errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e: errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

std::optional<std::uint64_t> seed_from_env()
{
    const char* v = std::getenv("SPECLAB_SEED");
    if (!v) return std::nullopt;
    const std::string s(v);
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw ConfigError("SPECLAB_SEED must be an unsigned integer, got \"" + s + "\"");
    }
    try {
        return std::stoull(s);
    } catch (const std::out_of_range&) {
        throw ConfigError("SPECLAB_SEED out of range: " + s);
    }
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
    return kExitInvariant;
}

// ---------------------------------------------------------------- artifacts

std::string fnv1a64_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

namespace {

void commit_file(const fs::path& partial, const fs::path& final_path)
{
    std::error_code ec;
    fs::rename(partial, final_path, ec);
    if (ec) {
        fs::remove(partial, ec);
        throw IoError("cannot move " + partial.string() + " into place: " + ec.message());
    }
}

void write_atomically(const fs::path& path, const std::string& content)
{
    const fs::path partial = path.string() + ".partial";
    {
        std::ofstream out(partial, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + partial.string());
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for " + partial.string());
    }
    commit_file(partial, path);
}

struct Cell {
    std::string text;
    Cell(double x): text(format_real(x)) {}
    Cell(int x): text(std::to_string(x)) {}
    Cell(long x): text(std::to_string(x)) {}
    Cell(unsigned long x): text(std::to_string(x)) {}
    Cell(unsigned long long x): text(std::to_string(x)) {}
    Cell(std::string s): text(std::move(s)) {}
    Cell(const char* s): text(s) {}
};

// Rows go to <name>.partial; commit() renames. An uncommitted file is removed.
class CsvFile {
public:
    CsvFile(fs::path path, const std::vector<std::string>& header): path_(std::move(path)), partial_(path_.string() + ".partial")
    {
        out_.open(partial_, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError("cannot write " + partial_.string());
        std::vector<Cell> cells(header.begin(), header.end());
        row(cells);
    }
    CsvFile(const CsvFile&) = delete;
    CsvFile& operator=(const CsvFile&) = delete;
    ~CsvFile()
    {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            fs::remove(partial_, ec);
        }
    }

    void row(const std::vector<Cell>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i].text;
        }
        out_ << '\n';
    }

    fs::path commit()
    {
        out_.flush();
        if (!out_) throw IoError("write failed for " + partial_.string());
        out_.close();
        commit_file(partial_, path_);
        committed_ = true;
        return path_;
    }

private:
    fs::path path_, partial_;
    std::ofstream out_;
    bool committed_ = false;
};

std::string coord_string(const Coord& c)
{
    std::string s;
    for (std::size_t i = 0; i < c.size(); ++i) s += (i ? " " : "") + std::to_string(c[i]);
    return s;
}

json complex_json(std::complex<double> z) { return json::array({z.real(), z.imag()}); }

json params_json(const ModelParams& p) { return {{"d", p.d}, {"alpha", p.alpha}, {"L", p.L}}; }

json gof_json(const GofReport& g)
{
    json bins = json::array();
    for (const auto& b: g.bins) {
        bins.push_back({{"k_lo", b.k_lo}, {"k_hi", b.k_hi}, {"observed", b.observed}, {"expected", b.expected}});
    }
    return {{"lambda", g.lambda},       {"chi_square", g.chi_square}, {"dof", g.dof},
            {"p_value", g.p_value},     {"tv_distance", g.tv_distance}, {"n_samples", g.n_samples},
            {"bins", bins}};
}

json bound_json(const BoundCheckReport& b)
{
    return {{"kind", to_string(b.kind)}, {"empirical", b.empirical}, {"stderr", b.se},
            {"bound", b.bound},          {"satisfied", b.satisfied}, {"n_samples", b.n_samples}};
}

// Verdict threshold for the goodness-of-fit rows in manifests.
constexpr double kGofLevel = 0.01;

class Run {
public:
    Run(const ExperimentConfig& cfg, fs::path dir): cfg_(cfg), dir_(std::move(dir)) {}

    std::vector<fs::path> artifacts;
    std::vector<Check> checks;
    json summary = json::object();

    void execute(std::uint64_t seed)
    {
        seed_ = seed;
        switch (cfg_.experiment) {
        case Experiment::spectrum: spectrum(); break;
        case Experiment::ids: ids(); break;
        case Experiment::poisson: poisson(); break;
        case Experiment::superposition: superposition(); break;
        case Experiment::wegner_minami: wegner_minami(); break;
        case Experiment::green_expansion: green_expansion(); break;
        case Experiment::frac_moment: frac_moment_run(); break;
        case Experiment::appendix_phi: appendix(); break;
        }
    }

private:
    fs::path file(const std::string& name) const { return dir_ / name; }

    void json_artifact(const std::string& name, const json& j)
    {
        write_atomically(file(name), j.dump(2) + "\n");
        artifacts.push_back(file(name));
    }

    void commit(CsvFile& csv) { artifacts.push_back(csv.commit()); }

    json header() const
    {
        return {{"experiment", to_string(cfg_.experiment)}, {"params", params_json(cfg_.model)}, {"seed", seed_}};
    }

    void spectrum()
    {
        const LatticeBox box(cfg_.model);
        std::vector<Spectrum> specs(cfg_.n_samples);
        std::vector<SandwichCounts> sw(cfg_.n_samples);
        parallel_for(cfg_.n_samples, [&](std::size_t s) {
            const auto sample = sample_disorder(box, seed_, s);
            specs[s] = eigenvalues(assemble_hamiltonian(box, cfg_.model.alpha, sample));
            if (cfg_.E) sw[s] = sandwich_counts(box, cfg_.model.alpha, sample, *cfg_.E);
        });
        CsvFile csv(file("spectrum.csv"), {"sample", "index", "eigenvalue"});
        for (std::size_t s = 0; s < specs.size(); ++s) {
            for (std::size_t i = 0; i < specs[s].eigenvalues.size(); ++i) {
                csv.row({s, i, specs[s].eigenvalues[i]});
            }
        }
        commit(csv);
        json j = header();
        j["n_samples"] = cfg_.n_samples;
        j["size"] = box.size();
        if (cfg_.E) {
            CsvFile sc(file("sandwich.csv"), {"sample", "E", "lower", "count", "upper"});
            for (std::size_t s = 0; s < sw.size(); ++s) sc.row({s, *cfg_.E, sw[s].lower, sw[s].count, sw[s].upper});
            commit(sc);
            j["E"] = *cfg_.E;
        }
        json_artifact("spectrum.json", j);
        // Trace and sandwich violations throw, so reaching here means both held.
        checks.push_back({"trace_identity", true, std::to_string(cfg_.n_samples) + " diagonalizations"});
        if (cfg_.E) checks.push_back({"sandwich", true, "N_lower <= N <= N_upper in every sample"});
    }

    void ids()
    {
        const auto est = empirical_ids(cfg_.model, cfg_.energies, cfg_.n_samples, seed_, cfg_.bin_width);
        const LatticeBox box(cfg_.model);
        const double cw = M_PI * weight_sum(box, cfg_.model.alpha) / cfg_.model.scale();
        CsvFile csv(file("ids.csv"), {"E", "nu_L_mean", "nu_L_stderr", "f_L", "n_samples"});
        json bounds = json::array();
        bool all_ok = true;
        for (std::size_t i = 0; i < est.energies.size(); ++i) {
            csv.row({est.energies[i], est.nu_L[i], est.nu_se[i], est.f_L[i], est.n_samples});
            const bool ok = est.f_L[i] <= cw + kBoundSigmas * est.f_se[i];
            all_ok = all_ok && ok;
            bounds.push_back({{"E", est.energies[i]}, {"f_L", est.f_L[i]}, {"f_stderr", est.f_se[i]},
                              {"bound", cw}, {"satisfied", ok}});
        }
        commit(csv);
        json j = header();
        j["n_samples"] = est.n_samples;
        j["bin_width"] = est.bin_width;
        j["density_bound"] = cw;
        j["bound_checks"] = bounds;
        json_artifact("ids.json", j);
        checks.push_back({"density_bound", all_ok, "f_L <= pi * sum 1/b_n / L^(d-alpha) + 3 se on the grid"});
    }

    void poisson()
    {
        const BorelSet B(cfg_.B);
        const double E = *cfg_.E;
        const auto dist = counting_distribution(cfg_.model, E, B, cfg_.n_samples, seed_, cfg_.use_blocks,
                                                {cfg_.epsilon, cfg_.delta});
        if (!(dist.mean > 0.0)) {
            throw NumericalError("no eigenvalues fell in the window in any sample; enlarge B or L");
        }
        const auto gof = poisson_gof(dist, dist.mean, 1);

        const double n = static_cast<double>(dist.n_samples);
        const int kmax = std::max(static_cast<int>(dist.pmf.size()) - 1,
                                  static_cast<int>(std::ceil(dist.mean + 6.0 * std::sqrt(dist.mean) + 6.0)));
        CsvFile csv(file("poisson_counts.csv"), {"k", "empirical_pmf", "poisson_pmf", "stderr"});
        for (int k = 0; k <= kmax; ++k) {
            const double p = k < static_cast<int>(dist.pmf.size()) ? dist.pmf[k] : 0.0;
            csv.row({k, p, poisson_pmf(k, dist.mean), std::sqrt(p * (1.0 - p) / n)});
        }
        commit(csv);

        json j = header();
        j["E"] = E;
        j["B"] = cfg_.B;
        j["n_samples"] = dist.n_samples;
        j["use_blocks"] = cfg_.use_blocks;
        if (cfg_.use_blocks) j["blocks"] = {{"epsilon", cfg_.epsilon}, {"delta", cfg_.delta}};
        j["mean_count"] = dist.mean;
        j["mean_count_stderr"] = dist.mean_se;
        j["second_factorial"] = dist.second_factorial;
        j["second_factorial_stderr"] = dist.second_factorial_se;
        j["plug_in"] = gof_json(gof);

        summary["tv_distance"] = gof.tv_distance;
        summary["p_value"] = gof.p_value;
        summary["lambda"] = gof.lambda;
        std::ostringstream detail;
        detail << "plug-in lambda " << format_real(gof.lambda) << ", TV " << format_real(gof.tv_distance) << ", p "
               << format_real(gof.p_value);
        checks.push_back({"poisson_gof", gof.p_value >= kGofLevel, detail.str()});

        if (cfg_.intensity_samples > 0) {
            const auto dens =
                estimate_N1_prime(cfg_.model, E, cfg_.intensity_samples, seed_ + kIntensitySeedOffset);
            const double lam = dens.value * B.length();
            const double lam_se = dens.se * B.length();
            json ext = {{"n1_prime", dens.value},       {"n1_prime_stderr", dens.se},
                        {"half_width", dens.half_width}, {"lambda", lam},
                        {"lambda_stderr", lam_se},       {"n_samples", cfg_.intensity_samples}};
            if (lam > 0.0) ext["gof"] = gof_json(poisson_gof(dist, lam, 0));
            j["external"] = ext;
            const double sigma = combined_stderr(dist.mean_se, lam_se);
            const bool ok = std::abs(dist.mean - lam) <= kBoundSigmas * sigma;
            checks.push_back({"intensity_match", ok,
                              "mean " + format_real(dist.mean) + " vs N1' |B| " + format_real(lam) + " (3 sigma " +
                                  format_real(kBoundSigmas * sigma) + ")"});
        }

        if (cfg_.spacings) {
            const LatticeBox box(cfg_.model);
            std::vector<PointConfiguration> configs(cfg_.n_samples);
            parallel_for(cfg_.n_samples, [&](std::size_t s) {
                const auto h = assemble_hamiltonian(box, cfg_.model.alpha, sample_disorder(box, seed_, s));
                configs[s] = rescale(eigenvalues(h), E);
            });
            const auto gaps = gap_statistics(configs, B);
            CsvFile sp(file("poisson_spacings.csv"), {"s", "empirical_cdf", "exp_cdf"});
            const double m = static_cast<double>(gaps.spacings.size());
            for (std::size_t i = 0; i < gaps.spacings.size(); ++i) {
                const double x = gaps.spacings[i];
                sp.row({x, (i + 1) / m, 1.0 - std::exp(-gaps.lambda * x)});
            }
            commit(sp);
            j["spacings"] = {{"count", gaps.spacings.size()}, {"lambda", gaps.lambda}, {"ks_distance", gaps.ks_distance}};
        }
        json_artifact("poisson_gof.json", j);
    }

    void superposition()
    {
        const auto est =
            superposition_distance(cfg_.model, *cfg_.E, cfg_.n_samples, seed_, cfg_.z, {cfg_.epsilon, cfg_.delta});
        const auto dec = block_decompose(LatticeBox(cfg_.model), cfg_.epsilon, cfg_.delta);
        CsvFile csv(file("superposition.csv"), {"L", "E", "distance", "stderr", "blocks", "n_samples"});
        csv.row({cfg_.model.L, *cfg_.E, est.mean, est.se, dec.blocks.size(), est.n});
        commit(csv);
        json j = header();
        j["E"] = *cfg_.E;
        j["z"] = complex_json(cfg_.z);
        j["epsilon"] = cfg_.epsilon;
        j["delta"] = cfg_.delta;
        j["blocks_per_axis"] = dec.per_axis;
        j["distance"] = est.mean;
        j["stderr"] = est.se;
        j["n_samples"] = est.n;
        json_artifact("superposition.json", j);
        summary["distance"] = est.mean;
        checks.push_back({"distance_nonnegative", est.mean >= 0.0, "mean distance " + format_real(est.mean)});
    }

    void wegner_minami()
    {
        CsvFile csv(file("wegner_minami.csv"), {"lo", "hi", "first_moment", "first_stderr", "wegner_bound",
                                                "second_factorial", "second_stderr", "minami_bound"});
        json rows = json::array();
        bool ok = true;
        for (const auto& [lo, hi]: cfg_.intervals) {
            const auto [w, m] = check_wegner_minami(cfg_.model, {lo, hi}, cfg_.n_samples, seed_);
            csv.row({lo, hi, w.empirical, w.se, w.bound, m.empirical, m.se, m.bound});
            rows.push_back({{"interval", {lo, hi}}, {"wegner", bound_json(w)}, {"minami", bound_json(m)}});
            ok = ok && w.satisfied && m.satisfied;
        }
        commit(csv);
        json j = header();
        j["n_samples"] = cfg_.n_samples;
        j["intervals"] = rows;
        checks.push_back({"wegner_minami", ok, std::to_string(cfg_.intervals.size()) + " intervals within 3 sigma"});

        if (!cfg_.sites.empty()) {
            std::vector<std::string> head{"lo", "hi"};
            for (int a = 0; a < cfg_.model.d; ++a) head.push_back("n" + std::to_string(a + 1));
            for (const char* c: {"empirical", "stderr", "bound"}) head.emplace_back(c);
            CsvFile sa(file("spectral_averaging.csv"), head);
            json sj = json::array();
            bool sok = true;
            for (const auto& [lo, hi]: cfg_.intervals) {
                const auto reps = check_spectral_averaging(cfg_.model, cfg_.sites, {lo, hi}, cfg_.n_samples, seed_);
                for (std::size_t i = 0; i < reps.size(); ++i) {
                    std::vector<Cell> row{lo, hi};
                    for (int c: cfg_.sites[i]) row.emplace_back(c);
                    row.insert(row.end(), {reps[i].empirical, reps[i].se, reps[i].bound});
                    sa.row(row);
                    json r = bound_json(reps[i]);
                    r["interval"] = {lo, hi};
                    r["site"] = cfg_.sites[i];
                    sj.push_back(r);
                    sok = sok && reps[i].satisfied;
                }
            }
            commit(sa);
            j["spectral_averaging"] = sj;
            checks.push_back({"spectral_averaging", sok, "E <delta_n, E_H(I) delta_n> <= pi |I| / b_n + 3 se"});
        }
        json_artifact("wegner_minami.json", j);
    }

    void green_expansion()
    {
        const LatticeBox box(cfg_.model);
        if (!box.index_of(cfg_.site)) throw ConfigError("site " + coord_string(cfg_.site) + " lies outside the box");
        CsvFile csv(file("walk_expansion.csv"), {"K", "value_re", "value_im", "tail_bound", "paths"});
        WalkExpansionResult last;
        for (int k = 0; k <= cfg_.K; ++k) {
            last = walk_expansion_diag(box, cfg_.model.alpha, cfg_.z, cfg_.site, k, cfg_.M);
            csv.row({k, last.value.real(), last.value.imag(), last.tail_bound, last.paths_enumerated});
        }
        commit(csv);
        json j = header();
        j["z"] = complex_json(cfg_.z);
        j["site"] = cfg_.site;
        j["result"] = {{"value", complex_json(last.value)},
                       {"K", last.K},
                       {"tail_bound", std::isfinite(last.tail_bound) ? json(last.tail_bound) : json("inf")},
                       {"paths_enumerated", last.paths_enumerated},
                       {"regime", last.regime}};
        summary["tail_bound"] = std::isfinite(last.tail_bound) ? json(last.tail_bound) : json("inf");

        if (cfg_.n_samples > 0) {
            std::vector<double> re(cfg_.n_samples), im(cfg_.n_samples);
            const std::size_t idx = *box.index_of(cfg_.site);
            parallel_for(cfg_.n_samples, [&](std::size_t s) {
                const auto h = assemble_hamiltonian(box, cfg_.model.alpha, sample_disorder(box, seed_, s));
                const auto g = resolvent_entry(h, cfg_.z, idx, idx);
                re[s] = g.real();
                im[s] = g.imag();
            });
            const auto er = mean_stderr(re), ei = mean_stderr(im);
            const double diff = std::abs(std::complex<double>(er.mean, ei.mean) - last.value);
            const double tol = last.tail_bound + kBoundSigmas * std::hypot(er.se, ei.se);
            j["monte_carlo"] = {{"mean", {er.mean, ei.mean}},
                                {"stderr", {er.se, ei.se}},
                                {"n_samples", cfg_.n_samples},
                                {"difference", diff}};
            summary["difference"] = diff;
            checks.push_back({"series_vs_monte_carlo", diff <= tol,
                              "|series - MC| = " + format_real(diff) + ", allowed " + format_real(tol)});
        }
        json_artifact("walk_expansion.json", j);
    }

    void frac_moment_run()
    {
        const auto rep = frac_moment(cfg_.model, cfg_.z, cfg_.s, cfg_.pairs, cfg_.n_samples, seed_);
        CsvFile csv(file("frac_moment.csv"), {"distance", "moment", "stderr"});
        json pairs = json::array();
        for (const auto& p: rep.pairs) {
            csv.row({p.distance, p.moment, p.se});
            pairs.push_back({{"n", p.n},
                             {"m", p.m},
                             {"distance", p.distance},
                             {"moment", p.moment},
                             {"stderr", p.se},
                             {"diagonal_bound", p.diagonal_bound},
                             {"below_decay_threshold", p.below_decay_threshold}});
        }
        commit(csv);
        json j = header();
        j["z"] = complex_json(cfg_.z);
        j["n_samples"] = cfg_.n_samples;
        j["report"] = {{"s", rep.s},
                       {"pairs", pairs},
                       {"beta_hat", rep.beta_hat},
                       {"beta_stderr", rep.beta_se},
                       {"log_prefactor", rep.log_prefactor},
                       {"decay_threshold", rep.decay_threshold},
                       {"uniform_bound_ok", rep.uniform_bound_ok}};
        json_artifact("frac_moment.json", j);
        summary["beta_hat"] = rep.beta_hat;
        checks.push_back({"diagonal_bound", rep.uniform_bound_ok, "E|G(z;n,n)|^s <= (3-s)/(1-s) b_n^-s + 3 se"});
    }

    void appendix()
    {
        const auto rep = appendix_limit_check(cfg_.model.d, cfg_.model.alpha, cfg_.Ls, cfg_.z);
        CsvFile csv(file("appendix_phi.csv"), {"L", "Im_phi", "target", "error"});
        json rows = json::array();
        for (const auto& r: rep.rows) {
            csv.row({r.L, r.im_phi, r.target, r.error});
            rows.push_back({{"L", r.L}, {"Im_phi", r.im_phi}, {"target", r.target}, {"error", r.error}});
        }
        commit(csv);
        json j = {{"experiment", to_string(cfg_.experiment)},
                  {"params", {{"d", cfg_.model.d}, {"alpha", cfg_.model.alpha}}},
                  {"z", complex_json(cfg_.z)},
                  {"z_d", complex_json(rep.z_d)},
                  {"C", rep.C},
                  {"im_log_minus_zd", rep.im_log_minus_zd},
                  {"branch", rep.branch},
                  {"rows", rows},
                  {"slope", rep.slope},
                  {"slope_target", rep.slope_target},
                  {"decreasing", rep.decreasing},
                  {"slope_ok", rep.slope_ok}};
        json_artifact("appendix_phi.json", j);
        summary["slope"] = rep.slope;
        checks.push_back({"error_decreasing", rep.decreasing, "error shrinks along Ls"});
        checks.push_back({"slope", rep.slope_ok,
                          "slope " + format_real(rep.slope) + " vs target " + format_real(rep.slope_target)});
    }

    const ExperimentConfig& cfg_;
    fs::path dir_;
    std::uint64_t seed_ = 0;
};

std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json versions()
{
    return {{"speclab", SPECLAB_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}};
}

}  // namespace

bool RunManifest::passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

RunManifest run(const ExperimentConfig& config, const RunOptions& options)
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = options.output_dir.value_or(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot use output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
    }
    const unsigned previous_workers = worker_count();
    if (options.workers) set_worker_count(*options.workers);
    struct Restore {
        unsigned w;
        ~Restore() { set_worker_count(w); }
    } restore{previous_workers};

    const std::uint64_t seed = options.seed.value_or(config.seed);
    Run r(config, dir);
    r.execute(seed);

    RunManifest m;
    m.path = dir / "manifest.json";
    m.checks = r.checks;
    json artifacts = json::array();
    for (const auto& p: r.artifacts) {
        artifacts.push_back({{"file", p.filename().string()}, {"fnv1a64", fnv1a64_file(p)}, {"bytes", fs::file_size(p)}});
    }
    json checks = json::array();
    for (const auto& c: m.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    m.data = {{"experiment", to_string(config.experiment)},
              {"status", m.passed() ? "pass" : "fail"},
              {"config", config.source},
              {"seed", seed},
              {"seed_override", options.seed ? json{{"source", "SPECLAB_SEED"}, {"value", *options.seed},
                                                    {"config_seed", config.seed}}
                                             : json(nullptr)},
              {"workers", worker_count()},
              {"artifacts", artifacts},
              {"checks", checks},
              {"summary", r.summary},
              {"wall_clock_seconds",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
              {"finished_at", utc_now()},
              {"versions", versions()}};
    write_atomically(m.path, m.data.dump(2) + "\n");
    return m;
}

// ---------------------------------------------------------------- report

ReportResult report(std::span<const fs::path> manifest_paths)
{
    ReportResult res;
    std::ostringstream os;
    os << std::left << std::setw(40) << "manifest" << ' ' << std::setw(16) << "experiment" << ' ' << std::setw(7)
       << "checks" << ' ' << std::setw(7) << "verdict" << " summary\n";
    for (const auto& p: manifest_paths) {
        std::string experiment = "?", checks = "-", verdict = "FAIL", summary;
        try {
            std::ifstream in(p);
            if (!in) throw IoError("unreadable");
            const json m = json::parse(in);
            experiment = m.at("experiment").get<std::string>();
            int passed = 0, total = 0;
            std::vector<std::string> failed;
            for (const auto& c: m.at("checks")) {
                ++total;
                if (c.at("passed").get<bool>()) {
                    ++passed;
                } else {
                    failed.push_back(c.at("name").get<std::string>());
                }
            }
            checks = std::to_string(passed) + "/" + std::to_string(total);
            verdict = passed == total ? "PASS" : "FAIL";
            const json summary_obj = m.value("summary", json::object());
            for (const auto& [k, v]: summary_obj.items()) {
                summary += k + "=" + (v.is_number() ? format_real(v.get<double>()) : v.dump()) + " ";
            }
            for (const auto& f: failed) summary += "failed:" + f + " ";
        } catch (const std::exception& e) {
            summary = std::string("unreadable manifest: ") + e.what();
            verdict = "FAIL";
        }
        if (verdict != "PASS") res.exit_code = kExitReportFailed;
        while (!summary.empty() && summary.back() == ' ') summary.pop_back();
        os << std::left << std::setw(40) << p.string() << ' ' << std::setw(16) << experiment << ' ' << std::setw(7)
           << checks << ' ' << std::setw(7) << verdict << ' ' << summary << '\n';
    }
    res.table = os.str();
    return res;
}

}  // namespace speclab
