#pragma once

// Experiment runner: JSON configs, one experiment per invocation, CSV/JSON
// artifacts plus a manifest.json per run, and a summary over manifests.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "speclab/lattice_model.hpp"

namespace speclab {

enum class Experiment { spectrum, ids, poisson, superposition, wegner_minami, green_expansion, frac_moment, appendix_phi };

std::string to_string(Experiment e);
std::optional<Experiment> parse_experiment(std::string_view name);

// Exit codes of the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInvariant = 3;
inline constexpr int kExitIo = 4;
// report(): at least one row failed.
inline constexpr int kExitReportFailed = 1;

struct ExperimentConfig {
    Experiment experiment = Experiment::spectrum;
    ModelParams model;
    std::optional<double> E;
    std::vector<std::pair<double, double>> B;          // rescaled window, [a, b) pieces
    std::vector<double> energies;                      // ids grid
    std::vector<std::pair<double, double>> intervals;  // wegner-minami
    std::vector<Coord> sites;                          // wegner-minami: spectral averaging sites
    Coord site;                                        // green-expansion
    std::vector<std::pair<Coord, Coord>> pairs;        // frac-moment
    std::vector<int> Ls;                               // appendix-phi
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    double epsilon = 0.4;
    double delta = 8.0;
    bool use_blocks = false;
    bool spacings = false;                             // poisson: also emit the spacing CSV
    std::size_t intensity_samples = 0;                 // poisson: external N1' estimate when > 0
    std::complex<double> z{0.0, 1.0};
    double s = 0.5;
    int K = 0;
    std::optional<double> M;
    double bin_width = 0.0;                            // 0 = default rule
    std::string output_dir = "out";

    nlohmann::json source;                             // the parsed document, echoed in the manifest
};

// Parses and validates a JSON config. Every problem found is collected and
// reported together in one ConfigError. When `expected` is given the
// "experiment" key may be omitted, and must agree if present.
ExperimentConfig parse_config(std::string_view text, std::optional<Experiment> expected = std::nullopt);

struct RunOptions {
    std::optional<std::string> output_dir;   // overrides the config
    std::optional<unsigned> workers;         // 0 = hardware concurrency
    std::optional<std::uint64_t> seed;       // e.g. from SPECLAB_SEED
};

// Reads SPECLAB_SEED; throws ConfigError if set but not an unsigned integer.
std::optional<std::uint64_t> seed_from_env();

struct Check {
    std::string name;
    bool passed = true;
    std::string detail;
};

struct RunManifest {
    std::filesystem::path path;
    nlohmann::json data;
    std::vector<Check> checks;
    bool passed() const;
};

// Runs the experiment and writes artifacts into the output directory.
// Statistical checks that fail are recorded in the manifest, not thrown.
// Errors: ConfigError, IoError, InvariantViolation / NumericalError.
RunManifest run(const ExperimentConfig& config, const RunOptions& options = {});

// Maps an exception from parse_config/run to an exit code.
int exit_code_for(const std::exception& e);

struct ReportResult {
    std::string table;
    int exit_code = kExitOk;
};

// One line per manifest; unreadable manifests become failed rows.
ReportResult report(std::span<const std::filesystem::path> manifest_paths);

// FNV-1a 64-bit of a file, as 16 hex digits.
std::string fnv1a64_file(const std::filesystem::path& path);

// %.17g, so CSV files are byte-stable across runs.
std::string format_real(double x);

}  // namespace speclab
