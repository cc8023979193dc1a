// speclab <experiment> --config <file> [--workers N] [--out DIR]
// speclab report <manifest.json>...

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "speclab/cli_harness.hpp"
#include "speclab/errors.hpp"

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw speclab::IoError("cannot read config " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"growing-potential Anderson model experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SPECLAB_VERSION);

    std::string config_path, out_dir;
    unsigned workers = 0;
    bool workers_set = false;
    const char* experiments[] = {"spectrum",        "ids",         "poisson",     "superposition", "wegner-minami",
                                 "green-expansion", "frac-moment", "appendix-phi"};
    for (const char* name: experiments) {
        auto* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option_function<unsigned>("--workers", [&](unsigned w) { workers = w, workers_set = true; },
                                           "worker threads (0 = all cores)");
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    }
    std::vector<std::string> manifests;
    auto* rep = app.add_subcommand("report", "summarize run manifests");
    rep->add_option("manifests", manifests, "manifest.json files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : speclab::kExitConfig;
    }

    if (rep->parsed()) {
        std::vector<std::filesystem::path> paths(manifests.begin(), manifests.end());
        const auto r = speclab::report(paths);
        std::cout << r.table;
        return r.exit_code;
    }

    const auto* sub = app.get_subcommands().front();
    try {
        const auto cfg = speclab::parse_config(read_file(config_path), speclab::parse_experiment(sub->get_name()));
        speclab::RunOptions opt;
        if (!out_dir.empty()) opt.output_dir = out_dir;
        if (workers_set) opt.workers = workers;
        opt.seed = speclab::seed_from_env();
        if (opt.seed) std::cerr << "SPECLAB_SEED overrides config seed: " << *opt.seed << '\n';
        const auto m = speclab::run(cfg, opt);
        for (const auto& c: m.checks) {
            std::cout << (c.passed ? "pass  " : "FAIL  ") << c.name << ": " << c.detail << '\n';
        }
        std::cout << "manifest: " << m.path.string() << '\n';
        return speclab::kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "speclab: " << e.what() << '\n';
        return speclab::exit_code_for(e);
    }
}
