#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "bikeshare/cli/config.hpp"
#include "bikeshare/cli/experiment.hpp"
#include "bikeshare/cli/manifest.hpp"

namespace {

enum Exit : int { Ok = 0, Usage = 1, Validation = 2, Numerical = 3, Io = 4, VerifyMismatch = 5 };

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> replications;
    std::optional<double> horizon;
    std::optional<unsigned> threads;
    bool svg = false;
};

void add_run_flags(CLI::App* app, Overrides& o) {
    app->add_option("-c,--config", o.config, "experiment configuration (JSON)");
    app->add_option("--seed", o.seed, "master seed");
    app->add_option("--out", o.out, "output directory");
    app->add_option("--replications", o.replications, "simulation replications");
    app->add_option("--horizon", o.horizon, "time horizon");
    app->add_option("--threads", o.threads, "worker threads for replications");
    app->add_flag("--svg", o.svg, "also write SVG charts");
}

int execute(const Overrides& o, std::optional<bikeshare::cli::Kind> kind) {
    using namespace bikeshare;
    using nlohmann::json;
    try {
        json doc = o.config.empty() ? json::object() : cli::load_json(o.config);
        if (!doc.is_object()) throw cli::ConfigError("<root>", "must be an object");
        // defaults < config file < command-line flags
        if (kind) {
            if (doc.contains("kind") && doc["kind"] != cli::to_string(*kind))
                std::cerr << "note: config kind '" << doc["kind"].get<std::string>() << "' replaced by '"
                          << cli::to_string(*kind) << "'\n";
            doc["kind"] = cli::to_string(*kind);
        }
        if (o.seed) doc["seed"] = *o.seed;
        if (o.out) doc["out"] = *o.out;
        if (o.replications) doc["replications"] = *o.replications;
        if (o.horizon) doc["horizon"] = *o.horizon;
        if (o.threads) doc["threads"] = *o.threads;
        if (o.svg) doc["svg"] = true;
        // a relative trip-file path is taken relative to the config file
        if (!o.config.empty() && doc.contains("ingest") && doc["ingest"].is_object() &&
            doc["ingest"].contains("path") && doc["ingest"]["path"].is_string()) {
            const std::filesystem::path trips = doc["ingest"]["path"].get<std::string>();
            if (trips.is_relative())
                doc["ingest"]["path"] = (std::filesystem::path(o.config).parent_path() / trips).string();
        }

        const cli::ExperimentConfig cfg = cli::parse_config(doc);
        const cli::RunResult res = cli::run(cfg);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
        for (const auto& a : res.manifest.artifacts) std::cout << (res.dir / a.file).string() << '\n';
        return Ok;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Validation;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Numerical;
    } catch (const IntegrationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Numerical;
    } catch (const CapacityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Validation;
    } catch (const IngestError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Io;
    }
}

int verify(const std::string& dir) {
    try {
        const auto problems = bikeshare::cli::verify_manifest(dir);
        for (const auto& p : problems) std::cerr << "mismatch: " << p << '\n';
        if (!problems.empty()) return VerifyMismatch;
        std::cout << "ok\n";
        return Ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Io;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-capacity bike-sharing model: simulation, mean-field and diffusion limits"};
    app.require_subcommand(1);
    app.footer(
        "Flag precedence: built-in defaults < config file < command-line flags.\n"
        "Exit codes: 2 invalid parameters, 3 integration or convergence failure,\n"
        "4 input/output or ingest failure, 5 manifest verification mismatch.");

    Overrides run_opts;
    auto* run_cmd = app.add_subcommand("run", "run the experiment described by --config");
    add_run_flags(run_cmd, run_opts);
    run_cmd->get_option("--config")->required();

    std::vector<std::pair<bikeshare::cli::Kind, CLI::App*>> kind_cmds;
    std::vector<Overrides> kind_opts(bikeshare::cli::kind_names().size());
    std::size_t i = 0;
    for (const auto& [kind, name] : bikeshare::cli::kind_names()) {
        auto* sub = app.add_subcommand(name, std::string("run a ") + name + " experiment");
        add_run_flags(sub, kind_opts[i++]);
        kind_cmds.emplace_back(kind, sub);
    }

    std::string verify_dir;
    auto* verify_cmd = app.add_subcommand("verify", "check artifact checksums against run-manifest.json");
    verify_cmd->add_option("dir", verify_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? Ok : Usage;
    }

    if (*run_cmd) return execute(run_opts, std::nullopt);
    if (*verify_cmd) return verify(verify_dir);
    for (std::size_t j = 0; j < kind_cmds.size(); ++j)
        if (*kind_cmds[j].second) return execute(kind_opts[j], kind_cmds[j].first);
    return Usage;
}
