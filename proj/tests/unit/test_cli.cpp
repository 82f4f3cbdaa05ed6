#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "bikeshare/cli/config.hpp"
#include "bikeshare/cli/experiment.hpp"
#include "bikeshare/cli/manifest.hpp"
#include "bikeshare/cli/svg.hpp"

using namespace bikeshare;
using namespace bikeshare::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("bikeshare_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

json small_k3(const std::string& kind) {
    return json{{"kind", kind},
                {"stations", 20},
                {"capacity", 3},
                {"fleet", 30},
                {"demand", 1.0},
                {"initial", {{"proportions", {0, 0.5, 0.5, 0}}}},
                {"horizon", 2.0},
                {"replications", 8},
                {"seed", 17}};
}

std::string field_of(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST(Config, Defaults) {
    const auto cfg = parse_config(json::object());
    EXPECT_EQ(cfg.kind, Kind::MeanField);
    EXPECT_EQ(cfg.params.stations, 100);
    EXPECT_EQ(cfg.params.capacity, 3);
    EXPECT_EQ(cfg.replications, 50u);
    EXPECT_DOUBLE_EQ(cfg.output_dt, 0.1);
}

TEST(Config, GammaIsAnAlternativeToFleet) {
    const auto cfg = parse_config(json{{"stations", 100}, {"gamma", 1.5}});
    EXPECT_EQ(cfg.params.fleet, 150);
    EXPECT_EQ(field_of(json{{"stations", 100}, {"gamma", 1.5}, {"fleet", 150}}), "gamma");
    EXPECT_EQ(field_of(json{{"stations", 3}, {"gamma", 0.5}}), "gamma");
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_EQ(field_of(json{{"kind", "bogus"}}), "kind");
    EXPECT_EQ(field_of(json{{"stations", 0}}), "stations");
    EXPECT_EQ(field_of(json{{"replications", 1}}), "replications");
    EXPECT_EQ(field_of(json{{"travel_rate", -1.0}}), "travel_rate");
    EXPECT_EQ(field_of(json{{"capacity", 3}, {"series_k", {4}}}), "series_k");
    EXPECT_EQ(field_of(json{{"colour", "red"}}), "colour");
    EXPECT_EQ(field_of(json{{"demand", {{"type", "sinusoidal"}, {"base", 1.0}, {"amplitude", 1.5}}}}), "demand");
    EXPECT_EQ(field_of(json{{"sweep", {{"parameter", "lambda"}, {"values", {1.0}}, {"extra", 1}}}}), "sweep.extra");
    EXPECT_EQ(field_of(json{{"kind", "lag"}}), "demand");
    EXPECT_EQ(field_of(json{{"kind", "sweep"}}), "sweep.values");
    EXPECT_EQ(field_of(json{{"kind", "ingest"}}), "ingest.path");
    EXPECT_EQ(field_of(json{{"capacity", 3}, {"initial", {{"proportions", {1.0, 0.0}}}}}), "initial.proportions");
}

TEST(Config, FlatCountsAreSingleClassShorthand) {
    const auto cfg = parse_config(json{{"stations", 4}, {"capacity", 2}, {"fleet", 4}, {"initial", {{"counts", {1, 2, 1}}}}});
    ASSERT_TRUE(cfg.initial_counts.has_value());
    ASSERT_EQ(cfg.initial_counts->size(), 1u);
    EXPECT_EQ((*cfg.initial_counts)[0], (std::vector<std::int64_t>{1, 2, 1}));
}

TEST(Config, ShippedConfigsParse) {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(BIKESHARE_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        SCOPED_TRACE(entry.path().string());
        json doc = load_json(entry.path().string());
        if (doc.contains("ingest")) doc["ingest"]["path"] = (entry.path().parent_path() / "sample_trips.csv").string();
        EXPECT_NO_THROW(parse_config(doc));
        ++seen;
    }
    EXPECT_GE(seen, 7);
}

TEST(Experiment, NonIntegralInitialCountsRejectedForSimulation) {
    json doc = small_k3("simulate");
    doc["stations"] = 5;
    doc["fleet"] = 10;
    doc["initial"]["proportions"] = {0, 0.5, 0.5, 0};
    const auto cfg = parse_config(doc);
    try {
        sim_config(cfg);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "initial.proportions");
    }
}

TEST(Experiment, MeanFieldCsvSchemaAndRoundTrip) {
    json doc = small_k3("meanfield");
    doc["out"] = scratch("mf").string();
    const auto res = run(parse_config(doc));
    const auto t = csv::read_table((res.dir / "meanfield.csv").string());
    EXPECT_EQ(t.header, (std::vector<std::string>{"t", "y0", "y1", "y2", "y3"}));
    ASSERT_EQ(t.rows.size(), 21u);
    EXPECT_DOUBLE_EQ(t.rows[0][2], 0.5);
    EXPECT_NEAR(t.rows[20][0], 2.0, 1e-12);
    for (const auto& row : t.rows) EXPECT_NEAR(row[1] + row[2] + row[3] + row[4], 1.0, 1e-12);
    const auto mf = solve_mean_field(parse_config(doc).params, initial_measure(parse_config(doc)), time_grid(parse_config(doc)));
    for (std::size_t g = 0; g < mf.size(); ++g)
        for (int k = 0; k <= 3; ++k) EXPECT_EQ(t.rows[g][static_cast<std::size_t>(k) + 1], mf.states[g].aggregate(k));
}

TEST(Experiment, DiffusionUpperTriangleRowMajor) {
    json doc = small_k3("diffusion");
    doc["out"] = scratch("diff").string();
    const auto res = run(parse_config(doc));
    const auto t = csv::read_table((res.dir / "diffusion.csv").string());
    ASSERT_EQ(t.header.size(), 11u);
    EXPECT_EQ(t.header[1], "s0_0");
    EXPECT_EQ(t.header[2], "s0_1");
    EXPECT_EQ(t.header[5], "s1_1");
    EXPECT_EQ(t.header[10], "s3_3");
    EXPECT_EQ(t.rows[0][1], 0.0);
    const auto c = csv::read_table((res.dir / "circulation.csv").string());
    EXPECT_EQ(c.header, (std::vector<std::string>{"t", "mean", "var", "lo", "hi"}));
    EXPECT_DOUBLE_EQ(c.rows[0][1], 30.0 - 20.0 * 1.5);
}

TEST(Experiment, CompareSchema) {
    json doc = small_k3("compare");
    doc["series_k"] = {0, 3};
    doc["out"] = scratch("cmp").string();
    const auto res = run(parse_config(doc));
    const auto t = csv::read_table((res.dir / "compare_k3.csv").string());
    EXPECT_EQ(t.header, (std::vector<std::string>{"t", "sim_mean_k3", "sim_band_lo", "sim_band_hi", "mf_k3",
                                                   "diff_band_lo", "diff_band_hi"}));
    for (const auto& row : t.rows) {
        EXPECT_LE(row[2], row[1] + 1e-15);
        EXPECT_GE(row[3], row[1] - 1e-15);
        EXPECT_LE(row[5], row[4] + 1e-15);
        EXPECT_GE(row[6], row[4] - 1e-15);
    }
    EXPECT_TRUE(fs::exists(res.dir / "compare_k0.csv"));
    EXPECT_FALSE(fs::exists(res.dir / "compare_k1.csv"));
}

TEST(Experiment, ByteIdenticalReruns) {
    json doc = small_k3("compare");
    doc["svg"] = true;
    doc["out"] = scratch("det_a").string();
    const auto a = run(parse_config(doc));
    doc["out"] = scratch("det_b").string();
    const auto b = run(parse_config(doc));
    ASSERT_EQ(a.manifest.artifacts.size(), b.manifest.artifacts.size());
    for (std::size_t i = 0; i < a.manifest.artifacts.size(); ++i) {
        EXPECT_EQ(a.manifest.artifacts[i].file, b.manifest.artifacts[i].file);
        EXPECT_EQ(slurp(a.dir / a.manifest.artifacts[i].file), slurp(b.dir / b.manifest.artifacts[i].file));
    }
}

TEST(Experiment, DifferentSeedDifferentSimulation) {
    json doc = small_k3("simulate");
    doc["out"] = scratch("seed_a").string();
    const auto a = run(parse_config(doc));
    doc["seed"] = 18;
    doc["out"] = scratch("seed_b").string();
    const auto b = run(parse_config(doc));
    EXPECT_NE(slurp(a.dir / "simulate.csv"), slurp(b.dir / "simulate.csv"));
    EXPECT_NE(a.manifest.config_sha256, b.manifest.config_sha256);
}

TEST(Experiment, SweepAndEquilibrium) {
    json doc = small_k3("sweep");
    doc.erase("initial");
    doc["stations"] = 100;
    doc["fleet"] = 150;
    doc["sweep"] = {{"parameter", "lambda"}, {"values", {0.5, 1.0, 1.5, 2.0}}};
    doc["out"] = scratch("sweep").string();
    const auto res = run(parse_config(doc));
    const auto t = csv::read_table((res.dir / "sweep.csv").string());
    EXPECT_EQ(t.header[0], "lambda");
    ASSERT_EQ(t.rows.size(), 4u);
    for (std::size_t i = 1; i < t.rows.size(); ++i) EXPECT_LT(t.rows[i][1], t.rows[i - 1][1]);

    doc["kind"] = "equilibrium";
    doc.erase("sweep");
    doc["out"] = scratch("eq").string();
    const auto eq = run(parse_config(doc));
    const json j = json::parse(slurp(eq.dir / "equilibrium.json"));
    EXPECT_NEAR(j["circulation"].get<double>(), 60.0, 5.0);
    EXPECT_LE(j["drift_sup_norm"].get<double>(), 1e-10);
}

TEST(Experiment, LagReportsBothSeries) {
    json doc = small_k3("lag");
    doc["demand"] = {{"type", "sinusoidal"}, {"base", 1.0}, {"amplitude", 0.5}, {"angular_frequency", 0.5}};
    doc["horizon"] = 40.0;
    doc["out"] = scratch("lag").string();
    const auto res = run(parse_config(doc));
    std::istringstream is(slurp(res.dir / "lag.csv"));
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "mu,series_k,extremum_type,lambda_time,series_time,lag");
    int rows = 0, positive_k0 = 0;
    while (std::getline(is, line)) {
        const auto cells = csv::split_line(line);
        ASSERT_EQ(cells.size(), 6u);
        EXPECT_TRUE(cells[2] == "max" || cells[2] == "min");
        if (cells[1] == "0" && std::stod(cells[5]) > 0) ++positive_k0;
        ++rows;
    }
    EXPECT_GT(rows, 4);
    EXPECT_GT(positive_k0, 0);
}

TEST(Experiment, IngestSample) {
    json doc{{"kind", "ingest"},
             {"ingest", {{"path", std::string(BIKESHARE_CONFIG_DIR) + "/sample_trips.csv"}}},
             {"out", scratch("ingest").string()}};
    const auto res = run(parse_config(doc));
    const json stats = json::parse(slurp(res.dir / "stats.json"));
    EXPECT_GT(stats["records"].get<int>(), 1000);
    EXPECT_EQ(stats["skipped"].get<int>(), 0);
    EXPECT_GT(stats["fit"]["base"].get<double>(), 0.0);
    const auto profile = csv::read_table((res.dir / "profile.csv").string());
    EXPECT_EQ(profile.rows.size(), 7u * 288u);
}

TEST(Manifest, RecordsEveryArtifactAndDetectsTampering) {
    json doc = small_k3("diffusion");
    doc["svg"] = true;
    doc["out"] = scratch("tamper").string();
    const auto res = run(parse_config(doc));
    const Manifest m = Manifest::read(res.dir);
    EXPECT_EQ(m.kind, "diffusion");
    EXPECT_EQ(m.seed, 17u);
    EXPECT_EQ(m.config_sha256, config_hash(parse_config(doc)));
    json moved = doc;
    moved["out"] = "elsewhere";
    EXPECT_EQ(config_hash(parse_config(moved)), m.config_sha256);
    EXPECT_EQ(m.artifacts.size(), 6u);
    EXPECT_TRUE(verify_manifest(res.dir).empty());

    // same size, one byte changed
    std::string body = slurp(res.dir / "meanfield.csv");
    body[body.size() - 2] = body[body.size() - 2] == '0' ? '1' : '0';
    std::ofstream(res.dir / "meanfield.csv", std::ios::binary) << body;
    auto problems = verify_manifest(res.dir);
    ASSERT_EQ(problems.size(), 1u);
    EXPECT_NE(problems[0].find("checksum"), std::string::npos);

    fs::remove(res.dir / "diffusion.svg");
    problems = verify_manifest(res.dir);
    EXPECT_EQ(problems.size(), 2u);
}

TEST(Manifest, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Svg, ContainsOnePolylinePerSeries) {
    csv::Table t;
    t.header = {"t", "a", "b"};
    t.rows = {{0, 1, 2}, {1, 2, 3}, {2, 3, 1}};
    const std::string s = svg_chart(t, "demo");
    std::size_t count = 0;
    for (std::size_t pos = 0; (pos = s.find("<polyline", pos)) != std::string::npos; ++pos) ++count;
    EXPECT_EQ(count, 2u);
    EXPECT_NE(s.find("</svg>"), std::string::npos);
}
