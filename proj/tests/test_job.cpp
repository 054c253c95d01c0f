// SPDX-License-Identifier: Apache-2.0

#include "dofkit/job.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dofkit;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("dofkit_test_job_" + name);
  fs::remove_all(p);
  return p;
}

fs::path config(const std::string &name) { return fs::path(DOFKIT_CONFIG_DIR) / name; }

int run(const JobConfig &cfg, const std::string &command, const fs::path &dir, std::size_t workers = 1) {
  std::ostringstream out, err;
  const int code = run_job(cfg, command, dir.string(), workers, out, err);
  INFO(err.str());
  return code;
}

/// Every artifact of a run except the timing record.
std::map<std::string, std::string> artifacts(const fs::path &dir) {
  std::map<std::string, std::string> files;
  for (const auto &e : fs::directory_iterator(dir))
    if (e.path().filename() != "run_record.json")
      files[e.path().filename().string()] = slurp(e.path());
  return files;
}

} // namespace

TEST_CASE("every shipped config parses and round-trips", "[job]") {
  std::size_t seen = 0;
  for (const auto &e : fs::directory_iterator(DOFKIT_CONFIG_DIR)) {
    if (e.path().extension() != ".json")
      continue;
    ++seen;
    INFO(e.path().string());
    const JobConfig c = load_job(e.path().string());
    const std::string text = serialize_job(c);
    const JobConfig again = parse_job(text);
    CHECK(again == c);
    CHECK(serialize_job(again) == text);
  }
  CHECK(seen >= 10);
}

TEST_CASE("defaults are filled in", "[job]") {
  const JobConfig c = parse_job(R"({"geometry": {"kind": "interval_band", "duration": 1, "omega": 2}})");
  CHECK(c.command.empty());
  CHECK(c.resolution.oversampling == 2.0);
  CHECK(c.eigen.method == "auto");
  CHECK(c.epsilons == default_epsilons());
  CHECK(c.output.dir == "out");
  CHECK(c.seed == 1);
}

TEST_CASE("config errors", "[job]") {
  CHECK_THROWS_AS(parse_job("{ not json"), ConfigError);
  CHECK_THROWS_WITH(parse_job("{\n  \"geometry\": [\n}"), ContainsSubstring("line"));
  CHECK_THROWS_WITH(parse_job(R"({"geometry": {"kind": "interval_band"}, "resoluton": {}})"),
                    ContainsSubstring("resoluton"));
  CHECK_THROWS_WITH(parse_job(R"({"geometry": {"kind": "interval_band", "omgea": 1}})"),
                    ContainsSubstring("omgea"));
  CHECK_THROWS_AS(parse_job(R"({"geometry": {"kind": "interval_band", "omega": "fast"}})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"geometry": {"kind": "pentagon"}})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"geometry": {"kind": "interval_band", "omega": -1, "duration": 1}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"geometry": {"kind": "interval_band"}, "resolution": {"dense": "sometimes"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_job("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(load_job("/nonexistent/dofkit.json"), ConfigError);
}

TEST_CASE("config hash is stable and sensitive", "[job]") {
  const JobConfig a = load_job(config("verify_default.json").string());
  JobConfig b = a;
  CHECK(fnv1a_hex(serialize_job(a)) == fnv1a_hex(serialize_job(b)));
  b.seed = 2;
  CHECK(fnv1a_hex(serialize_job(a)) != fnv1a_hex(serialize_job(b)));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("spectrum run writes its artifacts", "[job][run]") {
  const auto dir = scratch("spectrum");
  JobConfig c = load_job(config("spectrum_interval_10.json").string());
  c.output.dump_matrix = true;
  REQUIRE(run(c, "spectrum", dir) == exit_code::ok);
  for (const char *f : {"spectrum.csv", "summary.json", "matrix.bin", "run_record.json"})
    CHECK(fs::exists(dir / f));
  const std::string csv = slurp(dir / "spectrum.csv");
  CHECK(csv.rfind("# dofkit", 0) == 0);
  CHECK_THAT(csv, ContainsSubstring("k,lambda,n_width"));
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary.dump().find("\"range_ok\":true") != std::string::npos);
  const MatrixDump d = read_matrix_dump((dir / "matrix.bin").string());
  CHECK(d.counts == std::vector<std::size_t>{512});
  const auto rec = nlohmann::json::parse(slurp(dir / "run_record.json"));
  CHECK(rec["exit_code"] == 0);
  CHECK(rec["version"] == kVersion);
}

TEST_CASE("a one-point sweep reproduces the spectrum run", "[job][run]") {
  const auto a = scratch("single_spectrum"), b = scratch("single_sweep");
  JobConfig c = load_job(config("spectrum_interval_10.json").string());
  REQUIRE(run(c, "spectrum", a) == exit_code::ok);
  c.command = "sweep";
  REQUIRE(run(c, "sweep", b) == exit_code::ok);
  CHECK(slurp(a / "spectrum.csv") == slurp(b / "spectrum_0.csv"));
}

TEST_CASE("sweep output does not depend on the worker count", "[job][run]") {
  const auto a = scratch("sweep_w1"), b = scratch("sweep_w2");
  const JobConfig c = load_job(config("sweep_anisotropic_grid.json").string());
  REQUIRE(run(c, "sweep", a, 1) == exit_code::ok);
  REQUIRE(run(c, "sweep", b, 2) == exit_code::ok);
  const auto fa = artifacts(a), fb = artifacts(b);
  CHECK(fa.size() == 5);
  CHECK(fa == fb);
}

TEST_CASE("dof runs", "[job][run]") {
  const auto dir = scratch("dof_modulated");
  REQUIRE(run(load_job(config("dof_modulated.json").string()), "dof", dir) == exit_code::ok);
  const auto rep = nlohmann::json::parse(slurp(dir / "dof_report.json"));
  CHECK(rep.dump().find("closed-form-only") != std::string::npos);

  const auto circ = scratch("dof_circular");
  REQUIRE(run(load_job(config("dof_circular.json").string()), "dof", circ) == exit_code::ok);
  CHECK(fs::exists(circ / "n_width.csv"));
  CHECK(slurp(circ / "dof_report.json").find("\"gap_shrinking\": true") != std::string::npos);
  CHECK(slurp(circ / "dof_report.json").find("\"gap_within_threshold\": true") != std::string::npos);

  JobConfig strict = load_job(config("dof_circular.json").string());
  strict.dof.max_relative_gap = 0.01;
  CHECK(run(strict, "dof", scratch("dof_strict")) == exit_code::check_failed);
  CHECK_THROWS_AS(parse_job(R"({"dof": {"max_relative_gap": -1}})"), ConfigError);
}

TEST_CASE("verify runs and exit codes", "[job][run]") {
  std::vector<VerifyCheck> checks;
  const auto dir = scratch("verify");
  const RunResult rr = run_verify(load_job(config("verify_default.json").string()), dir, &checks);
  CHECK(rr.exit_code == exit_code::ok);
  CHECK(checks.size() >= 10);
  for (const auto &c : checks) {
    INFO(c.name << " " << c.scope << " " << c.value);
    CHECK(c.pass);
  }
  CHECK_THAT(format_verify_table(checks), ContainsSubstring("dense_vs_matrix_free"));

  CHECK(run(load_job(config("verify_underresolved.json").string()), "verify", scratch("under")) ==
        exit_code::check_failed);
  CHECK(run(load_job(config("verify_degenerate.json").string()), "verify", scratch("degen")) == exit_code::ok);
  CHECK(run(load_job(config("spectrum_empty.json").string()), "sweep", scratch("mismatch")) == exit_code::config);
  JobConfig boxes = load_job(config("spectrum_empty.json").string());
  boxes.command.clear();
  CHECK(run(boxes, "dof", scratch("dof_boxes")) == exit_code::config);
  CHECK(run(boxes, "launch", scratch("unknown")) == exit_code::config);
}
