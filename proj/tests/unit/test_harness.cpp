#include "doctest.h"

#include "robcov/error.hpp"
#include "robcov/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

using namespace robcov;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Numeric;
}

std::string render(std::span<const TrialRecord> recs, Format f) {
  std::ostringstream out;
  emit(out, recs, f);
  return out.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("robcov_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrialRecord random_record(Stream& rng, int i) {
  static const char* names[] = {"alpha", "beta", "gamma", "delta_x", "tv.bound", "z"};
  TrialRecord r;
  r.experiment = "exp/" + std::to_string(rng.bits() % 7);
  r.dim = static_cast<int>(rng.bits() % 1000) + 1;
  r.epsilon = rng.uniform() * 0.5;
  r.n_samples = static_cast<std::int64_t>(rng.bits() >> 20);
  r.trial_index = i;
  r.seed = rng.bits();
  for (const char* n : names) {
    if (rng.uniform() < 0.3) continue;
    const double u = rng.uniform();
    double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.bits() % 40) - 20);
    if (u < 0.02) v = std::numeric_limits<double>::infinity();
    else if (u < 0.04) v = -std::numeric_limits<double>::infinity();
    else if (u < 0.06) v = 0.0;
    else if (u < 0.08) v = std::numeric_limits<double>::denorm_min();
    r.metrics[n] = v;
  }
  return r;
}

}  // namespace

TEST_CASE("derive_stream replays") {
  Stream a = derive_stream(7, "indist", 3), b = derive_stream(7, "indist", 3);
  for (int i = 0; i < 100; ++i) CHECK(a.bits() == b.bits());
  Stream c = derive_stream(7, "indist", 3), d = derive_stream(7, "indist", 3);
  for (int i = 0; i < 100; ++i) CHECK(c.normal() == d.normal());
  CHECK(derive_seed(7, "indist", 3) != derive_seed(8, "indist", 3));
}

TEST_CASE("derive_stream collision scan") {
  const std::uint64_t n = 1000000;
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(2 * n);
  std::uint64_t collisions = 0;
  for (const char* tag : {"power/null", "power/noiseless-alt"}) {
    for (std::uint64_t i = 0; i < n; ++i) {
      Stream s = derive_stream(0, tag, i);
      if (!seen.insert(s.bits()).second) ++collisions;
    }
  }
  CHECK(collisions == 0);
}

TEST_CASE("emit CSV layout") {
  TrialRecord r;
  r.experiment = "demo";
  r.dim = 4;
  r.epsilon = 0.1;
  r.n_samples = 10;
  r.trial_index = 2;
  r.seed = 18446744073709551615ULL;
  r.metrics = {{"zeta", 1.0}, {"alpha", 0.30000000000000004}};
  const std::vector<TrialRecord> one{r};
  const std::string csv = render(one, Format::Csv);
  CHECK(csv ==
        "experiment,dim,epsilon,n_samples,trial_index,seed,alpha,zeta\n"
        "demo,4,0.10000000000000001,10,2,18446744073709551615,0.30000000000000004,1\n");
}

TEST_CASE("emit JSON layout uses the same keys") {
  TrialRecord a, b;
  a.experiment = "x";
  a.metrics = {{"m", 2.5}};
  b.experiment = "y";
  b.metrics = {{"n", -1.0}};
  const std::vector<TrialRecord> recs{a, b};
  const std::string json = render(recs, Format::Json);
  CHECK(json.find("\"m\": null") != std::string::npos);
  CHECK(json.find("\"n\": null") != std::string::npos);
  std::istringstream in(json);
  CHECK(parse_records(in, Format::Json) == recs);
}

TEST_CASE("emit round trip on 1000 random records") {
  Stream rng(2024);
  std::vector<TrialRecord> recs;
  for (int i = 0; i < 1000; ++i) recs.push_back(random_record(rng, i));
  for (Format f : {Format::Csv, Format::Json}) {
    std::istringstream in(render(recs, f));
    CHECK(parse_records(in, f) == recs);
  }
}

TEST_CASE("emit refuses NaN and bad names, and reports unwritable sinks") {
  TrialRecord r;
  r.experiment = "nan-case";
  r.metrics = {{"ok", 1.0}, {"bad", std::nan("")}};
  const std::vector<TrialRecord> recs{r};
  std::ostringstream out;
  CHECK(code_of([&] { emit(out, recs, Format::Csv); }) == ErrorCode::Numeric);
  CHECK(code_of([&] { emit(out, recs, Format::Json); }) == ErrorCode::Numeric);

  r.metrics = {{"a,b", 1.0}};
  const std::vector<TrialRecord> comma{r};
  CHECK(code_of([&] { emit(out, comma, Format::Csv); }) == ErrorCode::InvalidArgument);
  r.metrics = {{"seed", 1.0}};
  const std::vector<TrialRecord> shadow{r};
  CHECK(code_of([&] { emit(out, shadow, Format::Csv); }) == ErrorCode::InvalidArgument);

  CHECK(code_of([&] { emit(out, std::vector<TrialRecord>{}, Format::Csv); }) == ErrorCode::InvalidArgument);
  r.metrics = {{"x", 1.0}};
  const std::vector<TrialRecord> good{r};
  CHECK(code_of([&] { emit("/nonexistent/dir/out.csv", good, Format::Csv); }) == ErrorCode::Io);

  std::istringstream garbage("experiment,dim\nfoo,1\n");
  CHECK(code_of([&] { parse_records(garbage, Format::Csv); }) == ErrorCode::Io);
  CHECK(code_of([] { parse_format("xml"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("manifest round trip") {
  RunManifest m;
  m.subcommand = "indist";
  m.master_seed = 18446744073709551557ULL;
  m.config = EnsembleConfig::with_gap(128, 0.1, 0.5);
  m.parameters = {{"pairs", "2000"}, {"samples", "128,1638"}, {"format", "csv"}};
  m.outputs = {"r.csv"};
  CHECK(manifest_from_json(to_json(m)) == m);
  RunManifest bare;
  bare.subcommand = "chi2";
  CHECK(manifest_from_json(to_json(bare)) == bare);
  CHECK(manifest_path("out/r.csv") == "out/r.csv.manifest.json");
  CHECK(code_of([] { manifest_from_json("[1, 2]"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("default master seed from the environment") {
  ::unsetenv("ROBCOV_SEED");
  CHECK(default_master_seed(5) == 5);
  ::setenv("ROBCOV_SEED", "18446744073709551615", 1);
  CHECK(default_master_seed(5) == 18446744073709551615ULL);
  ::setenv("ROBCOV_SEED", "12abc", 1);
  CHECK(code_of([] { default_master_seed(); }) == ErrorCode::InvalidArgument);
  ::setenv("ROBCOV_SEED", "-3", 1);
  CHECK(code_of([] { default_master_seed(); }) == ErrorCode::InvalidArgument);
  ::unsetenv("ROBCOV_SEED");
}

TEST_CASE("format_value") {
  CHECK(format_value(1.0) == "1.0");
  CHECK(format_value(0.1) == "0.1");
  CHECK(format_value(-2.5) == "-2.5");
  CHECK(format_value(1e300) == "1e+300");
  CHECK(std::stod(format_value(0.980580675690920)) == 0.980580675690920);
}

TEST_CASE("chi2 runner on identity files") {
  const auto dir = scratch("chi2");
  const auto a = (dir / "a.txt").string(), b = (dir / "b.txt").string();
  save_matrix(a, SymmetricMatrix::identity(5));
  save_matrix(b, SymmetricMatrix::identity(5));
  const auto run = run_chi2(a, b, Chi2Mode::Exact, 0.1);
  REQUIRE(run.summary.size() == 1);
  CHECK(run.summary[0] == "1.0");
  CHECK(run.records.at(0).experiment == "chi2_exact");

  save_matrix(a, SymmetricMatrix::zero(5));
  save_matrix(b, SymmetricMatrix::zero(5));
  CHECK(run_chi2(a, b, Chi2Mode::Taylor, 0.1).summary.at(0) == "1.0");
  CHECK(run_chi2(a, b, Chi2Mode::Mixture, 0.1).summary.at(0) == "1.0");
  save_matrix(b, SymmetricMatrix::zero(4));
  CHECK(code_of([&] { run_chi2(a, b, Chi2Mode::Exact, 0.1); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([] { parse_chi2_mode("approx"); }) == ErrorCode::InvalidArgument);
  fs::remove_all(dir);
}

TEST_CASE("indist runner layout and worker independence") {
  const auto cfg = EnsembleConfig::with_gap(32, 0.25, 0.5);
  RunSettings s;
  s.master_seed = 7;
  s.trials = 40;
  s.samples = {0, 32, 102};
  s.workers = 1;
  const auto one = run_indist(cfg, s);
  s.workers = 4;
  const auto four = run_indist(cfg, s);
  CHECK(render(one.records, Format::Csv) == render(four.records, Format::Csv));

  int summaries = 0, pairs = 0;
  for (const auto& r : one.records) {
    if (r.experiment == "indist") ++summaries;
    if (r.experiment == "indist_pair") ++pairs;
  }
  CHECK(summaries == 3);
  CHECK(pairs == 40);
  CHECK(one.manifest.subcommand == "indist");
  CHECK(one.manifest.master_seed == 7);
  CHECK(one.manifest.config == cfg);
  for (const auto& r : one.records)
    if (r.experiment == "indist" && r.n_samples == 0) CHECK(r.metrics.at("mean_estimate") == 1.0);
}

TEST_CASE("write_run writes records and a replayable manifest") {
  const auto dir = scratch("write");
  const auto cfg = EnsembleConfig::with_gap(16, 0.4, 0.5);
  RunSettings s;
  s.master_seed = 99;
  s.trials = 25;
  const auto run = run_concentration(cfg, s);
  const auto path = (dir / "c.json").string();
  write_run(run, path, Format::Json);
  std::ifstream in(path);
  CHECK(parse_records(in, Format::Json) == run.records);
  std::ifstream min(manifest_path(path));
  std::stringstream text;
  text << min.rdbuf();
  const auto m = manifest_from_json(text.str());
  CHECK(m.outputs == std::vector<std::string>{path});
  CHECK(m.parameters.at("format") == "json");
  CHECK(m.master_seed == 99);

  // Replaying from the manifest alone reproduces the records.
  RunSettings replay;
  replay.master_seed = m.master_seed;
  replay.trials = std::stoi(m.parameters.at("pairs"));
  CHECK(run_concentration(*m.config, replay).records == run.records);
  fs::remove_all(dir);
}

TEST_CASE("gen-ensemble runner writes matrices") {
  const auto dir = scratch("gen");
  const auto cfg = EnsembleConfig::with_gap(12, 0.45, 0.5);
  RunSettings s;
  s.trials = 5;
  const auto run = run_gen_ensemble(cfg, s, (dir / "mats").string());
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "mats")) {
    const auto a = load_matrix(e.path().string());
    CHECK(a.dim() == 12);
    CHECK(frobenius_norm(a) > 0.5);
    ++files;
  }
  CHECK(files == 5);
  bool summary = false;
  for (const auto& r : run.records)
    if (r.experiment == "gen-ensemble-summary") summary = r.metrics.count("acceptance_rate") == 1;
  CHECK(summary);
  fs::remove_all(dir);
}

TEST_CASE("power runner summary records") {
  const auto cfg = EnsembleConfig::with_gap(8, 0.4, 0.5);
  RunSettings s;
  s.trials = 10;
  s.samples = {400};
  const PowerGrid grid{{Dataset::Null, Dataset::EnsembleAlt}, {Tester::Frob, Tester::PairKurtosis}, {}};
  const auto run = run_power(cfg, s, grid);
  int summaries = 0;
  for (const auto& r : run.records) {
    if (r.experiment.ends_with("/summary")) {
      ++summaries;
      CHECK(r.metrics.at("trials") == 10.0);
      CHECK(r.metrics.at("wilson_lo") <= r.metrics.at("reject_rate"));
      CHECK(r.metrics.at("reject_rate") <= r.metrics.at("wilson_hi"));
    }
  }
  CHECK(summaries == 4);
  CHECK(code_of([&] { run_power(cfg, s, PowerGrid{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("selfcheck passes") {
  const auto run = run_selfcheck(RunSettings{});
  CHECK(run.failures == 0);
  CHECK(run.records.size() >= 10);
}
