#include "robcov/harness.hpp"

#include "robcov/error.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace robcov {

namespace {

const char* const kFixedColumns[] = {"experiment", "dim", "epsilon", "n_samples", "trial_index", "seed"};

std::string real17(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void check_name(const std::string& name, const char* what) {
  require(!name.empty(), std::string("emit: empty ") + what);
  for (char c : name) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r' || c == '\\')
      fail(ErrorCode::InvalidArgument, std::string("emit: ") + what + " '" + name + "' contains a reserved character");
  }
}

std::set<std::string> metric_union(std::span<const TrialRecord> records) {
  std::set<std::string> names;
  for (const auto& r : records) {
    check_name(r.experiment, "experiment tag");
    for (const auto& [k, v] : r.metrics) {
      check_name(k, "metric name");
      for (const char* fixed : kFixedColumns)
        if (k == fixed) fail(ErrorCode::InvalidArgument, "emit: metric name '" + k + "' shadows a fixed column");
      if (std::isnan(v)) {
        fail(ErrorCode::Numeric, "emit: metric '" + k + "' is NaN in record " + r.experiment + "#" +
                                     std::to_string(r.trial_index) + " (upstream bug)");
      }
      names.insert(k);
    }
  }
  return names;
}

template <class T>
T parse_int(const std::string& s, const char* what) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorCode::Io, std::string("parse_records: bad ") + what + " '" + s + "'");
  return v;
}

double parse_real(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || std::isnan(v))
    fail(ErrorCode::Io, "parse_records: bad real '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(cell);
  return cells;
}

void emit_csv(std::ostream& out, std::span<const TrialRecord> records, const std::set<std::string>& names) {
  for (std::size_t c = 0; c < std::size(kFixedColumns); ++c) out << (c ? "," : "") << kFixedColumns[c];
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& r : records) {
    out << r.experiment << ',' << r.dim << ',' << real17(r.epsilon) << ',' << r.n_samples << ','
        << r.trial_index << ',' << r.seed;
    for (const auto& n : names) {
      out << ',';
      const auto it = r.metrics.find(n);
      if (it != r.metrics.end()) out << real17(it->second);
    }
    out << '\n';
  }
}

std::string json_real(double x) {
  if (std::isinf(x)) return x > 0 ? "\"inf\"" : "\"-inf\"";
  return real17(x);
}

void emit_json(std::ostream& out, std::span<const TrialRecord> records, const std::set<std::string>& names) {
  out << "[\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out << "  {\"experiment\": " << nlohmann::json(r.experiment).dump() << ", \"dim\": " << r.dim
        << ", \"epsilon\": " << json_real(r.epsilon) << ", \"n_samples\": " << r.n_samples
        << ", \"trial_index\": " << r.trial_index << ", \"seed\": " << r.seed;
    for (const auto& n : names) {
      out << ", \"" << n << "\": ";
      const auto it = r.metrics.find(n);
      if (it != r.metrics.end()) out << json_real(it->second);
      else out << "null";
    }
    out << (i + 1 < records.size() ? "},\n" : "}\n");
  }
  out << "]\n";
}

double json_to_real(const nlohmann::json& v) {
  if (v.is_string()) return parse_real(v.get<std::string>());
  if (!v.is_number()) fail(ErrorCode::Io, "parse_records: expected a number, got " + v.dump());
  return v.get<double>();
}

std::vector<TrialRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Io, "parse_records: empty input");
  const auto header = split_csv(line);
  if (header.size() < std::size(kFixedColumns)) fail(ErrorCode::Io, "parse_records: short header");
  for (std::size_t c = 0; c < std::size(kFixedColumns); ++c)
    if (header[c] != kFixedColumns[c]) fail(ErrorCode::Io, "parse_records: unexpected column '" + header[c] + "'");

  std::vector<TrialRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      fail(ErrorCode::Io, "parse_records: row has " + std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(header.size()));
    TrialRecord r;
    r.experiment = cells[0];
    r.dim = parse_int<int>(cells[1], "dim");
    r.epsilon = parse_real(cells[2]);
    r.n_samples = parse_int<std::int64_t>(cells[3], "n_samples");
    r.trial_index = parse_int<std::int64_t>(cells[4], "trial_index");
    r.seed = parse_int<std::uint64_t>(cells[5], "seed");
    for (std::size_t c = std::size(kFixedColumns); c < cells.size(); ++c)
      if (!cells[c].empty()) r.metrics[header[c]] = parse_real(cells[c]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TrialRecord> parse_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, std::string("parse_records: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::Io, "parse_records: expected a JSON array");
  std::vector<TrialRecord> out;
  try {
    for (const auto& obj : doc) {
      TrialRecord r;
      r.experiment = obj.at("experiment").get<std::string>();
      r.dim = obj.at("dim").get<int>();
      r.epsilon = json_to_real(obj.at("epsilon"));
      r.n_samples = obj.at("n_samples").get<std::int64_t>();
      r.trial_index = obj.at("trial_index").get<std::int64_t>();
      r.seed = obj.at("seed").get<std::uint64_t>();
      for (const auto& [k, v] : obj.items()) {
        bool fixed = false;
        for (const char* f : kFixedColumns) fixed = fixed || k == f;
        if (!fixed && !v.is_null()) r.metrics[k] = json_to_real(v);
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, std::string("parse_records: ") + e.what());
  }
  return out;
}

}  // namespace

bool operator==(const TrialRecord& a, const TrialRecord& b) {
  return a.experiment == b.experiment && a.dim == b.dim && a.epsilon == b.epsilon && a.n_samples == b.n_samples &&
         a.trial_index == b.trial_index && a.seed == b.seed && a.metrics == b.metrics;
}

Format parse_format(const std::string& tag) {
  if (tag == "csv") return Format::Csv;
  if (tag == "json") return Format::Json;
  fail(ErrorCode::InvalidArgument, "unknown format '" + tag + "' (csv | json)");
}

void emit(std::ostream& out, std::span<const TrialRecord> records, Format format) {
  require(!records.empty(), "emit: no records");
  const auto names = metric_union(records);
  if (format == Format::Csv) emit_csv(out, records, names);
  else emit_json(out, records, names);
}

void emit(const std::string& path, std::span<const TrialRecord> records, Format format) {
  require(!records.empty(), "emit: no records");
  // Render first so a refused record never leaves a partial file behind.
  std::ostringstream buf;
  emit(buf, records, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "emit: cannot open " + path + " for writing");
  out << buf.str();
  out.flush();
  if (!out) fail(ErrorCode::Io, "emit: write failed for " + path);
}

std::vector<TrialRecord> parse_records(std::istream& in, Format format) {
  return format == Format::Csv ? parse_csv(in) : parse_json(in);
}

bool operator==(const RunManifest& a, const RunManifest& b) {
  return a.tool_version == b.tool_version && a.subcommand == b.subcommand && a.master_seed == b.master_seed &&
         a.config == b.config && a.parameters == b.parameters && a.outputs == b.outputs;
}

std::string to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool_version"] = m.tool_version;
  j["subcommand"] = m.subcommand;
  j["master_seed"] = m.master_seed;
  j["config"] = m.config ? nlohmann::ordered_json::parse(to_json(*m.config)) : nlohmann::ordered_json();
  j["parameters"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.parameters) j["parameters"][k] = v;
  j["outputs"] = m.outputs;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (!j.at("config").is_null()) m.config = config_from_json(j.at("config").dump());
    for (const auto& [k, v] : j.at("parameters").items()) m.parameters[k] = v.get<std::string>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("manifest_from_json: ") + e.what());
  }
}

std::string manifest_path(const std::string& output_path) { return output_path + ".manifest.json"; }

std::uint64_t default_master_seed(std::uint64_t fallback) {
  const char* env = std::getenv("ROBCOV_SEED");
  if (!env || !*env) return fallback;
  const std::string s(env);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorCode::InvalidArgument, "ROBCOV_SEED='" + s + "' is not a decimal 64-bit integer");
  return v;
}

void write_run(const RunResult& run, const std::string& path, Format format) {
  emit(path, run.records, format);
  RunManifest m = run.manifest;
  m.outputs = {path};
  m.parameters["format"] = format == Format::Csv ? "csv" : "json";
  const std::string mpath = manifest_path(path);
  std::ofstream out(mpath, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "write_run: cannot open " + mpath + " for writing");
  out << to_json(m);
  out.flush();
  if (!out) fail(ErrorCode::Io, "write_run: write failed for " + mpath);
}

std::string format_value(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, p);
  if (std::isfinite(x) && s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

}  // namespace robcov
