#include "polalign/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "polalign/errors.hpp"

namespace polalign {

using nlohmann::json;

namespace {

std::vector<Label> parse_labels(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw SchemaError(std::string("missing label array '") + key + "'");
  std::vector<Label> out;
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw SchemaError(std::string("labels in '") + key + "' must be strings");
    try {
      out.push_back(parse_label(v.get<std::string>()));
    } catch (const InvalidInput& e) {
      throw SchemaError(e.what());
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = i + 1; k < out.size(); ++k) {
      if (out[i] == out[k]) throw SchemaError(std::string("repeated label in '") + key + "'");
    }
  }
  return out;
}

// Index of each canonical label inside the file's label list.
std::vector<std::size_t> permutation(const std::vector<Label>& file, std::span<const Label> canonical,
                                     const char* axis) {
  if (file.size() != canonical.size()) {
    throw SchemaError(std::string(axis) + " has " + std::to_string(file.size()) + " labels, expected " +
                      std::to_string(canonical.size()) + " for this direction");
  }
  std::vector<std::size_t> idx;
  for (Label l : canonical) {
    const auto it = std::find(file.begin(), file.end(), l);
    if (it == file.end()) throw SchemaError(std::string(axis) + " is missing label " + label_char(l));
    idx.push_back(static_cast<std::size_t>(it - file.begin()));
  }
  return idx;
}

std::optional<double> optional_number(const json& meta, const char* key) {
  if (!meta.contains(key) || meta[key].is_null()) return std::nullopt;
  if (!meta[key].is_number()) throw SchemaError(std::string("metadata field '") + key + "' must be numeric");
  const double v = meta[key].get<double>();
  if (!std::isfinite(v) || v < 0.0) throw SchemaError(std::string("metadata field '") + key + "' must be nonnegative");
  return v;
}

double round9(double x) { return std::stod(format_real(x)); }

json cell_json(const CellRecord& c) {
  json j;
  j["direction"] = std::string(direction_name(c.direction));
  j["n"] = c.n;
  j["fs"] = round9(c.fs);
  j["bg_mean"] = round9(c.bg_mean);
  j["bg_subtract"] = c.bg_subtract ? 1 : 0;
  j["samples"] = c.samples;
  j["failures"] = c.failures;
  j["mean_qber"] = c.mean_qber ? json(round9(*c.mean_qber)) : json(nullptr);
  j["std_qber"] = c.std_qber ? json(round9(*c.std_qber)) : json(nullptr);
  return j;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double to_real(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError(std::string("bad ") + what + " value '" + s + "'");
  }
}

int to_int(const std::string& s, const char* what) {
  const double v = to_real(s, what);
  if (v != std::floor(v)) throw SchemaError(std::string("bad ") + what + " value '" + s + "'");
  return static_cast<int>(v);
}

}  // namespace

CountFile parse_count_file(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("count file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("count file must be a JSON object");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
    throw SchemaError("count file lacks an integer schema_version");
  }
  CountFile out;
  out.schema_version = j["schema_version"].get<int>();
  if (out.schema_version != kCountFileSchemaVersion) {
    throw SchemaError("unsupported schema_version " + std::to_string(out.schema_version));
  }
  if (!j.contains("direction") || !j["direction"].is_string()) throw SchemaError("count file lacks a direction");
  Direction direction;
  try {
    direction = parse_direction(j["direction"].get<std::string>());
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what());
  }

  const auto rows = parse_labels(j, "row_labels");
  const auto cols = parse_labels(j, "col_labels");
  CountMatrix cm(direction);
  const auto row_idx = permutation(rows, cm.row_labels(), "row_labels");
  const auto col_idx = permutation(cols, cm.col_labels(), "col_labels");

  if (!j.contains("counts") || !j["counts"].is_array() || j["counts"].size() != rows.size()) {
    throw SchemaError("counts must be an array with one row per row label");
  }
  const json& counts = j["counts"];
  for (const auto& row : counts) {
    if (!row.is_array() || row.size() != cols.size()) throw SchemaError("each counts row needs one entry per column label");
    for (const auto& v : row) {
      if (!v.is_number()) throw SchemaError("counts must be numbers");
      const double x = v.get<double>();
      if (!std::isfinite(x) || x < 0.0 || x != std::floor(x)) throw SchemaError("counts must be nonnegative integers");
    }
  }
  for (std::size_t r = 0; r < cm.rows(); ++r) {
    for (std::size_t c = 0; c < cm.cols(); ++c) cm.set(r, c, counts[row_idx[r]][col_idx[c]].get<double>());
  }
  out.counts = cm;

  if (j.contains("metadata")) {
    const json& meta = j["metadata"];
    if (!meta.is_object()) throw SchemaError("metadata must be an object");
    out.acquisition_seconds = optional_number(meta, "acquisition_seconds");
    out.background_mean = optional_number(meta, "background_mean");
  }
  return out;
}

CountFile read_count_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open count file " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_count_file(text);
}

std::string to_json(const CountFile& file) {
  const CountMatrix& cm = file.counts;
  json j;
  j["schema_version"] = file.schema_version;
  j["direction"] = std::string(direction_name(cm.direction()));
  json rows = json::array();
  for (Label l : cm.row_labels()) rows.push_back(std::string(1, label_char(l)));
  json cols = json::array();
  for (Label l : cm.col_labels()) cols.push_back(std::string(1, label_char(l)));
  j["row_labels"] = rows;
  j["col_labels"] = cols;
  json counts = json::array();
  for (std::size_t r = 0; r < cm.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < cm.cols(); ++c) {
      const double v = cm.at(r, c);
      if (v != std::floor(v)) throw SchemaError("count files hold integral counts only");
      row.push_back(static_cast<std::int64_t>(v));
    }
    counts.push_back(row);
  }
  j["counts"] = counts;
  if (file.acquisition_seconds || file.background_mean) {
    json meta = json::object();
    if (file.acquisition_seconds) meta["acquisition_seconds"] = *file.acquisition_seconds;
    if (file.background_mean) meta["background_mean"] = *file.background_mean;
    j["metadata"] = meta;
  }
  return j.dump(2) + "\n";
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

void write_sweep_csv(std::ostream& os, const std::vector<CellRecord>& cells) {
  os << kSweepCsvHeader << '\n';
  for (const auto& c : cells) {
    os << direction_name(c.direction) << ',' << c.n << ',' << format_real(c.fs) << ',' << format_real(c.bg_mean) << ','
       << (c.bg_subtract ? 1 : 0) << ',' << c.samples << ',' << c.failures << ','
       << (c.mean_qber ? format_real(*c.mean_qber) : "") << ',' << (c.std_qber ? format_real(*c.std_qber) : "")
       << '\n';
  }
}

void write_sweep_json(std::ostream& os, const std::vector<CellRecord>& cells) {
  json arr = json::array();
  for (const auto& c : cells) arr.push_back(cell_json(c));
  json j;
  j["cells"] = arr;
  os << j.dump(2) << '\n';
}

std::vector<CellRecord> read_sweep_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSweepCsvHeader) throw SchemaError("sweep CSV header mismatch");
  std::vector<CellRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw SchemaError("sweep CSV row needs 9 fields: " + line);
    CellRecord c;
    try {
      c.direction = parse_direction(f[0]);
    } catch (const InvalidInput& e) {
      throw SchemaError(e.what());
    }
    c.n = to_int(f[1], "n");
    c.fs = to_real(f[2], "fs");
    c.bg_mean = to_real(f[3], "bg_mean");
    c.bg_subtract = to_int(f[4], "bg_subtract") != 0;
    c.samples = to_int(f[5], "samples");
    c.failures = to_int(f[6], "failures");
    if (!f[7].empty()) c.mean_qber = to_real(f[7], "mean_qber");
    if (!f[8].empty()) c.std_qber = to_real(f[8], "std_qber");
    out.push_back(c);
  }
  return out;
}

std::vector<CellRecord> read_sweep_json(std::istream& is) {
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("sweep JSON is malformed: ") + e.what());
  }
  if (!j.contains("cells") || !j["cells"].is_array()) throw SchemaError("sweep JSON lacks a cells array");
  std::vector<CellRecord> out;
  try {
    for (const auto& e : j["cells"]) {
      CellRecord c;
      c.direction = parse_direction(e.at("direction").get<std::string>());
      c.n = e.at("n").get<int>();
      c.fs = e.at("fs").get<double>();
      c.bg_mean = e.at("bg_mean").get<double>();
      c.bg_subtract = e.at("bg_subtract").get<int>() != 0;
      c.samples = e.at("samples").get<int>();
      c.failures = e.at("failures").get<int>();
      if (!e.at("mean_qber").is_null()) c.mean_qber = e.at("mean_qber").get<double>();
      if (!e.at("std_qber").is_null()) c.std_qber = e.at("std_qber").get<double>();
      out.push_back(c);
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("sweep JSON cell is malformed: ") + e.what());
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what());
  }
  return out;
}

}  // namespace polalign
