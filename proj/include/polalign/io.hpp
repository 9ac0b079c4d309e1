#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "polalign/montecarlo.hpp"
#include "polalign/tomography.hpp"

namespace polalign {

inline constexpr int kCountFileSchemaVersion = 1;

/// JSON detection-count file.
///
///     {
///       "schema_version": 1,
///       "direction": "forward",
///       "row_labels": ["H", "V", "D", "A"],
///       "col_labels": ["H", "V", "D", "A", "R", "L"],
///       "counts": [[...6 integers...], ...4 rows...],
///       "metadata": {"acquisition_seconds": 1.0, "background_mean": 0.0}
///     }
///
/// Rows are prepared inputs and columns receiver outcomes. Forward files carry
/// the four BB84 inputs against all six outcomes and reversed files the six
/// inputs against the four BB84 outcomes; labels may appear in any order.
struct CountFile {
  int schema_version = kCountFileSchemaVersion;
  CountMatrix counts{Direction::Forward};
  std::optional<double> acquisition_seconds;
  /// Calibrated mean background counts per detector.
  std::optional<double> background_mean;
};

/// Throws SchemaError for any violation, including non-integral counts.
CountFile parse_count_file(const std::string& text);
CountFile read_count_file(const std::string& path);
/// Canonical label order, two-space indentation, trailing newline.
std::string to_json(const CountFile& file);

inline constexpr const char* kSweepCsvHeader =
    "direction,n,fs,bg_mean,bg_subtract,samples,failures,mean_qber,std_qber";

/// %.9g formatting shared by every emitter.
std::string format_real(double x);

/// One line per cell after the header; absent moments are empty fields.
void write_sweep_csv(std::ostream& os, const std::vector<CellRecord>& cells);
/// {"cells": [...]} with absent moments as null and reals rounded to the
/// same 9 significant digits as the CSV.
void write_sweep_json(std::ostream& os, const std::vector<CellRecord>& cells);
/// Throws SchemaError on a malformed header or row.
std::vector<CellRecord> read_sweep_csv(std::istream& is);
std::vector<CellRecord> read_sweep_json(std::istream& is);

}  // namespace polalign
