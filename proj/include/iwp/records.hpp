/**
 * @file records.hpp
 * @brief File formats shared by the simulator, the fitters and the CLI.
 *
 * Count records (JSON):
 *   {"seed": 42, "total_pairs": 100000,
 *    "labels": ["H","V","D","A","R","L"],
 *    "counts": [[...6...], ... 6 rows ...]}      two photons, [A][B]
 *   {"seed": 42, "total_pairs": 10000, "labels": [...], "counts": [...6...]}
 *                                                  one photon
 * Labels may come in any order; they are mapped back onto H,V,D,A,R,L.
 *
 * Single-qubit count CSV: header "label,count", one row per projector.
 * Calibration CSV: header "s_mm,theta_deg".
 * Polarimetry CSV: "in_s1,in_s2,in_s3,out_s1,out_s2,out_s3" (out_s0 optional, first).
 * Length-scan CSV: "length_mm,p_H,p_V,p_D,p_A"; empty fields mark a missing pair.
 */

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "iwp/characterization.hpp"
#include "iwp/fabrication.hpp"
#include "iwp/qst_device.hpp"

namespace iwp {

/// Malformed input file or schema violation.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const CoincidenceRecord& rec);
nlohmann::json to_json(const SingleCountRecord& rec);

using CountRecord = std::variant<SingleCountRecord, CoincidenceRecord>;

/// Dispatches on the shape of "counts". Throws FormatError.
CountRecord count_record_from_json(const nlohmann::json& j);
CoincidenceRecord coincidence_record_from_json(const nlohmann::json& j);
SingleCountRecord single_record_from_json(const nlohmann::json& j);

/// Simple comma-separated table with a header row. Throws FormatError.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(std::istream& is);

SingleCountRecord single_record_from_csv(const CsvTable& t);
std::vector<CalibrationSample> calibration_samples_from_csv(const CsvTable& t);
std::vector<PolarimetrySample> polarimetry_samples_from_csv(const CsvTable& t);
std::vector<LengthScanSample> scan_samples_from_csv(const CsvTable& t);

}  // namespace iwp
