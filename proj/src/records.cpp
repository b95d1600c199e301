#include "iwp/records.hpp"

#include <cmath>
#include <istream>
#include <sstream>

namespace iwp {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("cannot parse ") + what + " value '" + s + "'");
  }
}

int require_column(const CsvTable& t, const std::string& name) {
  const int c = t.column(name);
  if (c < 0) throw FormatError("missing CSV column '" + name + "'");
  return c;
}

// Permutation from file label order to canonical order.
std::array<int, 6> label_permutation(const json& j) {
  std::array<int, 6> perm{0, 1, 2, 3, 4, 5};
  if (!j.contains("labels")) return perm;
  const json& labels = j.at("labels");
  if (!labels.is_array() || labels.size() != 6) throw FormatError("'labels' must list six projectors");
  std::array<bool, 6> seen{};
  for (int i = 0; i < 6; ++i) {
    if (!labels[i].is_string()) throw FormatError("labels must be strings");
    Projector p;
    try {
      p = projector_from_string(labels[i].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
    if (seen[index_of(p)]) throw FormatError("duplicate label in 'labels'");
    seen[index_of(p)] = true;
    perm[i] = index_of(p);
  }
  return perm;
}

std::uint64_t get_count(const json& v) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw FormatError("counts must be non-negative integers");
  }
  return v.get<std::uint64_t>();
}

void check_keys(const json& j) {
  if (!j.is_object()) throw FormatError("count record must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "seed" && key != "total_pairs" && key != "labels" && key != "counts") {
      throw FormatError("unknown key '" + key + "' in count record");
    }
  }
  if (!j.contains("counts")) throw FormatError("count record has no 'counts'");
}

std::uint64_t get_u64(const json& j, const char* key) {
  if (!j.contains(key)) return 0;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw FormatError(std::string("'") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

json labels_json() {
  json l = json::array();
  for (auto p : kAllProjectors) l.push_back(std::string(to_string(p)));
  return l;
}

}  // namespace

json to_json(const CoincidenceRecord& rec) {
  json j;
  j["seed"] = rec.seed;
  j["total_pairs"] = rec.total_pairs;
  j["labels"] = labels_json();
  json rows = json::array();
  for (const auto& row : rec.counts) rows.push_back(row);
  j["counts"] = rows;
  return j;
}

json to_json(const SingleCountRecord& rec) {
  json j;
  j["seed"] = rec.seed;
  j["total_pairs"] = rec.total_events;
  j["labels"] = labels_json();
  j["counts"] = rec.counts;
  return j;
}

CountRecord count_record_from_json(const json& j) {
  check_keys(j);
  const json& c = j.at("counts");
  if (c.is_array() && !c.empty() && c[0].is_array()) return coincidence_record_from_json(j);
  return single_record_from_json(j);
}

CoincidenceRecord coincidence_record_from_json(const json& j) {
  check_keys(j);
  const auto perm = label_permutation(j);
  const json& c = j.at("counts");
  if (!c.is_array() || c.size() != 6) throw FormatError("'counts' must be a 6x6 array");
  CoincidenceRecord rec;
  for (int i = 0; i < 6; ++i) {
    if (!c[i].is_array() || c[i].size() != 6) throw FormatError("'counts' must be a 6x6 array");
    for (int k = 0; k < 6; ++k) rec.counts[perm[i]][perm[k]] = get_count(c[i][k]);
  }
  rec.seed = get_u64(j, "seed");
  rec.total_pairs = get_u64(j, "total_pairs");
  return rec;
}

SingleCountRecord single_record_from_json(const json& j) {
  check_keys(j);
  const auto perm = label_permutation(j);
  const json& c = j.at("counts");
  if (!c.is_array() || c.size() != 6) throw FormatError("single-photon 'counts' must have six entries");
  SingleCountRecord rec;
  for (int i = 0; i < 6; ++i) rec.counts[perm[i]] = get_count(c[i]);
  rec.seed = get_u64(j, "seed");
  rec.total_events = get_u64(j, "total_pairs");
  return rec;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) throw FormatError("CSV row has " + std::to_string(cells.size()) +
                                                           " fields, header has " +
                                                           std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw FormatError("empty CSV input");
  return t;
}

SingleCountRecord single_record_from_csv(const CsvTable& t) {
  const int cl = require_column(t, "label");
  const int cc = require_column(t, "count");
  SingleCountRecord rec;
  std::array<bool, 6> seen{};
  for (const auto& row : t.rows) {
    Projector p;
    try {
      p = projector_from_string(row[cl]);
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
    if (seen[index_of(p)]) throw FormatError("duplicate label " + row[cl]);
    seen[index_of(p)] = true;
    const double v = parse_double(row[cc], "count");
    if (v < 0.0 || v != std::floor(v)) throw FormatError("counts must be non-negative integers");
    rec.counts[index_of(p)] = static_cast<std::uint64_t>(v);
  }
  for (bool s : seen)
    if (!s) throw FormatError("single-qubit CSV must list all six projectors");
  rec.total_events = rec.sum();
  return rec;
}

std::vector<CalibrationSample> calibration_samples_from_csv(const CsvTable& t) {
  const int cs = require_column(t, "s_mm");
  const int ct = require_column(t, "theta_deg");
  std::vector<CalibrationSample> out;
  for (const auto& row : t.rows) {
    out.push_back({parse_double(row[cs], "s_mm"), deg_to_rad(parse_double(row[ct], "theta_deg"))});
  }
  return out;
}

std::vector<PolarimetrySample> polarimetry_samples_from_csv(const CsvTable& t) {
  const int i1 = require_column(t, "in_s1"), i2 = require_column(t, "in_s2"), i3 = require_column(t, "in_s3");
  const int o1 = require_column(t, "out_s1"), o2 = require_column(t, "out_s2"), o3 = require_column(t, "out_s3");
  const int o0 = t.column("out_s0");
  std::vector<PolarimetrySample> out;
  for (const auto& row : t.rows) {
    StokesVector in{1.0, parse_double(row[i1], "in_s1"), parse_double(row[i2], "in_s2"),
                    parse_double(row[i3], "in_s3")};
    StokesVector o{o0 >= 0 ? parse_double(row[o0], "out_s0") : 1.0, parse_double(row[o1], "out_s1"),
                   parse_double(row[o2], "out_s2"), parse_double(row[o3], "out_s3")};
    try {
      out.push_back({from_stokes(in), o});
    } catch (const std::domain_error& e) {
      throw FormatError(std::string("invalid input Stokes vector: ") + e.what());
    }
  }
  return out;
}

std::vector<LengthScanSample> scan_samples_from_csv(const CsvTable& t) {
  const int cl = require_column(t, "length_mm");
  const int ch = t.column("p_H"), cv = t.column("p_V"), cd = t.column("p_D"), ca = t.column("p_A");
  auto pair = [&](const std::vector<std::string>& row, int a, int b) -> std::optional<std::pair<double, double>> {
    if (a < 0 || b < 0 || row[a].empty() || row[b].empty()) return std::nullopt;
    return std::make_pair(parse_double(row[a], "power"), parse_double(row[b], "power"));
  };
  std::vector<LengthScanSample> out;
  for (const auto& row : t.rows) {
    LengthScanSample s;
    s.length = parse_double(row[cl], "length_mm") * 1e-3;
    s.hv = pair(row, ch, cv);
    s.da = pair(row, cd, ca);
    out.push_back(s);
  }
  return out;
}

}  // namespace iwp
