#include "maxid/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "maxid/errors.hpp"

namespace maxid {

namespace {

using nlohmann::json;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" ||
         s == "NULL";
}

}  // namespace

int CsvTable::col_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1
                             : static_cast<int>(it - columns.begin());
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  auto header = split_line(line);
  if (header.size() < 2) {
    throw ParseError(path + ":1: need a label column plus data columns");
  }
  CsvTable t;
  t.label_name = trim(header[0]);
  for (size_t j = 1; j < header.size(); ++j) {
    t.columns.push_back(trim(header[j]));
  }
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected " + std::to_string(header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    }
    t.row_labels.push_back(trim(cells[0]));
    std::vector<double> row(t.columns.size());
    for (size_t j = 1; j < cells.size(); ++j) {
      const std::string cell = trim(cells[j]);
      if (is_missing(cell)) {
        row[j - 1] = std::nan("");
        continue;
      }
      try {
        size_t used = 0;
        row[j - 1] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": cannot parse '" + cell + "' as a number");
      }
    }
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(t.columns.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < t.columns.size(); ++j) {
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    }
  }
  return t;
}

void write_csv_table(const std::string& path, const CsvTable& table) {
  if (table.values.rows() !=
          static_cast<Eigen::Index>(table.row_labels.size()) ||
      table.values.cols() != static_cast<Eigen::Index>(table.columns.size())) {
    throw InvalidParameters("CSV table shape mismatch");
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f << table.label_name;
  for (const auto& c : table.columns) f << "," << c;
  f << "\n";
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    f << table.row_labels[i];
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      f << ",";
      const double v = table.values(i, j);
      if (!std::isnan(v)) f << std::setprecision(17) << v;
    }
    f << "\n";
  }
}

std::string string_digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path + " for digest");
  std::ostringstream ss;
  ss << f.rdbuf();
  return string_digest(ss.str());
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void RunManifest::write(const std::string& path) const {
  json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["version"] = version;
  j["inputs"] = input_digests;
  j["outputs"] = outputs;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["notes"] = notes;
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f << j.dump(2) << "\n";
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  RunManifest m;
  m.command = j.value("command", "");
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.version = j.value("version", "");
  if (j.contains("inputs")) {
    m.input_digests = j["inputs"].get<std::map<std::string, std::string>>();
  }
  if (j.contains("outputs")) {
    m.outputs = j["outputs"].get<std::vector<std::string>>();
  }
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  if (j.contains("notes")) {
    m.notes = j["notes"].get<std::map<std::string, std::string>>();
  }
  return m;
}

}  // namespace maxid
