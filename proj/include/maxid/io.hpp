#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace maxid {

// Wide CSV: a header row, a label column (dates, block indices, ids...),
// numeric cells elsewhere. Empty / NA / NaN cells parse to NaN.
struct CsvTable {
  std::string label_name;
  std::vector<std::string> columns;     // numeric column names
  std::vector<std::string> row_labels;  // first-column values
  Eigen::MatrixXd values;

  int col_index(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv_table(const std::string& path);
// 17 significant digits; NaN written as empty cell
void write_csv_table(const std::string& path, const CsvTable& table);

// FNV-1a 64-bit over file bytes, hex-encoded
std::string file_digest(const std::string& path);
std::string string_digest(const std::string& bytes);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::map<std::string, std::string> input_digests;   // path -> digest
  std::vector<std::string> outputs;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> notes;

  // written last by commands: presence marks a complete run
  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

std::string iso8601_now();

}  // namespace maxid
