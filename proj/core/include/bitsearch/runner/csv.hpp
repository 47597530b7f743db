#pragma once

#include "bitsearch/environment.hpp"
#include "bitsearch/pareto.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace bitsearch::runner {

/// Shortest round-trip decimal form ('.' separator, locale independent).
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws Error if absent
};

/// Comma-separated, header row, LF line endings; no quoting (fields never
/// contain commas).
void write_csv(const std::filesystem::path& path, const CsvTable& table);
/// Appends rows one at a time, flushing after each, so a run that stops
/// early leaves every completed row on disk.
class CsvStream {
 public:
  CsvStream(const std::filesystem::path& path, std::vector<std::string> header);
  void write(const std::vector<std::string>& row);

 private:
  std::filesystem::path path_;
  std::size_t width_;
  std::ofstream out_;
};

/// Throws Error naming the 1-based line of any row whose field count differs
/// from the header.
CsvTable read_csv(const std::filesystem::path& path);

std::vector<std::string> episode_csv_header(std::size_t layers, const std::vector<int>& bitwidth_set);
std::vector<std::string> episode_csv_row(const EpisodeLog& log, const std::vector<int>& bitwidth_set);

/// Long-form policy evolution: episode, layer, bits, probability.
std::vector<std::vector<std::string>> policy_csv_rows(const EpisodeLog& log, const std::vector<int>& bitwidth_set);

CsvTable points_table(const std::vector<ParetoPoint>& points);
std::vector<ParetoPoint> points_from_table(const CsvTable& table);

}  // namespace bitsearch::runner
