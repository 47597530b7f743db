#include "bitsearch/runner/csv.hpp"

#include "bitsearch/error.hpp"

#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

namespace bitsearch::runner {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf, end);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(fmt::format("CSV has no column '{}'", name));
}

namespace {

std::string join(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  line += '\n';
  return line;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(fmt::format("CSV line {}: '{}' is not a number", line, s));
  }
  return v;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << join(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw Error("CSV row width does not match the header");
    out << join(row);
  }
  if (!out) throw Error(fmt::format("write to '{}' failed", path.string()));
}

CsvStream::CsvStream(const std::filesystem::path& path, std::vector<std::string> header)
    : path_(path), width_(header.size()), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error(fmt::format("cannot write '{}'", path.string()));
  out_ << join(header) << std::flush;
}

void CsvStream::write(const std::vector<std::string>& row) {
  if (row.size() != width_) throw Error("CSV row width does not match the header");
  out_ << join(row) << std::flush;
  if (!out_) throw Error(fmt::format("write to '{}' failed", path_.string()));
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(fmt::format("{}: malformed row at line {}: expected {} fields, found {}", path.string(), lineno,
                              table.header.size(), fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw Error(fmt::format("{}: empty CSV", path.string()));
  return table;
}

std::vector<std::string> episode_csv_header(std::size_t layers, const std::vector<int>& bitwidth_set) {
  std::vector<std::string> h{"episode", "mean_reward", "total_reward", "terminal_reward", "state_quant", "state_acc",
                             "aborted"};
  for (std::size_t l = 0; l < layers; ++l) h.push_back(fmt::format("bits_l{}", l));
  for (std::size_t l = 0; l < layers; ++l) {
    for (int b : bitwidth_set) h.push_back(fmt::format("p_l{}_b{}", l, b));
  }
  return h;
}

std::vector<std::string> episode_csv_row(const EpisodeLog& log, const std::vector<int>& bitwidth_set) {
  std::vector<std::string> r{std::to_string(log.episode),  format_number(log.mean_reward),
                             format_number(log.total_reward), format_number(log.terminal_reward),
                             format_number(log.quant_state),  format_number(log.acc_state),
                             log.aborted ? "1" : "0"};
  const std::size_t layers = log.bits.bits.size();
  for (int b : log.bits.bits) r.push_back(std::to_string(b));
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t a = 0; a < bitwidth_set.size(); ++a) {
      // Layers skipped by an aborted episode have no distribution.
      const bool have = l < log.probs.size() && a < log.probs[l].size();
      r.push_back(have ? format_number(log.probs[l][a]) : "");
    }
  }
  return r;
}

std::vector<std::vector<std::string>> policy_csv_rows(const EpisodeLog& log, const std::vector<int>& bitwidth_set) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t l = 0; l < log.probs.size(); ++l) {
    for (std::size_t a = 0; a < bitwidth_set.size() && a < log.probs[l].size(); ++a) {
      rows.push_back({std::to_string(log.episode), std::to_string(l), std::to_string(bitwidth_set[a]),
                      format_number(log.probs[l][a])});
    }
  }
  return rows;
}

CsvTable points_table(const std::vector<ParetoPoint>& points) {
  CsvTable t;
  t.header = {"assignment", "quant", "acc"};
  for (const auto& p : points) {
    t.rows.push_back({p.assignment.to_string(), format_number(p.quant), format_number(p.acc)});
  }
  return t;
}

std::vector<ParetoPoint> points_from_table(const CsvTable& table) {
  const std::size_t ca = table.column("assignment");
  const std::size_t cq = table.column("quant");
  const std::size_t cc = table.column("acc");
  std::vector<ParetoPoint> points;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t line = i + 2;
    ParetoPoint p;
    try {
      p.assignment = QuantAssignment::parse(row[ca]);
    } catch (const Error& e) {
      throw Error(fmt::format("CSV line {}: {}", line, e.what()));
    }
    p.quant = parse_double(row[cq], line);
    p.acc = parse_double(row[cc], line);
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace bitsearch::runner
