#ifndef TGV_IO_HPP
#define TGV_IO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgv/grid.hpp"

namespace tgv {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void skipPgmWhitespace(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline int readPgmInt(std::istream& in) {
  skipPgmWhitespace(in);
  int v;
  if (!(in >> v)) throw IoError("pgm: malformed header");
  return v;
}

}  // namespace detail

// Binary PGM (P5), 8-bit or 16-bit (big-endian); intensities map linearly
// onto [0, 1].
inline ScalarField read_pgm(const std::string& path, double h_or_mode_h = -1.0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open " + path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5") throw IoError("pgm: not a binary P5 file: " + path);
  const int width = detail::readPgmInt(in);
  const int height = detail::readPgmInt(in);
  const int maxval = detail::readPgmInt(in);
  if (width < 2 || height < 2) throw IoError("pgm: image too small");
  if (maxval < 1 || maxval > 65535) throw IoError("pgm: bad maxval");
  in.get();  // single whitespace byte before raster

  const GridSpec grid =
      h_or_mode_h > 0.0 ? GridSpec(height, width, h_or_mode_h)
                        : GridSpec(height, width, GridMode::PrimalDual);
  ScalarField u(grid);
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> row(size_t(width) * bytes);
  for (int i = 0; i < height; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
    if (!in) throw IoError("pgm: truncated raster in " + path);
    for (int j = 0; j < width; ++j) {
      const unsigned v = bytes == 1
                             ? row[size_t(j)]
                             : (unsigned(row[size_t(2 * j)]) << 8) | row[size_t(2 * j + 1)];
      u(i, j) = double(v) / double(maxval);
    }
  }
  return u;
}

inline void write_pgm(const std::string& path, const ScalarField& u,
                      int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16)
    throw std::invalid_argument("write_pgm: bit depth must be 8 or 16");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot write " + path);
  const int maxval = bit_depth == 8 ? 255 : 65535;
  out << "P5\n" << u.grid.m << " " << u.grid.n << "\n" << maxval << "\n";
  for (int i = 0; i < u.grid.n; ++i)
    for (int j = 0; j < u.grid.m; ++j) {
      const double c = std::clamp(u(i, j), 0.0, 1.0);
      const unsigned v = unsigned(std::lround(c * maxval));
      if (bit_depth == 16) out.put(char((v >> 8) & 0xff));
      out.put(char(v & 0xff));
    }
  if (!out) throw IoError("pgm: write failed for " + path);
}

// CSV with a header row; cells are written with max_digits10 so a round
// trip through text reproduces the doubles exactly.
inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("csv: cannot write " + path);
  out.precision(17);
  for (size_t c = 0; c < header.size(); ++c)
    out << header[c] << (c + 1 < header.size() ? ',' : '\n');
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: row width mismatch");
    for (size_t c = 0; c < row.size(); ++c)
      out << row[c] << (c + 1 < row.size() ? ',' : '\n');
  }
  if (!out) throw IoError("csv: write failed for " + path);
}

inline std::pair<std::vector<std::string>, std::vector<std::vector<double>>>
read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: empty file " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size()) throw IoError("csv: ragged row in " + path);
    rows.push_back(std::move(row));
  }
  return {std::move(header), std::move(rows)};
}

// Weight fields as CSV: columns i, j, value.
inline void write_field_csv(const std::string& path, const ScalarField& a) {
  std::vector<std::vector<double>> rows;
  rows.reserve(size_t(a.grid.size()));
  for (int i = 0; i < a.grid.n; ++i)
    for (int j = 0; j < a.grid.m; ++j)
      rows.push_back({double(i), double(j), a(i, j)});
  write_csv(path, {"i", "j", "value"}, rows);
}

inline ScalarField read_field_csv(const std::string& path, const GridSpec& grid) {
  auto [header, rows] = read_csv(path);
  if (header != std::vector<std::string>{"i", "j", "value"})
    throw IoError("field csv: unexpected header in " + path);
  if (rows.size() != size_t(grid.size()))
    throw IoError("field csv: size mismatch in " + path);
  ScalarField a(grid);
  for (const auto& row : rows)
    a(int(row[0]), int(row[1])) = row[2];
  return a;
}

// Plain-text config: `key = value` lines grouped under `[section]` headers;
// '#' starts a comment. Keys are stored as "section.key".
class Config {
 public:
  Config() = default;

  static Config fromFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    return fromStream(in);
  }

  static Config fromStream(std::istream& in) {
    Config cfg;
    std::string line, section;
    while (std::getline(in, line)) {
      if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw IoError("config: bad line: " + line);
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      if (key.empty()) throw IoError("config: empty key in line: " + line);
      cfg.values_[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string getString(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw IoError("config: missing key " + key);
    return it->second;
  }
  std::string getString(const std::string& key, const std::string& dflt) const {
    const auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  double getDouble(const std::string& key) const {
    return std::stod(getString(key));
  }
  double getDouble(const std::string& key, double dflt) const {
    return has(key) ? getDouble(key) : dflt;
  }
  int getInt(const std::string& key) const { return std::stoi(getString(key)); }
  int getInt(const std::string& key, int dflt) const {
    return has(key) ? getInt(key) : dflt;
  }
  void set(const std::string& key, const std::string& val) { values_[key] = val; }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// One row per outer iteration of a bilevel run.
struct RunHistoryRow {
  int iteration = 0;
  double objective = 0.0;
  double f_part = 0.0;
  double reg_part = 0.0;
  double tau0 = 0.0;
  double tau1 = 0.0;
  int line_search_count = 0;
  int lower_iterations = 0;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
};

struct RunHistory {
  std::vector<RunHistoryRow> rows;

  void append(const RunHistoryRow& row) {
    if (!rows.empty() && row.iteration <= rows.back().iteration)
      throw std::invalid_argument("RunHistory: iteration indices must increase");
    rows.push_back(row);
  }

  void writeCsv(const std::string& path) const {
    std::vector<std::vector<double>> data;
    data.reserve(rows.size());
    for (const auto& r : rows)
      data.push_back({double(r.iteration), r.objective, r.f_part, r.reg_part,
                      r.tau0, r.tau1, double(r.line_search_count),
                      double(r.lower_iterations), r.psnr_db, r.ssim_val});
    write_csv(path,
              {"iteration", "objective", "f_part", "reg_part", "tau0", "tau1",
               "line_search", "lower_iters", "psnr", "ssim"},
              data);
  }
};

}  // namespace tgv

#endif
