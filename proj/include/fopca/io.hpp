#ifndef FOPCA_IO_HPP_
#define FOPCA_IO_HPP_

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fopca/error.hpp"
#include "fopca/linalg.hpp"
#include "fopca/panel.hpp"
#include "fopca/pca.hpp"

namespace fopca::io {

/// Shortest representation that parses back to the same double, always with
/// a dot decimal. NaN is written as an empty field.
inline std::string format_double(double v) {
  if (std::isnan(v)) return {};
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view field, std::size_t line, std::size_t col) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    std::ostringstream os;
    os << "line " << line << ", column " << col << ": cannot parse '" << field
       << "' as a number";
    throw Error(Errc::input, os.str());
  }
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  Matrix values;
};

/// Numeric CSV. Blank lines are skipped; every row must have the same width.
inline CsvTable read_csv(std::istream &in, bool has_header) {
  CsvTable out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (has_header && out.header.empty()) {
      for (auto f : fields) out.header.push_back(trim(f));
      width = fields.size();
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw Error(Errc::input, "line " + std::to_string(lineno) + " has " +
                                   std::to_string(fields.size()) + " fields, expected " +
                                   std::to_string(width));
    }
    std::vector<double> row;
    row.reserve(width);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row.push_back(parse_double(fields[c], lineno, c + 1));
    }
    rows.push_back(std::move(row));
  }
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

inline CsvTable read_csv(const std::filesystem::path &path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::input, "cannot open " + path.string());
  return read_csv(in, has_header);
}

inline void write_csv(std::ostream &out, const Eigen::Ref<const Matrix> &m,
                      const std::vector<std::string> &header = {}) {
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline void write_csv(const std::filesystem::path &path, const Eigen::Ref<const Matrix> &m,
                      const std::vector<std::string> &header = {}) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::input, "cannot write " + path.string());
  write_csv(out, m, header);
}

/// Panel CSV: rows are units, columns are periods.
inline Panel read_panel_csv(const std::filesystem::path &path, bool has_header = false) {
  return Panel(read_csv(path, has_header).values);
}

// Binary panel: little-endian u64 N, u64 T, then N*T float64 in column-major order.
inline void write_panel_binary(const std::filesystem::path &path, const Panel &x) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::input, "cannot write " + path.string());
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(x.n_rows()),
                                 static_cast<std::uint64_t>(x.n_cols())};
  out.write(reinterpret_cast<const char *>(dims), sizeof dims);
  out.write(reinterpret_cast<const char *>(x.data().data()),
            static_cast<std::streamsize>(sizeof(double) * x.data().size()));
}

inline Panel read_panel_binary(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::input, "cannot open " + path.string());
  std::uint64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char *>(dims), sizeof dims);
  if (!in) throw Error(Errc::input, "truncated binary panel header");
  if (dims[0] == 0 || dims[1] == 0 || dims[0] > (1u << 24) || dims[1] > (1u << 24)) {
    throw Error(Errc::input, "implausible binary panel dimensions");
  }
  Matrix m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  in.read(reinterpret_cast<char *>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw Error(Errc::input, "truncated binary panel body");
  return Panel(std::move(m));
}

/// Named columns of a CSV with a header row, e.g. y,g,z outcomes.
inline std::map<std::string, Vector> read_named_columns(const std::filesystem::path &path) {
  const CsvTable t = read_csv(path, true);
  std::map<std::string, Vector> out;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    out[t.header[j]] = t.values.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

/// Writes b_hat.csv, f_hat.csv, singular_values.csv and manifest.json {N, T, R}.
inline void save_fit(const std::filesystem::path &dir, const PcaFit &fit) {
  std::filesystem::create_directories(dir);
  write_csv(dir / "b_hat.csv", fit.b_hat);
  write_csv(dir / "f_hat.csv", fit.f_hat);
  write_csv(dir / "singular_values.csv", fit.triple.singular_values);
  std::ofstream m(dir / "manifest.json");
  m << "{\"N\": " << fit.n() << ", \"T\": " << fit.t() << ", \"R\": " << fit.working_dim
    << "}\n";
}

}  // namespace fopca::io

#endif  // FOPCA_IO_HPP_
