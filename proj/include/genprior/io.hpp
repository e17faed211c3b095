#pragma once

// CSV and PGM exchange formats. Doubles are written in shortest round-trip
// form, so CSV files are lossless and byte-stable across runs.

#include "core.hpp"
#include "sampler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace genprior::io {

inline std::string format_double(double v)
{
  if (std::isnan(v))
    return "nan";
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s == "inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (s == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  if (s == "nan") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string> split(std::string_view line, char sep = ',')
{
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

/// Rows of a numeric CSV. Lines starting with '#' are skipped; the first
/// non-comment line is treated as a header if it does not parse as numbers.
struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> comments;
};

inline CsvTable read_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    if (line.front() == '#') {
      t.comments.push_back(line.substr(1));
      continue;
    }
    auto cells = split(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size() && numeric; ++i)
      numeric = parse_double(cells[i], row[i]);
    if (!numeric) {
      if (first) {
        t.header = std::move(cells);
        first = false;
        continue;
      }
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell");
    }
    first = false;
    if (!t.rows.empty() && row.size() != t.rows.front().size())
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void ensure_parent(const std::filesystem::path& path)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot write " + path.string());
  return out;
}

/// One value per line under a `value` header.
inline void write_vector_csv(const std::filesystem::path& path, const Vector& v,
                             std::string_view header = "value")
{
  auto out = open_out(path);
  out << header << '\n';
  for (Index i = 0; i < v.size(); ++i)
    out << format_double(v[i]) << '\n';
}

/// Accepts a single column or a single row.
inline Vector read_vector_csv(const std::filesystem::path& path)
{
  CsvTable t = read_csv(path);
  if (t.rows.empty())
    throw FormatError(path.string() + ": no data");
  if (t.rows.size() == 1) {
    const auto& r = t.rows.front();
    return Eigen::Map<const Vector>(r.data(), static_cast<Index>(r.size()));
  }
  if (t.rows.front().size() != 1)
    throw FormatError(path.string() + ": expected a single column or a single row");
  Vector v(static_cast<Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    v[static_cast<Index>(i)] = t.rows[i][0];
  return v;
}

inline Matrix to_matrix(const CsvTable& t)
{
  if (t.rows.empty())
    return Matrix(0, static_cast<Index>(t.header.size()));
  Matrix m(static_cast<Index>(t.rows.size()), static_cast<Index>(t.rows.front().size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.rows[r].size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = t.rows[r][c];
  return m;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                             const std::vector<std::string>& header)
{
  auto out = open_out(path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c)
      out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
}

/// Binary PGM (P5, maxval 255); values are clamped to [0, 1] then scaled.
inline void write_pgm(const std::filesystem::path& path, const Vector& image, Index height,
                      Index width)
{
  require_dim(image.size(), height * width, "write_pgm");
  auto out = open_out(path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (Index i = 0; i < image.size(); ++i) {
    double v = std::clamp(image[i], 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

struct GrayImage
{
  Vector pixels; // raster order, scaled to [0, 1]
  Index height = 0;
  Index width = 0;
};

inline GrayImage read_pgm(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + path.string());
  auto token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty())
          break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };
  if (token() != "P5")
    throw FormatError(path.string() + ": not a binary PGM (P5)");
  GrayImage img;
  int maxval = 0;
  try {
    img.width = std::stol(token());
    img.height = std::stol(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
    throw FormatError(path.string() + ": unsupported PGM geometry or maxval");
  img.pixels.resize(img.height * img.width);
  for (Index i = 0; i < img.pixels.size(); ++i) {
    char ch;
    if (!in.get(ch))
      throw FormatError(path.string() + ": truncated PGM data");
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(ch)) / maxval;
  }
  return img;
}

/// Reads a CSV vector or PGM image based on the file extension.
inline Vector read_image(const std::filesystem::path& path)
{
  if (path.extension() == ".pgm")
    return read_pgm(path).pixels;
  return read_vector_csv(path);
}

/// Image files (*.csv, *.pgm) of a directory in lexicographic order.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir)
{
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir))
    throw FormatError(dir.string() + " is not a directory");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file())
      continue;
    auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".pgm")
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Square side length when d is a perfect square, otherwise a 1 x d strip.
inline std::pair<Index, Index> infer_shape(Index d)
{
  auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(d))));
  if (side * side == d)
    return {side, side};
  return {1, d};
}

/// Columns iter, z_1..z_m, potential.
inline void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace,
                            std::size_t first_iteration)
{
  auto out = open_out(path);
  const Index m = trace.samples.cols();
  out << "iter";
  for (Index j = 0; j < m; ++j)
    out << ",z_" << (j + 1);
  out << ",potential\n";
  for (Index r = 0; r < trace.samples.rows(); ++r) {
    out << (first_iteration + static_cast<std::size_t>(r));
    for (Index j = 0; j < m; ++j)
      out << ',' << format_double(trace.samples(r, j));
    out << ',' << format_double(trace.potentials[r]) << '\n';
  }
}

inline ChainTrace read_trace_csv(const std::filesystem::path& path, double temperature)
{
  CsvTable t = read_csv(path);
  ChainTrace tr;
  tr.temperature = temperature;
  if (t.header.size() < 3 || t.header.front() != "iter" || t.header.back() != "potential")
    throw FormatError(path.string() + ": expected header iter,z_1..z_m,potential");
  const auto m = static_cast<Index>(t.header.size() - 2);
  tr.samples.resize(static_cast<Index>(t.rows.size()), m);
  tr.potentials.resize(static_cast<Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (Index j = 0; j < m; ++j)
      tr.samples(static_cast<Index>(r), j) = t.rows[r][static_cast<std::size_t>(j + 1)];
    tr.potentials[static_cast<Index>(r)] = t.rows[r].back();
  }
  return tr;
}

/// Encoder outputs per image: columns mu_1..mu_m then logvar_1..logvar_m.
/// Without recognizable headers every column is taken as a mean.
struct EncodedSet
{
  Matrix means;
  Matrix logvars;
};

inline EncodedSet read_encodings_csv(const std::filesystem::path& path)
{
  CsvTable t = read_csv(path);
  Matrix all = to_matrix(t);
  EncodedSet out;
  std::vector<Index> mu_cols, lv_cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i].rfind("mu", 0) == 0)
      mu_cols.push_back(static_cast<Index>(i));
    else if (t.header[i].rfind("logvar", 0) == 0)
      lv_cols.push_back(static_cast<Index>(i));
  }
  if (mu_cols.empty()) {
    out.means = all;
    return out;
  }
  out.means.resize(all.rows(), static_cast<Index>(mu_cols.size()));
  for (std::size_t j = 0; j < mu_cols.size(); ++j)
    out.means.col(static_cast<Index>(j)) = all.col(mu_cols[j]);
  out.logvars.resize(all.rows(), static_cast<Index>(lv_cols.size()));
  for (std::size_t j = 0; j < lv_cols.size(); ++j)
    out.logvars.col(static_cast<Index>(j)) = all.col(lv_cols[j]);
  return out;
}

} // namespace genprior::io
