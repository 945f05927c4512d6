#include "esswb/lop_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "esswb/errors.hpp"

namespace esswb {

namespace {

constexpr std::size_t kMaxHeaderBytes = 4096;

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(const unsigned char* buf) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_lop(std::ostream& out, const CausalOperator& op) {
  nlohmann::ordered_json header;
  header["magic"] = "LOP1";
  header["ell"] = op.seq_len();
  header["d"] = op.channel_block();
  header["dtype"] = "f64";
  header["layout"] = "row-major";
  header["channel_independent"] = op.channel_independent();
  out << header.dump() << '\n';

  const Index d = op.channel_block();
  const Index ell = op.seq_len();
  const Matrix& v = op.values();
  if (op.channel_independent()) {
    for (Index a = 0; a < d; ++a) {
      for (Index i = 0; i < ell; ++i) {
        for (Index j = 0; j < ell; ++j) put_f64(out, v(i * d + a, j * d + a));
      }
    }
  } else {
    for (Index r = 0; r < v.rows(); ++r) {
      for (Index c = 0; c < v.cols(); ++c) put_f64(out, v(r, c));
    }
  }
  if (!out) throw DataError("failed writing operator container");
}

void write_lop(const std::filesystem::path& path, const CausalOperator& op) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_lop(out, op);
}

CausalOperator read_lop(std::istream& in, double causality_tol) {
  std::string line;
  std::size_t offset = 0;
  for (;;) {
    const int ch = in.get();
    if (ch == std::char_traits<char>::eof()) {
      throw ParseError("missing newline after container header", offset);
    }
    ++offset;
    if (ch == '\n') break;
    line.push_back(static_cast<char>(ch));
    if (line.size() > kMaxHeaderBytes) throw ParseError("container header too long", offset);
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!header.is_object() || !header.contains(key)) {
      throw ParseError(std::string("header missing field '") + key + "'", 0);
    }
    return header.at(key);
  };
  if (require("magic") != "LOP1") throw ParseError("bad magic, expected LOP1", 0);
  if (require("dtype") != "f64") throw ParseError("unsupported dtype, expected f64", 0);
  if (require("layout") != "row-major") throw ParseError("unsupported layout, expected row-major", 0);
  const auto& ell_j = require("ell");
  const auto& d_j = require("d");
  const auto& ci_j = require("channel_independent");
  if (!ell_j.is_number_unsigned() || !d_j.is_number_unsigned() || !ci_j.is_boolean()) {
    throw ParseError("header fields ell/d must be positive integers, channel_independent boolean", 0);
  }
  const Index ell = ell_j.get<Index>();
  const Index d = d_j.get<Index>();
  const bool channel_independent = ci_j.get<bool>();
  if (ell <= 0 || d <= 0) throw ParseError("ell and d must be positive", 0);

  const Index count = channel_independent ? d * ell * ell : (ell * d) * (ell * d);
  std::vector<unsigned char> payload(static_cast<std::size_t>(count) * 8);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != payload.size()) {
    throw ParseError("truncated payload: expected " + std::to_string(payload.size()) +
                         " bytes, found " + std::to_string(got),
                     offset + got);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes after payload", offset + payload.size());
  }

  const unsigned char* p = payload.data();
  if (channel_independent) {
    std::vector<Matrix> channels(static_cast<std::size_t>(d), Matrix(ell, ell));
    for (auto& ch : channels) {
      for (Index i = 0; i < ell; ++i) {
        for (Index j = 0; j < ell; ++j, p += 8) ch(i, j) = get_f64(p);
      }
    }
    return CausalOperator::from_channels(channels, causality_tol);
  }
  Matrix values(ell * d, ell * d);
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c, p += 8) values(r, c) = get_f64(p);
  }
  return CausalOperator(std::move(values), d, false, causality_tol);
}

CausalOperator read_lop(const std::filesystem::path& path, double causality_tol) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_lop(in, causality_tol);
}

void write_csv_matrix(std::ostream& out, const Eigen::Ref<const Matrix>& m) {
  if (m.rows() > kMaxCsvSide || m.cols() > kMaxCsvSide) {
    throw ShapeError("CSV export limited to side <= 4096");
  }
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

void write_csv_matrix(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_csv_matrix(out, m);
}

Matrix read_csv_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell =
          line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("bad CSV cell '" + cell + "'", line_start + pos);
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged CSV row", line_start);
    }
    rows.push_back(std::move(row));
    if (rows.size() > static_cast<std::size_t>(kMaxCsvSide) ||
        rows.front().size() > static_cast<std::size_t>(kMaxCsvSide)) {
      throw ShapeError("CSV import limited to side <= 4096");
    }
  }
  if (rows.empty()) return Matrix();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

Matrix read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv_matrix(in);
}

}  // namespace esswb
