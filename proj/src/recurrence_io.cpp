#include "esswb/recurrence_io.hpp"

#include <fstream>

#include "esswb/errors.hpp"

namespace esswb {

namespace {

nlohmann::ordered_json matrix_json(const Matrix& m) {
  auto rows = nlohmann::ordered_json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, Index rows, Index cols, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + " must be a nested array", 0);
  // An empty list stands for any zero-row shape.
  if (j.empty()) {
    if (rows != 0) throw ShapeError(where + " is empty, expected " + std::to_string(rows) + " rows");
    return Matrix(0, cols);
  }
  if (static_cast<Index>(j.size()) != rows) {
    throw ShapeError(where + " has " + std::to_string(j.size()) + " rows, expected " +
                     std::to_string(rows));
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw ShapeError(where + " row " + std::to_string(r) + " must have " +
                       std::to_string(cols) + " entries");
    }
    for (Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ParseError(where + " holds a non-numeric entry", 0);
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

}  // namespace

nlohmann::ordered_json to_json(const LinearRecurrence& rec) {
  nlohmann::ordered_json j;
  j["ell"] = rec.seq_len;
  j["d"] = rec.channel_block;
  j["state_dims"] = rec.state_dims;
  for (const char* key : {"A", "B", "C", "D"}) {
    const auto& mats = key[0] == 'A' ? rec.A : key[0] == 'B' ? rec.B : key[0] == 'C' ? rec.C : rec.D;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& m : mats) arr.push_back(matrix_json(m));
    j[key] = std::move(arr);
  }
  return j;
}

LinearRecurrence recurrence_from_json(const nlohmann::json& j) {
  LinearRecurrence rec;
  try {
    rec.seq_len = j.at("ell").get<Index>();
    rec.channel_block = j.at("d").get<Index>();
    rec.state_dims = j.at("state_dims").get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad recurrence header: ") + e.what(), 0);
  }
  const Index ell = rec.seq_len;
  const Index d = rec.channel_block;
  if (ell <= 0 || d <= 0) throw ShapeError("ell and d must be positive");
  if (static_cast<Index>(rec.state_dims.size()) != ell) {
    throw ShapeError("state_dims must list n_0..n_{l-1}");
  }
  for (const char* key : {"A", "B", "C", "D"}) {
    if (!j.contains(key) || !j.at(key).is_array() || static_cast<Index>(j.at(key).size()) != ell) {
      throw ShapeError(std::string("recurrence field ") + key + " must hold l matrices");
    }
  }
  // Terminal state size follows the last A (or B) row count.
  Index n_terminal = 0;
  {
    const auto& last_a = j.at("A").back();
    const auto& last_b = j.at("B").back();
    if (last_a.is_array() && !last_a.empty()) n_terminal = static_cast<Index>(last_a.size());
    else if (last_b.is_array() && !last_b.empty()) n_terminal = static_cast<Index>(last_b.size());
  }
  rec.A.resize(ell);
  rec.B.resize(ell);
  rec.C.resize(ell);
  rec.D.resize(ell);
  for (Index i = 0; i < ell; ++i) {
    const Index n_i = rec.state_dims[i];
    const Index n_next = i + 1 < ell ? rec.state_dims[i + 1] : n_terminal;
    const std::string idx = "[" + std::to_string(i) + "]";
    rec.A[i] = matrix_from_json(j.at("A")[i], n_next, n_i, "A" + idx);
    rec.B[i] = matrix_from_json(j.at("B")[i], n_next, d, "B" + idx);
    rec.C[i] = matrix_from_json(j.at("C")[i], d, n_i, "C" + idx);
    rec.D[i] = matrix_from_json(j.at("D")[i], d, d, "D" + idx);
  }
  rec.validate();
  return rec;
}

LinearRecurrence read_recurrence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid recurrence JSON: ") + e.what(), e.byte);
  }
  return recurrence_from_json(j);
}

void write_recurrence(const std::filesystem::path& path, const LinearRecurrence& rec) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << to_json(rec).dump() << '\n';
}

nlohmann::ordered_json to_json(const RealizationCertificate& cert) {
  nlohmann::ordered_json j;
  j["state_dims"] = cert.state_dims;
  j["relative_error"] = cert.relative_error;
  j["matching_loss"] = cert.matching_loss;
  j["truncation_bound"] = cert.truncation_bound;
  j["factor_error"] = cert.factor_error;
  j["realized_error"] = cert.realized_error;
  j["rank_tol"] = cert.rank_tol;
  j["pinv_rel_cutoff"] = cert.pinv_rel_cutoff;
  j["causality_guaranteed"] = cert.causality_guaranteed;
  return j;
}

}  // namespace esswb
