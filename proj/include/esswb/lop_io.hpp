#pragma once

#include <filesystem>
#include <iosfwd>

#include "esswb/operator.hpp"

namespace esswb {

/// ".lop" operator container: a single-line JSON header
///   {"magic":"LOP1","ell":l,"d":d,"dtype":"f64","layout":"row-major",
///    "channel_independent":bool}\n
/// followed by little-endian f64 values: the full (l*d)^2 matrix in row-major
/// order, or, when channel_independent, d consecutive row-major l x l channel
/// matrices.
void write_lop(std::ostream& out, const CausalOperator& op);
void write_lop(const std::filesystem::path& path, const CausalOperator& op);

/// Throws ParseError (with byte offset) on malformed containers. Stored
/// operators must satisfy causality within `causality_tol`.
CausalOperator read_lop(std::istream& in, double causality_tol = 0.0);
CausalOperator read_lop(const std::filesystem::path& path, double causality_tol = 0.0);

/// Largest matrix side accepted by the CSV import/export.
inline constexpr Index kMaxCsvSide = 4096;

/// Plain comma-separated rows, full double precision.
void write_csv_matrix(std::ostream& out, const Eigen::Ref<const Matrix>& m);
void write_csv_matrix(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& m);
Matrix read_csv_matrix(std::istream& in);
Matrix read_csv_matrix(const std::filesystem::path& path);

}  // namespace esswb
