#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace esswb {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Materialized causal operator y = T u over a sequence of length l with
/// d channels per step. Values are (l*d) x (l*d); block (i, j) is the d x d
/// matrix weighting input step j into output step i (row-major flattening of
/// the l x d input). Immutable after construction.
///
/// Invariants checked on construction: all entries finite, every strictly
/// upper block zero (up to causality_tol), and, when channel_independent,
/// every off-diagonal entry inside each block zero.
class CausalOperator {
 public:
  CausalOperator(Matrix values, Index channel_block,
                 bool channel_independent = false, double causality_tol = 0.0);

  /// Builds a channel-independent operator from d per-channel l x l
  /// operators: T_ij[a, a] = channels[a](i, j).
  static CausalOperator from_channels(std::span<const Matrix> channels,
                                      double causality_tol = 0.0);

  Index seq_len() const { return seq_len_; }
  Index channel_block() const { return channel_block_; }
  bool channel_independent() const { return channel_independent_; }
  const Matrix& values() const { return values_; }

  /// d x d block T_ij.
  Matrix block(Index i, Index j) const;

  bool operator==(const CausalOperator& other) const;

 private:
  Matrix values_;
  Index seq_len_ = 0;
  Index channel_block_ = 1;
  bool channel_independent_ = false;
};

/// Descending singular values of every submatrix H_i, i = 1..l-1.
struct SpectrumSeries {
  Index seq_len = 0;
  Index channel_block = 1;
  std::vector<Vector> spectra;  // spectra[i - 1] holds Sigma_i

  const Vector& at(Index i) const;
};

/// Relative clamp applied to every stored spectrum: values below
/// kSpectrumClampFactor * eps * sigma_max become exactly zero.
inline constexpr double kSpectrumClampFactor = 1e2;

/// H_i = T[d*i:, :d*i], shape d(l-i) x d*i. Throws RangeError unless
/// 1 <= i <= l-1.
Matrix submatrix(const CausalOperator& op, Index i);

/// Descending singular values of an arbitrary matrix with the relative clamp
/// applied. Throws DataError on non-finite input.
Vector singular_values(const Eigen::Ref<const Matrix>& m);

/// Spectra of all H_i; per-index SVDs run in parallel, results independent of
/// the worker count.
SpectrumSeries spectrum_series(const CausalOperator& op);

/// True iff every strictly upper d x d block of `values` is zero within
/// `abs_tol`. Throws ShapeError if the matrix is not square or its side is not
/// divisible by d.
bool check_causality(const Eigen::Ref<const Matrix>& values, Index d,
                     double abs_tol = 0.0);

/// Per-channel l x l operators of a channel-independent operator. Throws
/// StructureError if the flag is false.
std::vector<CausalOperator> split_channels(const CausalOperator& op);

/// max(rows, cols) * eps * sigma_max: the exact-rank convention.
double default_rank_tol(Index rows, Index cols, double sigma_max);

/// Number of entries strictly above tol in a descending spectrum.
Index count_above(const Vector& sigma, double tol);

}  // namespace esswb
