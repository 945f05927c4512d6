#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "esswb/operator.hpp"

namespace esswb {

/// Index-varying linear recurrence
///
///   s_{i+1} = A_i s_i + B_i u_i
///   y_i     = C_i s_i + D_i u_i,      s_0 = 0,
///
/// with A_i: n_{i+1} x n_i, B_i: n_{i+1} x d, C_i: d x n_i, D_i: d x d.
/// state_dims holds n_0..n_{l-1}; the terminal state size n_l is read off
/// A_{l-1} (usually 0). Since s_0 = 0, C_0 and A_0 never contribute.
struct LinearRecurrence {
  Index seq_len = 0;
  Index channel_block = 1;
  std::vector<Index> state_dims;
  std::vector<Matrix> A, B, C, D;

  /// Throws ShapeError on a broken shape chain, DataError on non-finite
  /// entries.
  void validate() const;

  /// n_l, the size of the state produced after the last step.
  Index terminal_dim() const;
};

/// Outcome of a realization, always attached to the realized recurrence.
struct RealizationCertificate {
  /// n*_i for i = 0..l-1 (n*_0 = 0).
  std::vector<Index> state_dims;
  /// ||unroll(result) - T||_F / ||T||_F (0 when T = 0).
  double relative_error = 0.0;
  /// Squared relative operator distance ||T* - T||_F^2 / ||T||_F^2.
  double matching_loss = 0.0;
  /// Per-index sigma_{r_i+1}(H_i), the Eckart-Young bound of the retained
  /// factorization (0 when nothing was discarded). Index i stored at i-1.
  std::vector<double> truncation_bound;
  /// Per-index rank tolerance used.
  std::vector<double> rank_tol;
  /// Per-index ||H_i - O_i C_i||_2 of the retained factors.
  std::vector<double> factor_error;
  /// Per-index ||H_i - H*_i||_2 measured on the unrolled realization.
  std::vector<double> realized_error;
  /// Singular values of C_i below this fraction of sigma_max are dropped in
  /// the pseudoinverse used to recover A_i.
  double pinv_rel_cutoff = 1e-12;
  /// False when the source operator was flagged input-varying: the realized
  /// features may then depend on future inputs.
  bool causality_guaranteed = true;
};

struct Realization {
  LinearRecurrence recurrence;
  RealizationCertificate certificate;
};

struct RealizeOptions {
  /// Absolute rank tolerance applied to every H_i. When unset, each index
  /// uses default_rank_tol(rows, cols, sigma_max).
  std::optional<double> rank_tol;
  double pinv_rel_cutoff = 1e-12;
  /// Marks the source operator as input-varying (see certificate).
  bool input_varying = false;
  /// Throw RealizationFailure when relative_error exceeds strict_threshold.
  bool strict = false;
  double strict_threshold = 1e-8;
};

/// Exactly one of a target rank r (per-index inner dimension min(r, rank))
/// or a tolerance tau (per-index inner dimension = #{sigma > tau}).
struct TargetRank {
  Index rank = 0;
};
struct TargetTolerance {
  double tol = 1e-4;
};
using TruncationTarget = std::variant<TargetRank, TargetTolerance>;

/// Operator realized by the recurrence: T_ii = D_i and, for i > j,
/// T_ij = C_i A_{i-1} ... A_{j+1} B_j.
CausalOperator unroll(const LinearRecurrence& rec);

/// Runs the recurrence on u (l x d, one row per step) and returns y (l x d).
Matrix simulate(const LinearRecurrence& rec, const Eigen::Ref<const Matrix>& u);

/// Recurrence whose state caches every past input: n_i = d*i.
LinearRecurrence trivial_realize(const CausalOperator& op);

/// Balanced SVD factorization H_i ~ O_i C_i with O = U_r S_r^{1/2},
/// C = S_r^{1/2} V_r^T, r = #{sigma > rank_tol}.
struct SubmatrixFactors {
  Matrix observability;    // d(l-i) x r
  Matrix controllability;  // r x d*i
  /// sigma_{r+1}(H_i), 0 if none was dropped.
  double discarded_sigma = 0.0;
};
SubmatrixFactors factor_submatrix(const CausalOperator& op, Index i, double rank_tol);

/// Minimal realization: n*_i = numerical rank of H_i.
Realization minimal_realize(const CausalOperator& op, const RealizeOptions& options = {});

/// Reduced-order realization. Throws ArgumentError for a negative rank or a
/// non-positive tolerance.
Realization truncated_realize(const CausalOperator& op, const TruncationTarget& target,
                              const RealizeOptions& options = {});

/// Controllability (input-to-state) matrix at step i: n_i x d*i, so that
/// s_i = C_i u_{0..i-1}.
Matrix controllability(const LinearRecurrence& rec, Index i);

/// Observability (state-to-output) matrix at step i: d(l-i) x n_i.
Matrix observability(const LinearRecurrence& rec, Index i);

/// Spectra of every H_i computed from the factorization H_i = O_i C_i
/// without materializing H_i; O(l^2 n^2) instead of O(l^4) for bounded state.
SpectrumSeries spectrum_series(const LinearRecurrence& rec);

/// Spectral norm ||m||_2.
double spectral_norm(const Eigen::Ref<const Matrix>& m);

}  // namespace esswb
