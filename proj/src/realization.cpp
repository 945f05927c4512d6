#include "esswb/realization.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "esswb/errors.hpp"
#include "esswb/parallel.hpp"

namespace esswb {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void expect_shape(const Matrix& m, Index rows, Index cols, const char* name, Index i) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(name) + "_" + std::to_string(i) + " is " + shape_str(m) +
                     ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

// Per-index SVD of H_i with the spectrum clamp applied.
struct IndexSvd {
  Matrix u;      // thin
  Vector sigma;  // clamped, descending
  Matrix v;      // thin
  double rank_tol = 0.0;
};

IndexSvd svd_of(const Matrix& h, const std::optional<double>& rank_tol) {
  IndexSvd out;
  if (h.size() == 0) return out;
  if (!h.allFinite()) throw DataError("non-finite entries in submatrix");
  Eigen::BDCSVD<Matrix> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.v = svd.matrixV();
  out.sigma = svd.singularValues();
  const double smax = out.sigma.size() ? out.sigma(0) : 0.0;
  for (Index k = 0; k < out.sigma.size(); ++k) {
    if (out.sigma(k) < kSpectrumClampFactor * kEps * smax) out.sigma(k) = 0.0;
  }
  out.rank_tol = rank_tol ? *rank_tol : default_rank_tol(h.rows(), h.cols(), smax);
  return out;
}

// Diagonal entries of each square diagonal A_i, empty otherwise.
std::vector<std::optional<Vector>> diagonal_transitions(const LinearRecurrence& rec) {
  std::vector<std::optional<Vector>> out(rec.A.size());
  for (std::size_t k = 0; k < rec.A.size(); ++k) {
    const Matrix& a = rec.A[k];
    if (a.rows() != a.cols() || a.rows() == 0) continue;
    bool diagonal = true;
    for (Index c = 0; c < a.cols() && diagonal; ++c) {
      for (Index r = 0; r < a.rows(); ++r) {
        if (r != c && a(r, c) != 0.0) {
          diagonal = false;
          break;
        }
      }
    }
    if (diagonal) out[k] = a.diagonal();
  }
  return out;
}

Matrix apply_left(const Matrix& a, const std::optional<Vector>& diag, const Matrix& x) {
  if (diag) return diag->asDiagonal() * x;
  return a * x;
}

Matrix apply_right(const Matrix& x, const Matrix& a, const std::optional<Vector>& diag) {
  if (diag) return x * diag->asDiagonal();
  return x * a;
}

// Controllability at i+1 from the one at i: [A_i C_i, B_i].
Matrix next_controllability(const LinearRecurrence& rec,
                            const std::vector<std::optional<Vector>>& diag, Index i,
                            const Matrix& ctrl_i) {
  const Index d = rec.channel_block;
  Matrix out(rec.B[i].rows(), ctrl_i.cols() + d);
  out.leftCols(ctrl_i.cols()) = apply_left(rec.A[i], diag[i], ctrl_i);
  out.rightCols(d) = rec.B[i];
  return out;
}

// Observability at i from the one at i+1: [C_i; O_{i+1} A_i].
Matrix prev_observability(const LinearRecurrence& rec,
                          const std::vector<std::optional<Vector>>& diag, Index i,
                          const Matrix& obs_next) {
  const Index d = rec.channel_block;
  Matrix out(obs_next.rows() + d, rec.C[i].cols());
  out.topRows(d) = rec.C[i];
  out.bottomRows(obs_next.rows()) = apply_right(obs_next, rec.A[i], diag[i]);
  return out;
}

using RankPicker = std::function<Index(const IndexSvd&)>;

Realization realize_with(const CausalOperator& op, const RankPicker& pick,
                         const RealizeOptions& options) {
  const Index ell = op.seq_len();
  const Index d = op.channel_block();
  const std::size_t n_idx = static_cast<std::size_t>(std::max<Index>(ell - 1, 0));

  // Factor every H_i (i = 1..l-1) independently.
  std::vector<Matrix> obs(n_idx), ctrl(n_idx), ctrl_pinv(n_idx);
  std::vector<Index> ranks(n_idx, 0);
  std::vector<double> tols(n_idx, 0.0), bound(n_idx, 0.0), factor_err(n_idx, 0.0);
  parallel_for(n_idx, [&](std::size_t k) {
    const Index i = static_cast<Index>(k) + 1;
    const Matrix h = submatrix(op, i);
    const IndexSvd s = svd_of(h, options.rank_tol);
    const Index r = std::min<Index>(pick(s), s.sigma.size());
    ranks[k] = r;
    tols[k] = s.rank_tol;
    bound[k] = r < s.sigma.size() ? s.sigma(r) : 0.0;
    const Vector root = s.sigma.head(r).cwiseSqrt();
    obs[k] = s.u.leftCols(r) * root.asDiagonal();
    ctrl[k] = root.asDiagonal() * s.v.leftCols(r).transpose();
    // pinv(S^{1/2} V^T) = V S^{-1/2}, dropping tiny singular values.
    Vector inv = Vector::Zero(r);
    const double cutoff = r > 0 ? options.pinv_rel_cutoff * root(0) : 0.0;
    for (Index q = 0; q < r; ++q) {
      if (root(q) > cutoff) inv(q) = 1.0 / root(q);
    }
    ctrl_pinv[k] = s.v.leftCols(r) * inv.asDiagonal();
    factor_err[k] = spectral_norm(h - obs[k] * ctrl[k]);
  });

  // Assemble features; the A chain depends on consecutive controllability
  // factors and is built sequentially.
  LinearRecurrence rec;
  rec.seq_len = ell;
  rec.channel_block = d;
  rec.state_dims.assign(static_cast<std::size_t>(ell), 0);
  for (std::size_t k = 0; k < n_idx; ++k) rec.state_dims[k + 1] = ranks[k];
  rec.A.resize(ell);
  rec.B.resize(ell);
  rec.C.resize(ell);
  rec.D.resize(ell);
  for (Index i = 0; i < ell; ++i) {
    const Index n_i = rec.state_dims[i];
    const Index n_next = i + 1 < ell ? rec.state_dims[i + 1] : 0;
    rec.D[i] = op.block(i, i);
    rec.C[i] = i == 0 ? Matrix(d, 0) : Matrix(obs[i - 1].topRows(d));
    rec.B[i] = i + 1 < ell ? Matrix(ctrl[i].rightCols(d)) : Matrix(0, d);
    if (i == 0 || i + 1 >= ell) {
      rec.A[i] = Matrix::Zero(n_next, n_i);
    } else {
      rec.A[i] = ctrl[i].leftCols(d * i) * ctrl_pinv[i - 1];
    }
  }

  Realization out;
  out.recurrence = std::move(rec);
  auto& cert = out.certificate;
  cert.state_dims = out.recurrence.state_dims;
  cert.truncation_bound = bound;
  cert.rank_tol = tols;
  cert.pinv_rel_cutoff = options.pinv_rel_cutoff;
  cert.causality_guaranteed = !options.input_varying;

  const CausalOperator rebuilt = unroll(out.recurrence);
  const double norm = op.values().norm();
  const double diff = (rebuilt.values() - op.values()).norm();
  cert.relative_error = norm > 0.0 ? diff / norm : diff;
  cert.matching_loss = norm > 0.0 ? (diff * diff) / (norm * norm) : diff * diff;
  cert.factor_error = factor_err;
  cert.realized_error.assign(n_idx, 0.0);
  parallel_for(n_idx, [&](std::size_t k) {
    const Index i = static_cast<Index>(k) + 1;
    cert.realized_error[k] = spectral_norm(submatrix(op, i) - submatrix(rebuilt, i));
  });

  if (options.strict && cert.relative_error > options.strict_threshold) {
    throw RealizationFailure("realized operator deviates from source: relative error " +
                                 std::to_string(cert.relative_error),
                             cert.realized_error);
  }
  return out;
}

}  // namespace

void LinearRecurrence::validate() const {
  if (seq_len <= 0 || channel_block <= 0) throw ShapeError("l and d must be positive");
  const auto ell = static_cast<std::size_t>(seq_len);
  if (state_dims.size() != ell || A.size() != ell || B.size() != ell || C.size() != ell ||
      D.size() != ell) {
    throw ShapeError("recurrence needs exactly l entries for state_dims, A, B, C, D");
  }
  const Index d = channel_block;
  const Index n_terminal = A.back().rows();
  for (Index i = 0; i < seq_len; ++i) {
    const Index n_i = state_dims[i];
    if (n_i < 0) throw ShapeError("negative state size");
    const Index n_next = i + 1 < seq_len ? state_dims[i + 1] : n_terminal;
    expect_shape(A[i], n_next, n_i, "A", i);
    expect_shape(B[i], n_next, d, "B", i);
    expect_shape(C[i], d, n_i, "C", i);
    expect_shape(D[i], d, d, "D", i);
    if (!A[i].allFinite() || !B[i].allFinite() || !C[i].allFinite() || !D[i].allFinite()) {
      throw DataError("non-finite recurrence feature at index " + std::to_string(i));
    }
  }
}

Index LinearRecurrence::terminal_dim() const { return A.empty() ? 0 : A.back().rows(); }

CausalOperator unroll(const LinearRecurrence& rec) {
  rec.validate();
  const Index ell = rec.seq_len;
  const Index d = rec.channel_block;
  const auto diag = diagonal_transitions(rec);
  Matrix t = Matrix::Zero(ell * d, ell * d);
  for (Index j = 0; j < ell; ++j) {
    t.block(j * d, j * d, d, d) = rec.D[j];
    Matrix x = rec.B[j];  // maps u_j into s_{j+1}
    for (Index i = j + 1; i < ell; ++i) {
      t.block(i * d, j * d, d, d).noalias() = rec.C[i] * x;
      if (i + 1 < ell) x = apply_left(rec.A[i], diag[i], x);
    }
  }
  return CausalOperator(std::move(t), d);
}

Matrix simulate(const LinearRecurrence& rec, const Eigen::Ref<const Matrix>& u) {
  rec.validate();
  if (u.rows() != rec.seq_len || u.cols() != rec.channel_block) {
    throw ShapeError("input must be l x d = " + std::to_string(rec.seq_len) + "x" +
                     std::to_string(rec.channel_block) + ", got " + std::to_string(u.rows()) +
                     "x" + std::to_string(u.cols()));
  }
  Matrix y(rec.seq_len, rec.channel_block);
  Vector s = Vector::Zero(rec.state_dims.front());
  for (Index i = 0; i < rec.seq_len; ++i) {
    const Vector ui = u.row(i).transpose();
    y.row(i) = (rec.C[i] * s + rec.D[i] * ui).transpose();
    s = rec.A[i] * s + rec.B[i] * ui;
  }
  return y;
}

LinearRecurrence trivial_realize(const CausalOperator& op) {
  const Index ell = op.seq_len();
  const Index d = op.channel_block();
  LinearRecurrence rec;
  rec.seq_len = ell;
  rec.channel_block = d;
  rec.state_dims.resize(ell);
  rec.A.resize(ell);
  rec.B.resize(ell);
  rec.C.resize(ell);
  rec.D.resize(ell);
  for (Index i = 0; i < ell; ++i) {
    const Index n_i = d * i;
    rec.state_dims[i] = n_i;
    rec.D[i] = op.block(i, i);
    rec.C[i] = op.values().block(i * d, 0, d, n_i);
    if (i + 1 < ell) {
      rec.A[i] = Matrix::Zero(n_i + d, n_i);
      rec.A[i].topRows(n_i).setIdentity();
      rec.B[i] = Matrix::Zero(n_i + d, d);
      rec.B[i].bottomRows(d).setIdentity();
    } else {
      rec.A[i] = Matrix(0, n_i);
      rec.B[i] = Matrix(0, d);
    }
  }
  return rec;
}

SubmatrixFactors factor_submatrix(const CausalOperator& op, Index i, double rank_tol) {
  if (rank_tol < 0.0) throw ArgumentError("rank tolerance must be nonnegative");
  const Matrix h = submatrix(op, i);
  const IndexSvd s = svd_of(h, rank_tol);
  const Index r = count_above(s.sigma, rank_tol);
  const Vector root = s.sigma.head(r).cwiseSqrt();
  SubmatrixFactors f;
  f.observability = s.u.leftCols(r) * root.asDiagonal();
  f.controllability = root.asDiagonal() * s.v.leftCols(r).transpose();
  if (r == 0) {
    f.observability.resize(h.rows(), 0);
    f.controllability.resize(0, h.cols());
  }
  f.discarded_sigma = r < s.sigma.size() ? s.sigma(r) : 0.0;
  return f;
}

Realization minimal_realize(const CausalOperator& op, const RealizeOptions& options) {
  return realize_with(
      op, [](const IndexSvd& s) { return count_above(s.sigma, s.rank_tol); }, options);
}

Realization truncated_realize(const CausalOperator& op, const TruncationTarget& target,
                              const RealizeOptions& options) {
  if (const auto* r = std::get_if<TargetRank>(&target)) {
    if (r->rank < 0) throw ArgumentError("target rank must be nonnegative");
    const Index cap = r->rank;
    return realize_with(
        op,
        [cap](const IndexSvd& s) { return std::min(cap, count_above(s.sigma, s.rank_tol)); },
        options);
  }
  const double tol = std::get<TargetTolerance>(target).tol;
  if (!(tol > 0.0)) throw ArgumentError("truncation tolerance must be positive");
  return realize_with(op, [tol](const IndexSvd& s) { return count_above(s.sigma, tol); },
                      options);
}

Matrix controllability(const LinearRecurrence& rec, Index i) {
  if (i < 1 || i > rec.seq_len - 1) throw RangeError("controllability index out of range");
  rec.validate();
  const auto diag = diagonal_transitions(rec);
  Matrix out = Matrix(rec.B[0]);
  for (Index k = 1; k < i; ++k) out = next_controllability(rec, diag, k, out);
  return out;
}

Matrix observability(const LinearRecurrence& rec, Index i) {
  if (i < 1 || i > rec.seq_len - 1) throw RangeError("observability index out of range");
  rec.validate();
  const auto diag = diagonal_transitions(rec);
  Matrix out = rec.C[rec.seq_len - 1];
  for (Index k = rec.seq_len - 2; k >= i; --k) out = prev_observability(rec, diag, k, out);
  return out;
}

SpectrumSeries spectrum_series(const LinearRecurrence& rec) {
  rec.validate();
  const Index ell = rec.seq_len;
  const Index d = rec.channel_block;
  const Index max_state = *std::max_element(rec.state_dims.begin(), rec.state_dims.end());
  // Large states gain nothing from factoring; go through the operator.
  if (2 * max_state >= d * ell) return spectrum_series(unroll(rec));

  const auto diag = diagonal_transitions(rec);
  const std::size_t n_idx = static_cast<std::size_t>(std::max<Index>(ell - 1, 0));
  std::vector<Matrix> ctrl(n_idx), obs(n_idx);
  if (n_idx > 0) {
    ctrl[0] = rec.B[0];
    for (Index i = 2; i < ell; ++i) ctrl[i - 1] = next_controllability(rec, diag, i - 1, ctrl[i - 2]);
    obs[n_idx - 1] = rec.C[ell - 1];
    for (Index i = ell - 2; i >= 1; --i) obs[i - 1] = prev_observability(rec, diag, i, obs[i]);
  }

  SpectrumSeries out;
  out.seq_len = ell;
  out.channel_block = d;
  out.spectra.resize(n_idx);
  parallel_for(n_idx, [&](std::size_t k) {
    const Index i = static_cast<Index>(k) + 1;
    const Index full = std::min(d * (ell - i), d * i);
    const Index n_i = rec.state_dims[i];
    const Matrix& o = obs[k];
    const Matrix& c = ctrl[k];
    if (n_i >= full) {
      out.spectra[k] = singular_values(o * c);
      return;
    }
    // H_i = Q_o R_o R_c^T Q_c^T: the n_i x n_i core carries the spectrum.
    Eigen::HouseholderQR<Matrix> qo(o);
    Eigen::HouseholderQR<Matrix> qc(c.transpose());
    const Matrix ro = qo.matrixQR().topRows(n_i).triangularView<Eigen::Upper>();
    const Matrix rc = qc.matrixQR().topRows(n_i).triangularView<Eigen::Upper>();
    Vector padded = Vector::Zero(full);
    padded.head(n_i) = singular_values(ro * rc.transpose());
    out.spectra[k] = std::move(padded);
  });
  return out;
}

double spectral_norm(const Eigen::Ref<const Matrix>& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<Matrix>(m).singularValues()(0);
}

}  // namespace esswb
