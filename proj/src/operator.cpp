#include "esswb/operator.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

#include "esswb/errors.hpp"
#include "esswb/parallel.hpp"

namespace esswb {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Absolute value test honoring the exact-zero default.
bool is_zero(double v, double tol) { return tol > 0.0 ? std::abs(v) <= tol : v == 0.0; }

}  // namespace

CausalOperator::CausalOperator(Matrix values, Index channel_block,
                               bool channel_independent, double causality_tol)
    : values_(std::move(values)),
      channel_block_(channel_block),
      channel_independent_(channel_independent) {
  if (channel_block_ <= 0) throw ShapeError("channel block must be positive");
  if (values_.rows() != values_.cols() || values_.rows() == 0 ||
      values_.rows() % channel_block_ != 0) {
    throw ShapeError("operator must be square and non-empty with side divisible by d=" +
                     std::to_string(channel_block_));
  }
  if (!values_.allFinite()) throw DataError("operator has non-finite entries");
  seq_len_ = values_.rows() / channel_block_;
  if (!check_causality(values_, channel_block_, causality_tol)) {
    throw CausalityError("operator has a nonzero strictly upper block");
  }
  if (causality_tol > 0.0) {
    // Entries accepted under the tolerance are snapped to exact zero.
    const Index d = channel_block_;
    for (Index bi = 0; bi < seq_len_; ++bi) {
      values_.block(bi * d, (bi + 1) * d, d, values_.cols() - (bi + 1) * d).setZero();
    }
  }
  if (channel_independent_) {
    const Index d = channel_block_;
    for (Index r = 0; r < values_.rows(); ++r) {
      for (Index c = 0; c < values_.cols(); ++c) {
        if (r % d != c % d && values_(r, c) != 0.0) {
          throw StructureError("channel_independent operator mixes channels at (" +
                               std::to_string(r) + ", " + std::to_string(c) + ")");
        }
      }
    }
  }
}

CausalOperator CausalOperator::from_channels(std::span<const Matrix> channels,
                                             double causality_tol) {
  if (channels.empty()) throw ShapeError("no channels given");
  const Index d = static_cast<Index>(channels.size());
  const Index ell = channels.front().rows();
  Matrix values = Matrix::Zero(ell * d, ell * d);
  for (Index a = 0; a < d; ++a) {
    const Matrix& ch = channels[static_cast<std::size_t>(a)];
    if (ch.rows() != ell || ch.cols() != ell) {
      throw ShapeError("channel operators must all be l x l");
    }
    for (Index i = 0; i < ell; ++i) {
      for (Index j = 0; j < ell; ++j) values(i * d + a, j * d + a) = ch(i, j);
    }
  }
  return CausalOperator(std::move(values), d, true, causality_tol);
}

Matrix CausalOperator::block(Index i, Index j) const {
  if (i < 0 || j < 0 || i >= seq_len_ || j >= seq_len_) {
    throw RangeError("block index out of range");
  }
  return values_.block(i * channel_block_, j * channel_block_, channel_block_,
                       channel_block_);
}

bool CausalOperator::operator==(const CausalOperator& other) const {
  return channel_block_ == other.channel_block_ &&
         channel_independent_ == other.channel_independent_ &&
         values_.rows() == other.values_.rows() && values_ == other.values_;
}

const Vector& SpectrumSeries::at(Index i) const {
  if (i < 1 || i > static_cast<Index>(spectra.size())) {
    throw RangeError("spectrum index " + std::to_string(i) + " out of range");
  }
  return spectra[static_cast<std::size_t>(i - 1)];
}

Matrix submatrix(const CausalOperator& op, Index i) {
  const Index ell = op.seq_len();
  if (i < 1 || i > ell - 1) {
    throw RangeError("submatrix index " + std::to_string(i) + " outside [1, " +
                     std::to_string(ell - 1) + "]");
  }
  const Index d = op.channel_block();
  return op.values().bottomLeftCorner(d * (ell - i), d * i);
}

Vector singular_values(const Eigen::Ref<const Matrix>& m) {
  if (m.size() == 0) return Vector();
  if (!m.allFinite()) throw DataError("non-finite entries in submatrix");
  Vector s;
  if (std::min(m.rows(), m.cols()) <= 16) {
    s = Eigen::JacobiSVD<Matrix>(m).singularValues();
  } else {
    s = Eigen::BDCSVD<Matrix>(m).singularValues();
  }
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double floor = kSpectrumClampFactor * kEps * smax;
  for (Index k = 0; k < s.size(); ++k) {
    if (s(k) < floor || s(k) < 0.0) s(k) = 0.0;
  }
  return s;
}

SpectrumSeries spectrum_series(const CausalOperator& op) {
  SpectrumSeries out;
  out.seq_len = op.seq_len();
  out.channel_block = op.channel_block();
  const Index n = std::max<Index>(op.seq_len() - 1, 0);
  out.spectra.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
    const Index i = static_cast<Index>(k) + 1;
    out.spectra[k] = singular_values(submatrix(op, i));
  });
  return out;
}

bool check_causality(const Eigen::Ref<const Matrix>& values, Index d, double abs_tol) {
  if (d <= 0 || values.rows() != values.cols() || values.rows() % d != 0) {
    throw ShapeError("causality check needs a square matrix with side divisible by d");
  }
  const Index ell = values.rows() / d;
  for (Index bi = 0; bi < ell; ++bi) {
    for (Index r = bi * d; r < (bi + 1) * d; ++r) {
      for (Index c = (bi + 1) * d; c < values.cols(); ++c) {
        if (!is_zero(values(r, c), abs_tol)) return false;
      }
    }
  }
  return true;
}

std::vector<CausalOperator> split_channels(const CausalOperator& op) {
  if (!op.channel_independent()) {
    throw StructureError("split_channels requires a channel-independent operator");
  }
  const Index d = op.channel_block();
  const Index ell = op.seq_len();
  if (d == 1) return {op};
  std::vector<CausalOperator> out;
  out.reserve(static_cast<std::size_t>(d));
  for (Index a = 0; a < d; ++a) {
    Matrix ch(ell, ell);
    for (Index i = 0; i < ell; ++i) {
      for (Index j = 0; j < ell; ++j) ch(i, j) = op.values()(i * d + a, j * d + a);
    }
    out.emplace_back(std::move(ch), 1, true);
  }
  return out;
}

double default_rank_tol(Index rows, Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) * kEps * sigma_max;
}

Index count_above(const Vector& sigma, double tol) {
  Index r = 0;
  for (Index k = 0; k < sigma.size(); ++k) {
    if (sigma(k) > tol) ++r;
  }
  return r;
}

}  // namespace esswb
