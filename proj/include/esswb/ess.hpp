#pragma once

#include <span>
#include <string>
#include <vector>

#include "esswb/operator.hpp"

namespace esswb {

enum class EssMode { kTolerance, kEntropy };

std::string to_string(EssMode mode);
EssMode parse_ess_mode(const std::string& s);  // "tolerance" | "entropy"

/// Defaults follow the reference listing: tol = 1e-4, clip = 1e-12.
struct EssSettings {
  EssMode mode = EssMode::kEntropy;
  double tol = 1e-4;
  double clip = 1e-12;
};

/// Number of singular values strictly greater than tol. Throws ArgumentError
/// when sigma is not descending, has negative entries, or tol <= 0.
Index tolerance_ess(std::span<const double> sigma, double tol = 1e-4);

struct EntropyEss {
  double value = 0.0;
  /// Set when the spectrum is empty or all zero; value is then 0 instead of
  /// the NaN the raw formula would give.
  bool empty_spectrum = false;
};

/// exp of the Shannon entropy of p = sigma / ||sigma||_1 with p clipped below
/// at clip. Ranges over [1, |sigma|] for nonzero spectra.
///
/// Note: the normalization differs per sequence index, so comparing entropy
/// values across indices of one operator can mislead; prefer several
/// tolerance-ESS curves for that.
EntropyEss entropy_ess(std::span<const double> sigma, double clip = 1e-12);

/// Metric of one spectrum under the given settings.
double ess_value(const Vector& sigma, const EssSettings& settings);

/// Per-index ESS (i = 1..l-1) of a spectrum series.
std::vector<double> ess_from_spectra(const SpectrumSeries& spectra, const EssSettings& settings);

/// Per-index ESS of an operator. Channel-independent operators are split and
/// the per-channel metrics summed; otherwise the flattened H_i is used.
std::vector<double> ess_for_operator(const CausalOperator& op, const EssSettings& settings);

/// ESS values over (layer, channel, batch, sequence index i = 1..l-1).
class EssTensor {
 public:
  EssTensor(Index layers, Index channels, Index batch, Index seq_len, EssSettings settings);

  Index layers() const { return layers_; }
  Index channels() const { return channels_; }
  Index batch() const { return batch_; }
  /// Operator sequence length l; the index axis has l-1 entries.
  Index seq_len() const { return seq_len_; }
  Index num_indices() const { return seq_len_ - 1; }
  const EssSettings& settings() const { return settings_; }
  bool empty() const { return values_.empty(); }

  /// i is the 1-based sequence index.
  double& at(Index layer, Index channel, Index b, Index i);
  double at(Index layer, Index channel, Index b, Index i) const;

  /// Fills the (layer, channel, b) slice from a length l-1 curve.
  void set_curve(Index layer, Index channel, Index b, std::span<const double> curve);

  const std::vector<double>& raw() const { return values_; }

 private:
  std::size_t offset(Index layer, Index channel, Index b, Index i) const;

  Index layers_, channels_, batch_, seq_len_;
  EssSettings settings_;
  std::vector<double> values_;
};

/// Mean over all four axes. Throws ArgumentError on an empty tensor.
double average_ess(const EssTensor& t);

/// average_ess * channels.
double total_ess(const EssTensor& t);

/// Per index: sum over channels, mean over layers and batch.
std::vector<double> total_ess_per_index(const EssTensor& t);

/// ess / tss. Throws ArgumentError when tss <= 0 and NumericalDiagnostic when
/// the ratio exceeds 1 + 1e-9.
double state_utilization(double ess, double tss);

/// Value at index floor((l-1)/2), minimized over batch and channels, averaged
/// over layers. Throws ArgumentError when l < 3.
double midpoint_min_summary(const EssTensor& t);

/// Order-fixed pairwise summation.
double pairwise_sum(std::span<const double> xs);

}  // namespace esswb
