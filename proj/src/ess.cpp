#include "esswb/ess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esswb/errors.hpp"

namespace esswb {

std::string to_string(EssMode mode) {
  return mode == EssMode::kTolerance ? "tolerance" : "entropy";
}

EssMode parse_ess_mode(const std::string& s) {
  if (s == "tolerance") return EssMode::kTolerance;
  if (s == "entropy") return EssMode::kEntropy;
  throw ConfigError("unknown ESS mode '" + s + "' (expected tolerance or entropy)");
}

Index tolerance_ess(std::span<const double> sigma, double tol) {
  if (!(tol > 0.0)) throw ArgumentError("tolerance must be positive");
  Index count = 0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    if (sigma[k] < 0.0 || std::isnan(sigma[k])) {
      throw ArgumentError("singular values must be nonnegative");
    }
    if (k > 0 && sigma[k] > sigma[k - 1]) {
      throw ArgumentError("singular values must be sorted descending");
    }
    if (sigma[k] > tol) ++count;
  }
  return count;
}

EntropyEss entropy_ess(std::span<const double> sigma, double clip) {
  if (!(clip > 0.0)) throw ArgumentError("clip must be positive");
  for (double s : sigma) {
    if (s < 0.0 || std::isnan(s)) throw ArgumentError("singular values must be nonnegative");
  }
  const double l1 = pairwise_sum(sigma);
  if (sigma.empty() || !(l1 > 0.0)) return {0.0, true};
  std::vector<double> terms(sigma.size());
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    const double p = std::max(sigma[k] / l1, clip);
    terms[k] = -p * std::log(p);
  }
  return {std::exp(pairwise_sum(terms)), false};
}

double ess_value(const Vector& sigma, const EssSettings& settings) {
  const std::span<const double> s(sigma.data(), static_cast<std::size_t>(sigma.size()));
  if (settings.mode == EssMode::kTolerance) {
    return static_cast<double>(tolerance_ess(s, settings.tol));
  }
  return entropy_ess(s, settings.clip).value;
}

std::vector<double> ess_from_spectra(const SpectrumSeries& spectra, const EssSettings& settings) {
  std::vector<double> out;
  out.reserve(spectra.spectra.size());
  for (const auto& s : spectra.spectra) out.push_back(ess_value(s, settings));
  return out;
}

std::vector<double> ess_for_operator(const CausalOperator& op, const EssSettings& settings) {
  if (!op.channel_independent() || op.channel_block() == 1) {
    return ess_from_spectra(spectrum_series(op), settings);
  }
  std::vector<double> total(static_cast<std::size_t>(op.seq_len() - 1), 0.0);
  for (const auto& ch : split_channels(op)) {
    const auto curve = ess_from_spectra(spectrum_series(ch), settings);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += curve[k];
  }
  return total;
}

EssTensor::EssTensor(Index layers, Index channels, Index batch, Index seq_len,
                     EssSettings settings)
    : layers_(layers),
      channels_(channels),
      batch_(batch),
      seq_len_(seq_len),
      settings_(settings) {
  if (layers < 0 || channels < 0 || batch < 0 || seq_len < 1) {
    throw ArgumentError("invalid ESS tensor dimensions");
  }
  values_.assign(static_cast<std::size_t>(layers * channels * batch * (seq_len - 1)), 0.0);
}

std::size_t EssTensor::offset(Index layer, Index channel, Index b, Index i) const {
  if (layer < 0 || layer >= layers_ || channel < 0 || channel >= channels_ || b < 0 ||
      b >= batch_ || i < 1 || i >= seq_len_) {
    throw RangeError("ESS tensor index out of range");
  }
  return static_cast<std::size_t>(((layer * channels_ + channel) * batch_ + b) * (seq_len_ - 1) +
                                   (i - 1));
}

double& EssTensor::at(Index layer, Index channel, Index b, Index i) {
  return values_[offset(layer, channel, b, i)];
}

double EssTensor::at(Index layer, Index channel, Index b, Index i) const {
  return values_[offset(layer, channel, b, i)];
}

void EssTensor::set_curve(Index layer, Index channel, Index b, std::span<const double> curve) {
  if (static_cast<Index>(curve.size()) != seq_len_ - 1) {
    throw ShapeError("ESS curve length must be l-1");
  }
  std::copy(curve.begin(), curve.end(), values_.begin() + offset(layer, channel, b, 1));
}

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

double average_ess(const EssTensor& t) {
  if (t.empty()) throw ArgumentError("average of an empty ESS tensor");
  return pairwise_sum(t.raw()) / static_cast<double>(t.raw().size());
}

double total_ess(const EssTensor& t) {
  return average_ess(t) * static_cast<double>(t.channels());
}

std::vector<double> total_ess_per_index(const EssTensor& t) {
  const Index n = t.num_indices();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  if (t.layers() == 0 || t.batch() == 0) return out;
  std::vector<double> cells;
  for (Index i = 1; i <= n; ++i) {
    cells.clear();
    for (Index l = 0; l < t.layers(); ++l) {
      for (Index b = 0; b < t.batch(); ++b) {
        std::vector<double> chans;
        for (Index c = 0; c < t.channels(); ++c) chans.push_back(t.at(l, c, b, i));
        cells.push_back(pairwise_sum(chans));
      }
    }
    out[static_cast<std::size_t>(i - 1)] = pairwise_sum(cells) / static_cast<double>(cells.size());
  }
  return out;
}

double state_utilization(double ess, double tss) {
  if (!(tss > 0.0)) throw ArgumentError("TSS must be positive");
  const double u = ess / tss;
  if (u > 1.0 + 1e-9) {
    throw NumericalDiagnostic("state utilization " + std::to_string(u) +
                              " exceeds 1: ESS is larger than the realizable state size");
  }
  return u;
}

double midpoint_min_summary(const EssTensor& t) {
  if (t.seq_len() < 3) throw ArgumentError("midpoint summary needs l >= 3");
  if (t.empty()) throw ArgumentError("midpoint summary of an empty ESS tensor");
  const Index mid = (t.seq_len() - 1) / 2;
  std::vector<double> per_layer;
  for (Index l = 0; l < t.layers(); ++l) {
    double m = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < t.channels(); ++c) {
      for (Index b = 0; b < t.batch(); ++b) m = std::min(m, t.at(l, c, b, mid));
    }
    per_layer.push_back(m);
  }
  return pairwise_sum(per_layer) / static_cast<double>(per_layer.size());
}

}  // namespace esswb
