#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esswb/operator.hpp"
#include "esswb/realization.hpp"

namespace esswb {

enum class FeaturizerKind { kLA, kGLA, kWLA, kSA, kS6, kGLAS6 };

std::string to_string(FeaturizerKind kind);
/// Accepts "LA", "GLA", "WLA", "SA", "S6", "GLA-S6" (case-insensitive).
FeaturizerKind parse_featurizer_kind(const std::string& s);

/// Rank of the low-rank gate projection W_{A_1} (16 x d).
inline constexpr Index kGateRank = 16;

struct FeaturizerConfig {
  FeaturizerKind kind = FeaturizerKind::kGLA;
  Index width = 128;            // d
  Index heads = 8;              // h
  Index state_expansion = 16;   // n, S6 only
  double beta = 16.0;           // GLA / WLA gate exponent 1/beta
  double alpha = 1000.0;        // GLA-S6 normalization
  Index k_expansion = 1;        // per-head state width k*d/h
  std::optional<bool> rope_enabled;  // default: on for LA and SA
  double rope_base = 10000.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the violated constraint.
  void validate() const;

  Index head_dim() const { return width / heads; }
  /// Key/query width of one head, k_expansion * d / h.
  Index state_width() const { return k_expansion * head_dim(); }
  bool rope() const;
  /// Number of independent l x l operators: heads, or channels for S6.
  Index num_mixers() const;
};

nlohmann::ordered_json to_json(const FeaturizerConfig& cfg);
FeaturizerConfig featurizer_config_from_json(const nlohmann::json& j);

struct FeaturizerWeights {
  std::vector<Matrix> w_b, w_c;  // per head: state_width x d
  std::vector<Matrix> w_u;       // per head: d/h x d
  Matrix w_a1;                   // kGateRank x d (GLA, GLA-S6)
  std::vector<Matrix> w_a2;      // per head: state_width x kGateRank
  std::vector<Vector> a_logits;  // per head: state_width, WLA, zero at init
  Matrix s6_w_b, s6_w_c;         // n x d, shared over channels
  Matrix w_delta;                // d x d, row c is W_Delta^c
  Vector delta_bias;             // d
  Vector a_hat;                  // n, (1, 2, ..., n)
};

/// Gaussian projections with std 1/sqrt(d), drawn from streams keyed by
/// (seed, role, head). WLA logits start at 0; S6 A-hat is (1..n); S6 bias is
/// set so softplus(bias) is log-uniform in [1e-3, 1e-1].
FeaturizerWeights init_weights(const FeaturizerConfig& cfg);

/// Rotary encoding: pairs (2k, 2k+1) rotated by position * base^(-2k/dim).
/// Throws ShapeError for odd length.
Vector rope(const Eigen::Ref<const Vector>& x, Index position, double base = 10000.0);

/// i.i.d. standard normal l x d input, deterministic per (seed, sample).
Matrix gaussian_input(Index seq_len, Index width, std::uint64_t seed, std::uint64_t sample = 0);

/// Values path f_u(u) = W_u u for one head: l x d/h.
Matrix head_values(const FeaturizerWeights& w, Index head, const Eigen::Ref<const Matrix>& u);

/// Per-head (per-channel for S6) single-channel recurrences acting on the
/// featurized values, with diagonal A. Throws ConfigError for SA.
std::vector<LinearRecurrence> build_recurrence(const FeaturizerConfig& cfg,
                                               const FeaturizerWeights& w,
                                               const Eigen::Ref<const Matrix>& u);

/// Per-head causal softmax attention operators (diagonal kept). Throws
/// ConfigError unless kind is SA.
std::vector<CausalOperator> build_sa_operator(const FeaturizerConfig& cfg,
                                              const FeaturizerWeights& w,
                                              const Eigen::Ref<const Matrix>& u);

/// l x l mixing operators for any kind (unrolled recurrences or SA).
std::vector<CausalOperator> build_operators(const FeaturizerConfig& cfg,
                                            const FeaturizerWeights& w,
                                            const Eigen::Ref<const Matrix>& u);

/// Spectra of every mixer, using the factored path for recurrences.
std::vector<SpectrumSeries> build_spectra(const FeaturizerConfig& cfg,
                                          const FeaturizerWeights& w,
                                          const Eigen::Ref<const Matrix>& u);

struct Tss {
  double per_channel = 0.0;
  double total = 0.0;
};

/// Theoretically realizable state size at sequence index i.
Tss tss(const FeaturizerConfig& cfg, Index i);

/// lambda * mean_i ||A_i - I||_F over the non-empty A_i (rectangular A_i
/// compare against the rectangular identity).
double regularizer_value(const LinearRecurrence& rec, double lambda);

/// For i = 1..l-1, ||A_{i-1} ... A_1||_F (empty product gives ||I_{n_1}||_F).
std::vector<double> a_product_norm(const LinearRecurrence& rec);

}  // namespace esswb
