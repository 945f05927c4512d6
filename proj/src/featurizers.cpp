#include "esswb/featurizers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "esswb/errors.hpp"
#include "esswb/parallel.hpp"
#include "esswb/rng.hpp"

namespace esswb {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }

// Inverse of softplus for y > 0.
double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

bool is_head_kind(FeaturizerKind k) { return k != FeaturizerKind::kS6; }

// Queries (C) and keys (B) of one head, l x state_width, RoPE applied if on.
void head_query_key(const FeaturizerConfig& cfg, const FeaturizerWeights& w, Index head,
                    const Eigen::Ref<const Matrix>& u, Matrix& q, Matrix& k) {
  q = u * w.w_c[head].transpose();
  k = u * w.w_b[head].transpose();
  if (!cfg.rope()) return;
  for (Index i = 0; i < u.rows(); ++i) {
    q.row(i) = rope(q.row(i).transpose(), i, cfg.rope_base).transpose();
    k.row(i) = rope(k.row(i).transpose(), i, cfg.rope_base).transpose();
  }
}

// Diagonal of the transition produced from input step `step` for one head.
Vector head_gate(const FeaturizerConfig& cfg, const FeaturizerWeights& w, Index head,
                 const Eigen::Ref<const Vector>& u_step) {
  const Index n = cfg.state_width();
  switch (cfg.kind) {
    case FeaturizerKind::kLA:
      return Vector::Ones(n);
    case FeaturizerKind::kWLA:
      return w.a_logits[head].unaryExpr([&](double a) { return std::pow(sigmoid(a), 1.0 / cfg.beta); });
    case FeaturizerKind::kGLA: {
      const Vector z = w.w_a2[head] * (w.w_a1 * u_step);
      return z.unaryExpr([&](double a) { return std::pow(sigmoid(a), 1.0 / cfg.beta); });
    }
    case FeaturizerKind::kGLAS6: {
      const Vector z = w.w_a2[head] * (w.w_a1 * u_step);
      Vector out(n);
      for (Index e = 0; e < n; ++e) {
        out(e) = std::exp(-(static_cast<double>(e + 1) / cfg.alpha) * softplus(z(e)));
      }
      return out;
    }
    default:
      throw ConfigError("no gate for featurizer " + to_string(cfg.kind));
  }
}

LinearRecurrence diagonal_recurrence(Index ell, Index n, const std::vector<Vector>& gates,
                                     const Matrix& keys, const Matrix& queries) {
  LinearRecurrence rec;
  rec.seq_len = ell;
  rec.channel_block = 1;
  rec.state_dims.assign(static_cast<std::size_t>(ell), n);
  rec.A.resize(ell);
  rec.B.resize(ell);
  rec.C.resize(ell);
  rec.D.resize(ell);
  for (Index i = 0; i < ell; ++i) {
    rec.C[i] = queries.row(i);
    rec.D[i] = Matrix::Constant(1, 1, queries.row(i).dot(keys.row(i)));
    if (i + 1 < ell) {
      rec.A[i] = gates[i].asDiagonal();
      rec.B[i] = keys.row(i).transpose();
    } else {
      rec.A[i] = Matrix(0, n);
      rec.B[i] = Matrix(0, 1);
    }
  }
  return rec;
}

}  // namespace

std::string to_string(FeaturizerKind kind) {
  switch (kind) {
    case FeaturizerKind::kLA: return "LA";
    case FeaturizerKind::kGLA: return "GLA";
    case FeaturizerKind::kWLA: return "WLA";
    case FeaturizerKind::kSA: return "SA";
    case FeaturizerKind::kS6: return "S6";
    case FeaturizerKind::kGLAS6: return "GLA-S6";
  }
  return "?";
}

FeaturizerKind parse_featurizer_kind(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  std::replace(u.begin(), u.end(), '_', '-');
  if (u == "LA") return FeaturizerKind::kLA;
  if (u == "GLA") return FeaturizerKind::kGLA;
  if (u == "WLA") return FeaturizerKind::kWLA;
  if (u == "SA") return FeaturizerKind::kSA;
  if (u == "S6") return FeaturizerKind::kS6;
  if (u == "GLA-S6" || u == "GLAS6") return FeaturizerKind::kGLAS6;
  throw ConfigError("unknown featurizer '" + s + "'");
}

void FeaturizerConfig::validate() const {
  if (width <= 0) throw ConfigError("width d must be positive");
  if (heads <= 0) throw ConfigError("heads h must be positive");
  if (width % heads != 0) {
    throw ConfigError("d mod h = 0 violated: " + std::to_string(width) + " mod " +
                      std::to_string(heads) + " != 0");
  }
  if (!(beta > 0.0)) throw ConfigError("beta > 0 violated");
  if (!(alpha > 0.0)) throw ConfigError("alpha > 0 violated");
  if (state_expansion < 1) throw ConfigError("n >= 1 violated");
  if (k_expansion < 1) throw ConfigError("k_expansion >= 1 violated");
  if (!(rope_base > 0.0)) throw ConfigError("rope_base > 0 violated");
  if (rope() && kind != FeaturizerKind::kS6 && state_width() % 2 != 0) {
    throw ConfigError("RoPE needs an even per-head state width, got " +
                      std::to_string(state_width()));
  }
}

bool FeaturizerConfig::rope() const {
  if (rope_enabled) return *rope_enabled;
  return kind == FeaturizerKind::kLA || kind == FeaturizerKind::kSA;
}

Index FeaturizerConfig::num_mixers() const {
  return kind == FeaturizerKind::kS6 ? width : heads;
}

nlohmann::ordered_json to_json(const FeaturizerConfig& cfg) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(cfg.kind);
  j["width"] = cfg.width;
  j["heads"] = cfg.heads;
  j["state_expansion"] = cfg.state_expansion;
  j["beta"] = cfg.beta;
  j["alpha"] = cfg.alpha;
  j["k_expansion"] = cfg.k_expansion;
  j["rope_enabled"] = cfg.rope();
  j["rope_base"] = cfg.rope_base;
  j["seed"] = cfg.seed;
  return j;
}

FeaturizerConfig featurizer_config_from_json(const nlohmann::json& j) {
  FeaturizerConfig cfg;
  try {
    if (j.contains("kind")) cfg.kind = parse_featurizer_kind(j.at("kind").get<std::string>());
    cfg.width = j.value("width", cfg.width);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.state_expansion = j.value("state_expansion", cfg.state_expansion);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.k_expansion = j.value("k_expansion", cfg.k_expansion);
    if (j.contains("rope_enabled") && !j.at("rope_enabled").is_null()) cfg.rope_enabled = j.at("rope_enabled").get<bool>();
    cfg.rope_base = j.value("rope_base", cfg.rope_base);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad featurizer config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

FeaturizerWeights init_weights(const FeaturizerConfig& cfg) {
  cfg.validate();
  const Index d = cfg.width;
  const Index h = cfg.heads;
  const Index n_head = cfg.state_width();
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  FeaturizerWeights w;

  if (is_head_kind(cfg.kind)) {
    for (Index k = 0; k < h; ++k) {
      const auto idx = static_cast<std::uint64_t>(k);
      auto eb = keyed_engine(cfg.seed, RngRole::kProjectionB, idx);
      auto ec = keyed_engine(cfg.seed, RngRole::kProjectionC, idx);
      auto eu = keyed_engine(cfg.seed, RngRole::kProjectionU, idx);
      w.w_b.push_back(gaussian_matrix(n_head, d, std, eb));
      w.w_c.push_back(gaussian_matrix(n_head, d, std, ec));
      w.w_u.push_back(gaussian_matrix(cfg.head_dim(), d, std, eu));
    }
  }
  if (cfg.kind == FeaturizerKind::kGLA || cfg.kind == FeaturizerKind::kGLAS6) {
    auto e1 = keyed_engine(cfg.seed, RngRole::kGateLowRank1);
    w.w_a1 = gaussian_matrix(kGateRank, d, std, e1);
    for (Index k = 0; k < h; ++k) {
      auto e2 = keyed_engine(cfg.seed, RngRole::kGateLowRank2, static_cast<std::uint64_t>(k));
      w.w_a2.push_back(gaussian_matrix(n_head, kGateRank, std, e2));
    }
  }
  if (cfg.kind == FeaturizerKind::kWLA) {
    for (Index k = 0; k < h; ++k) w.a_logits.push_back(Vector::Zero(n_head));
  }
  if (cfg.kind == FeaturizerKind::kS6) {
    const Index n = cfg.state_expansion;
    auto eb = keyed_engine(cfg.seed, RngRole::kS6B);
    auto ec = keyed_engine(cfg.seed, RngRole::kS6C);
    auto ed = keyed_engine(cfg.seed, RngRole::kDelta);
    auto ebias = keyed_engine(cfg.seed, RngRole::kDeltaBias);
    w.s6_w_b = gaussian_matrix(n, d, std, eb);
    w.s6_w_c = gaussian_matrix(n, d, std, ec);
    w.w_delta = gaussian_matrix(d, d, std, ed);
    std::uniform_real_distribution<double> unif(std::log(1e-3), std::log(1e-1));
    w.delta_bias.resize(d);
    for (Index c = 0; c < d; ++c) w.delta_bias(c) = softplus_inverse(std::exp(unif(ebias)));
    w.a_hat = Vector::LinSpaced(n, 1.0, static_cast<double>(n));
    // Head values are the raw channels for S6; no W_u.
  }
  return w;
}

Vector rope(const Eigen::Ref<const Vector>& x, Index position, double base) {
  const Index dim = x.size();
  if (dim % 2 != 0) throw ShapeError("RoPE needs an even-length vector");
  Vector out(dim);
  for (Index k = 0; k < dim / 2; ++k) {
    const double theta = static_cast<double>(position) *
                         std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double a = x(2 * k);
    const double b = x(2 * k + 1);
    out(2 * k) = a * c - b * s;
    out(2 * k + 1) = a * s + b * c;
  }
  return out;
}

Matrix gaussian_input(Index seq_len, Index width, std::uint64_t seed, std::uint64_t sample) {
  auto engine = keyed_engine(seed, RngRole::kGaussianInput, sample);
  return gaussian_matrix(seq_len, width, 1.0, engine);
}

Matrix head_values(const FeaturizerWeights& w, Index head, const Eigen::Ref<const Matrix>& u) {
  if (head < 0 || head >= static_cast<Index>(w.w_u.size())) throw RangeError("head out of range");
  return u * w.w_u[head].transpose();
}

std::vector<LinearRecurrence> build_recurrence(const FeaturizerConfig& cfg,
                                               const FeaturizerWeights& w,
                                               const Eigen::Ref<const Matrix>& u) {
  cfg.validate();
  if (cfg.kind == FeaturizerKind::kSA) {
    throw ConfigError("SA has no recurrent featurization; use build_sa_operator");
  }
  if (u.cols() != cfg.width || u.rows() < 1) throw ShapeError("input must be l x d");
  const Index ell = u.rows();

  std::vector<LinearRecurrence> out(static_cast<std::size_t>(cfg.num_mixers()));
  if (cfg.kind == FeaturizerKind::kS6) {
    const Index n = cfg.state_expansion;
    const Matrix keys = u * w.s6_w_b.transpose();     // l x n
    const Matrix queries = u * w.s6_w_c.transpose();  // l x n
    const Matrix pre = u * w.w_delta.transpose();     // l x d
    parallel_for(out.size(), [&](std::size_t c) {
      const auto ch = static_cast<Index>(c);
      Vector delta(ell);
      for (Index i = 0; i < ell; ++i) delta(i) = softplus(pre(i, ch) + w.delta_bias(ch));
      std::vector<Vector> gates(static_cast<std::size_t>(ell));
      for (Index m = 0; m + 1 < ell; ++m) {
        gates[m] = (-w.a_hat * delta(m + 1)).array().exp().matrix();
      }
      Matrix scaled_keys = delta.asDiagonal() * keys;
      out[c] = diagonal_recurrence(ell, n, gates, scaled_keys, queries);
    });
    return out;
  }

  parallel_for(out.size(), [&](std::size_t hk) {
    const auto head = static_cast<Index>(hk);
    Matrix q, k;
    head_query_key(cfg, w, head, u, q, k);
    std::vector<Vector> gates(static_cast<std::size_t>(ell));
    for (Index m = 0; m + 1 < ell; ++m) gates[m] = head_gate(cfg, w, head, u.row(m + 1).transpose());
    out[hk] = diagonal_recurrence(ell, cfg.state_width(), gates, k, q);
  });
  return out;
}

std::vector<CausalOperator> build_sa_operator(const FeaturizerConfig& cfg,
                                              const FeaturizerWeights& w,
                                              const Eigen::Ref<const Matrix>& u) {
  cfg.validate();
  if (cfg.kind != FeaturizerKind::kSA) throw ConfigError("build_sa_operator needs kind SA");
  if (u.cols() != cfg.width || u.rows() < 1) throw ShapeError("input must be l x d");
  const Index ell = u.rows();
  std::vector<Matrix> ops(static_cast<std::size_t>(cfg.heads));
  parallel_for(ops.size(), [&](std::size_t hk) {
    Matrix q, k;
    head_query_key(cfg, w, static_cast<Index>(hk), u, q, k);
    const Matrix scores = q * k.transpose();
    Matrix t = Matrix::Zero(ell, ell);
    for (Index i = 0; i < ell; ++i) {
      const double mx = scores.row(i).head(i + 1).maxCoeff();
      double z = 0.0;
      for (Index j = 0; j <= i; ++j) {
        t(i, j) = std::exp(scores(i, j) - mx);
        z += t(i, j);
      }
      t.row(i).head(i + 1) /= z;
    }
    ops[hk] = std::move(t);
  });
  std::vector<CausalOperator> out;
  out.reserve(ops.size());
  for (auto& m : ops) out.emplace_back(std::move(m), 1);
  return out;
}

std::vector<CausalOperator> build_operators(const FeaturizerConfig& cfg,
                                            const FeaturizerWeights& w,
                                            const Eigen::Ref<const Matrix>& u) {
  if (cfg.kind == FeaturizerKind::kSA) return build_sa_operator(cfg, w, u);
  std::vector<CausalOperator> out;
  for (const auto& rec : build_recurrence(cfg, w, u)) out.push_back(unroll(rec));
  return out;
}

std::vector<SpectrumSeries> build_spectra(const FeaturizerConfig& cfg,
                                          const FeaturizerWeights& w,
                                          const Eigen::Ref<const Matrix>& u) {
  std::vector<SpectrumSeries> out;
  if (cfg.kind == FeaturizerKind::kSA) {
    for (const auto& op : build_sa_operator(cfg, w, u)) out.push_back(spectrum_series(op));
    return out;
  }
  for (const auto& rec : build_recurrence(cfg, w, u)) out.push_back(spectrum_series(rec));
  return out;
}

Tss tss(const FeaturizerConfig& cfg, Index i) {
  cfg.validate();
  const double d = static_cast<double>(cfg.width);
  switch (cfg.kind) {
    case FeaturizerKind::kSA:
      return {static_cast<double>(i), static_cast<double>(i) * d};
    case FeaturizerKind::kS6: {
      const double n = static_cast<double>(cfg.state_expansion);
      return {n, n * d};
    }
    default: {
      const double per = static_cast<double>(cfg.state_width());
      return {per, per * d};
    }
  }
}

double regularizer_value(const LinearRecurrence& rec, double lambda) {
  if (lambda < 0.0) throw ArgumentError("regularizer strength must be nonnegative");
  std::vector<double> norms;
  for (const auto& a : rec.A) {
    if (a.size() == 0) continue;
    norms.push_back((a - Matrix::Identity(a.rows(), a.cols())).norm());
  }
  if (norms.empty() || lambda == 0.0) return 0.0;
  double sum = 0.0;
  for (double v : norms) sum += v;
  return lambda * sum / static_cast<double>(norms.size());
}

std::vector<double> a_product_norm(const LinearRecurrence& rec) {
  rec.validate();
  std::vector<double> out;
  if (rec.seq_len < 2) return out;
  const Index n1 = rec.state_dims[1];
  Matrix prod = Matrix::Identity(n1, n1);  // A_{i-1} ... A_1
  for (Index i = 1; i < rec.seq_len; ++i) {
    if (i >= 2) {
      const Matrix& a = rec.A[i - 1];
      const bool diagonal = a.rows() == a.cols() && a.isDiagonal(0.0);
      prod = diagonal ? Matrix(a.diagonal().asDiagonal() * prod) : Matrix(a * prod);
    }
    out.push_back(prod.norm());
  }
  return out;
}

}  // namespace esswb
