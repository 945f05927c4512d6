// Acceptance checks, one line per criterion:
//   acceptance <N>    run criterion N (1..10)
//   acceptance all    run every criterion
// Exit status is nonzero if any selected criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "esswb/commands.hpp"
#include "esswb/errors.hpp"
#include "esswb/ess.hpp"
#include "esswb/featurizers.hpp"
#include "esswb/realization.hpp"
#include "esswb/tasks.hpp"
#include "oracles/oracles.hpp"
#include "oracles/tasks.hpp"

namespace fs = std::filesystem;
using esswb::CausalOperator;
using esswb::EssMode;
using esswb::EssSettings;
using esswb::FeaturizerConfig;
using esswb::FeaturizerKind;
using esswb::Index;
using esswb::Matrix;
using esswb::Vector;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double rel_fro(const Matrix& a, const Matrix& b) {
  const double nb = oracle::frobenius(b);
  return nb == 0 ? oracle::frobenius(a - b) : oracle::frobenius(a - b) / nb;
}

std::vector<double> as_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Tolerance ESS at the exact-rank threshold of H_i.
Index exact_rank_ess(const Vector& s, Index rows, Index cols) {
  if (s.size() == 0) return 0;
  const double tau = esswb::default_rank_tol(rows, cols, s(0));
  return tau > 0 ? esswb::tolerance_ess(as_vec(s), tau) : 0;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  const Index ell = 16;
  double worst = 0;
  int rank_mismatch = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + trial % 2;
    const Index n = 1 + (trial / 2) % 6;
    const auto rec = oracle::random_recurrence(ell, d, oracle::constant_dims(ell, n), rng);
    const auto op = esswb::unroll(rec);
    const auto real = esswb::minimal_realize(op);
    worst = std::max(worst, rel_fro(esswb::unroll(real.recurrence).values(), op.values()));
    for (Index i = 1; i < ell; ++i) {
      if (real.certificate.state_dims[i] != oracle::rank(oracle::slice(op.values(), d, i))) ++rank_mismatch;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && rank_mismatch == 0 && secs < 30.0,
          "max relative error " + fmt(worst) + ", rank mismatches " + std::to_string(rank_mismatch) + ", " +
              fmt(secs) + " s"};
}

Outcome criterion2() {
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<int> len(2, 12), width(1, 3), dim(0, 5);
  int violations = 0, checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index ell = len(rng), d = width(rng);
    std::vector<Index> dims(static_cast<std::size_t>(ell));
    dims[0] = 0;
    for (Index i = 1; i < ell; ++i) dims[static_cast<std::size_t>(i)] = dim(rng);
    const auto rec = oracle::random_recurrence(ell, d, dims, rng);
    const auto op = esswb::unroll(rec);
    const auto series = esswb::spectrum_series(op);
    for (Index i = 1; i < ell; ++i) {
      ++checked;
      if (exact_rank_ess(series.at(i), d * (ell - i), d * i) > dims[static_cast<std::size_t>(i)]) ++violations;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(checked) + " indices"};
}

Outcome criterion3() {
  std::mt19937_64 rng(3003);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index ell = 1 + trial % 8, d = 1 + (trial / 8) % 2;
    const CausalOperator op(oracle::random_causal(ell, d, rng), d);
    const auto rec = esswb::trivial_realize(op);
    worst = std::max(worst, oracle::frobenius(esswb::unroll(rec).values() - op.values()));
  }
  return {worst == 0.0, "max Frobenius error " + fmt(worst)};
}

Outcome criterion4() {
  std::mt19937_64 rng(4004);
  double worst_excess = -std::numeric_limits<double>::infinity();
  int violations = 0, checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index ell = 6 + trial % 5, d = 1 + trial % 2;
    const CausalOperator op(oracle::random_causal(ell, d, rng), d);
    for (Index r : {1, 2, 4}) {
      const auto approx = esswb::unroll(esswb::truncated_realize(op, esswb::TargetRank{r}).recurrence);
      for (Index i = 1; i < ell; ++i) {
        const Matrix h = oracle::slice(op.values(), d, i);
        const auto sv = oracle::singular_values(h);
        const double bound = static_cast<std::size_t>(r) < sv.size() ? sv[static_cast<std::size_t>(r)] : 0.0;
        const double err = oracle::spectral_norm(h - oracle::slice(approx.values(), d, i));
        ++checked;
        worst_excess = std::max(worst_excess, err - bound);
        if (err > bound + 1e-10) ++violations;
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " of " + std::to_string(checked) +
                               " submatrices exceed the bound, worst excess " + fmt(worst_excess)};
}

Outcome criterion5() {
  std::mt19937_64 rng(5005);
  int mismatches = 0, checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + trial % 4, ell = 1 + (trial / 4) % 8;
    const Matrix t = oracle::random_siso(ell, d, rng);
    const auto flat = esswb::spectrum_series(CausalOperator(t, d, false));
    std::vector<esswb::SpectrumSeries> per_channel;
    for (const auto& ch : esswb::split_channels(CausalOperator(t, d, true))) {
      per_channel.push_back(esswb::spectrum_series(ch));
    }
    for (double tau : {1e-4, 1e-2, 1e-1}) {
      for (Index i = 1; i < ell; ++i) {
        Index sum = 0;
        for (const auto& s : per_channel) sum += esswb::tolerance_ess(as_vec(s.at(i)), tau);
        ++checked;
        if (esswb::tolerance_ess(as_vec(flat.at(i)), tau) != sum) ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over " + std::to_string(checked) + " checks"};
}

Outcome criterion6() {
  std::mt19937_64 rng(6006);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> s(static_cast<std::size_t>(1 + trial % 40));
    for (auto& x : s) x = std::pow(10.0, -10.0 * unif(rng));
    std::sort(s.begin(), s.end(), std::greater<>());
    const double e = esswb::entropy_ess(s).value;
    if (e < 1.0 - 1e-12 || e > static_cast<double>(s.size()) + 1e-9) ++failures;
    Index prev = std::numeric_limits<Index>::max();
    for (double tau = 1e-12; tau < 2.0; tau *= 2.0) {
      const Index k = esswb::tolerance_ess(s, tau);
      if (k > prev) ++failures;
      prev = k;
    }
    const std::vector<double> flat(s.size(), s[0]);
    if (std::abs(esswb::entropy_ess(flat).value - static_cast<double>(s.size())) > 1e-9) ++failures;
  }
  const bool example = esswb::tolerance_ess(std::vector<double>{1.0, 0.5, 1e-5}, 1e-4) == 2;
  return {failures == 0 && example,
          std::to_string(failures) + " property failures, definitional example " + (example ? "ok" : "wrong")};
}

Vector rotate(const Vector& x, Index pos, double base) {
  Vector y = x;
  const Index dim = x.size();
  for (Index k = 0; 2 * k < dim; ++k) {
    const double theta = static_cast<double>(pos) * std::pow(base, -2.0 * static_cast<double>(k) / dim);
    y(2 * k) = std::cos(theta) * x(2 * k) - std::sin(theta) * x(2 * k + 1);
    y(2 * k + 1) = std::sin(theta) * x(2 * k) + std::cos(theta) * x(2 * k + 1);
  }
  return y;
}

Outcome criterion7() {
  double worst_la = 0, worst_sa = 0;
  const Index ell = 16;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FeaturizerConfig cfg;
    cfg.kind = FeaturizerKind::kLA;
    cfg.width = 16;
    cfg.heads = 4;
    cfg.seed = seed;
    const auto w = esswb::init_weights(cfg);
    const Matrix u = esswb::gaussian_input(ell, cfg.width, seed);
    const auto recs = esswb::build_recurrence(cfg, w, u);
    for (Index h = 0; h < cfg.heads; ++h) {
      Matrix direct = Matrix::Zero(ell, ell);
      for (Index i = 0; i < ell; ++i) {
        const Vector q = rotate(w.w_c[h] * u.row(i).transpose(), i, cfg.rope_base);
        for (Index j = 0; j <= i; ++j) {
          direct(i, j) = q.dot(rotate(w.w_b[h] * u.row(j).transpose(), j, cfg.rope_base));
        }
      }
      worst_la = std::max(worst_la, rel_fro(esswb::unroll(recs[static_cast<std::size_t>(h)]).values(), direct));
    }

    cfg.kind = FeaturizerKind::kSA;
    const auto wsa = esswb::init_weights(cfg);
    for (const auto& op : esswb::build_sa_operator(cfg, wsa, u)) {
      for (Index i = 0; i < ell; ++i) {
        worst_sa = std::max(worst_sa, std::abs(op.values().row(i).head(i + 1).sum() - 1.0));
      }
    }
  }
  return {worst_la <= 1e-10 && worst_sa <= 1e-12,
          "LA max relative error " + fmt(worst_la) + ", SA max row-sum error " + fmt(worst_sa)};
}

Outcome criterion8() {
  int failures = 0;
  std::ostringstream seen;
  for (FeaturizerKind kind : {FeaturizerKind::kLA, FeaturizerKind::kGLA, FeaturizerKind::kWLA}) {
    for (Index k : {1, 2, 4, 8, 16}) {
      FeaturizerConfig cfg;
      cfg.kind = kind;
      cfg.width = 128;
      cfg.heads = 8;
      cfg.k_expansion = k;
      const double expected = 128.0 * 128.0 / 8.0 * static_cast<double>(k);
      for (Index i : {1, 7, 255}) {
        if (esswb::tss(cfg, i).total != expected) ++failures;
      }
      if (kind == FeaturizerKind::kLA && k == 1) seen << "LA total " << esswb::tss(cfg, 3).total;
    }
  }
  FeaturizerConfig sa;
  sa.kind = FeaturizerKind::kSA;
  sa.width = 128;
  sa.heads = 8;
  for (Index i = 1; i < 256; ++i) {
    if (esswb::tss(sa, i).per_channel != static_cast<double>(i)) ++failures;
  }
  FeaturizerConfig s6;
  s6.kind = FeaturizerKind::kS6;
  s6.width = 128;
  for (Index n : {1, 4, 16, 64}) {
    s6.state_expansion = n;
    if (esswb::tss(s6, 5).total != static_cast<double>(n * 128)) ++failures;
  }
  s6.state_expansion = 16;
  seen << ", S6 total " << esswb::tss(s6, 5).total;
  return {failures == 0, std::to_string(failures) + " formula mismatches, " + seen.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "esswb_acceptance" / name;
  fs::remove_all(p);
  return p;
}

// Seeds and grids for the initialization scans.
const std::vector<std::uint64_t> kScanSeeds{0, 1};

Outcome criterion9() {
  const nlohmann::json gla = {{"featurizers", {"GLA"}}, {"tss", {16, 256}}, {"seq_len", 256}, {"batch", 8},
                              {"seeds", kScanSeeds},   {"modes", {"entropy"}}};
  auto t0 = Clock::now();
  const auto a = esswb::run_init_scan(gla, scratch("gla"));
  const double secs_a = seconds_since(t0);
  std::map<std::pair<Index, std::uint64_t>, double> avg;
  for (const auto& cell : a.at("results")) {
    avg[{cell.at("tss").get<Index>(), cell.at("seed").get<std::uint64_t>()}] =
        cell.at("metrics")[0].at("average_ess").get<double>();
  }
  bool a_ok = secs_a < 300.0;
  std::ostringstream detail;
  for (auto seed : kScanSeeds) {
    const double lo = avg.at({16, seed}), hi = avg.at({256, seed});
    a_ok = a_ok && hi > lo;
    detail << "seed " << seed << " GLA " << fmt(lo) << " -> " << fmt(hi) << "; ";
  }
  detail << fmt(secs_a) << " s; ";

  const std::vector<double> alphas{10, 100, 1000, 10000};
  const nlohmann::json glas6 = {{"featurizers", {"GLA-S6"}}, {"tss", {16}},       {"alphas", alphas},
                                {"seq_len", 256},           {"batch", 8},        {"seeds", kScanSeeds},
                                {"modes", {"entropy"}}};
  t0 = Clock::now();
  const auto b = esswb::run_init_scan(glas6, scratch("glas6"));
  const double secs_b = seconds_since(t0);
  std::map<std::uint64_t, std::map<double, std::vector<double>>> curves;
  for (const auto& cell : b.at("results")) {
    curves[cell.at("seed").get<std::uint64_t>()][cell.at("alpha").get<double>()] =
        cell.at("metrics")[0].at("per_index_average").get<std::vector<double>>();
  }
  int pairs = 0, monotone = 0;
  for (auto& [seed, by_alpha] : curves) {
    const std::size_t len = by_alpha.at(alphas[0]).size();
    for (std::size_t i = 0; i < len; ++i) {
      bool ok = true;
      for (std::size_t k = 0; k + 1 < alphas.size(); ++k) {
        ok = ok && by_alpha.at(alphas[k + 1])[i] >= by_alpha.at(alphas[k])[i];
      }
      ++pairs;
      monotone += ok ? 1 : 0;
    }
  }
  const double frac = pairs ? static_cast<double>(monotone) / pairs : 0.0;
  const bool b_ok = frac >= 0.95 && secs_b < 300.0;
  detail << "GLA-S6 nondecreasing in alpha for " << monotone << "/" << pairs << " seed/index pairs; " << fmt(secs_b)
         << " s";
  return {a_ok && b_ok, detail.str()};
}

Outcome criterion10() {
  int bad = 0;
  std::ostringstream detail;
  for (esswb::TaskKind kind : {esswb::TaskKind::kMqar, esswb::TaskKind::kSelectiveCopy, esswb::TaskKind::kCompression}) {
    esswb::TaskConfig cfg;
    cfg.kind = kind;
    cfg.seq_len = 128;
    cfg.num_kv_pairs = 16;
    cfg.num_tokens_to_copy = 16;
    cfg.num_samples = 1000;
    cfg.seed = 10;
    int ok = 0;
    for (const auto& s : esswb::generate(cfg)) {
      switch (kind) {
        case esswb::TaskKind::kMqar: ok += oracle::mqar_oracle(s, cfg.num_kv_pairs); break;
        case esswb::TaskKind::kSelectiveCopy: ok += oracle::copy_oracle(s); break;
        case esswb::TaskKind::kCompression: ok += oracle::compression_oracle(s); break;
      }
    }
    bad += 1000 - ok;
    detail << esswb::to_string(kind) << " " << ok << "/1000; ";
  }

  struct Violation {
    esswb::TaskConfig cfg;
    std::string named;
  };
  std::vector<Violation> violations;
  {
    esswb::TaskConfig c;
    c.kind = esswb::TaskKind::kMqar;
    c.seq_len = 64;
    c.num_kv_pairs = 32;
    violations.push_back({c, "4·32 > 64"});
    c.seq_len = 63;
    c.num_kv_pairs = 16;
    violations.push_back({c, "4·16 > 63"});
  }
  {
    esswb::TaskConfig c;
    c.kind = esswb::TaskKind::kSelectiveCopy;
    c.seq_len = 64;
    c.num_tokens_to_copy = 32;
    violations.push_back({c, "2·32+1 ≥ 64"});
    c.seq_len = 33;
    c.num_tokens_to_copy = 16;
    violations.push_back({c, "2·16+1 ≥ 33"});
  }
  int rejected = 0;
  for (const auto& v : violations) {
    try {
      esswb::generate(v.cfg);
    } catch (const esswb::ConfigError& e) {
      if (std::string(e.what()).find(v.named) != std::string::npos) ++rejected;
    }
  }
  detail << rejected << "/" << violations.size() << " violating configs rejected by name";
  return {bad == 0 && rejected == static_cast<int>(violations.size()), detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  std::vector<int> selected;
  const std::string arg = argc > 1 ? argv[1] : "all";
  if (arg == "all") {
    for (const auto& [n, f] : criteria) selected.push_back(n);
  } else {
    const int n = std::atoi(arg.c_str());
    if (!criteria.count(n)) {
      std::cerr << "usage: acceptance <1..10|all>\n";
      return 2;
    }
    selected.push_back(n);
  }
  bool all_pass = true;
  for (int n : selected) {
    Outcome o;
    try {
      o = criteria.at(n)();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << "criterion " << n << (o.pass ? " PASS: " : " FAIL: ") << o.detail << std::endl;
  }
  return all_pass ? 0 : 1;
}
