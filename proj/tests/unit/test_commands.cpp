#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "esswb/commands.hpp"
#include "esswb/errors.hpp"
#include "esswb/featurizers.hpp"
#include "esswb/lop_io.hpp"
#include "esswb/realization.hpp"
#include "esswb/recurrence_io.hpp"
#include "oracles/oracles.hpp"

namespace fs = std::filesystem;
using esswb::CausalOperator;
using esswb::Index;
using esswb::Matrix;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("esswb_cmd_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_op(const fs::path& dir, const std::string& name, const CausalOperator& op) {
  const fs::path p = dir / name;
  esswb::write_lop(p, op);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ESSWB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json small_scan(std::vector<std::string> feats, std::vector<Index> tss) {
  return {{"featurizers", feats}, {"tss", tss}, {"seq_len", 24}, {"batch", 2},
          {"seeds", {0, 1}},      {"width", 16}, {"heads", 2}};
}

}  // namespace

TEST_CASE("init-scan grows ESS with TSS and keeps LA under the rank bound") {
  const auto dir = scratch("scan");
  const auto report = esswb::run_init_scan(small_scan({"GLA", "LA"}, {8, 64}), dir);
  CHECK(report.at("tool") == "esswb");
  CHECK(report.at("version") == esswb::kToolVersion);
  CHECK(report.at("seeds") == json({0, 1}));
  CHECK(report.at("defaults").contains("alphas"));
  CHECK(fs::exists(dir / "summary.csv"));
  CHECK(fs::exists(dir / "curves.csv"));

  std::map<std::tuple<std::string, Index, std::uint64_t>, double> entropy;
  for (const auto& cell : report.at("results")) {
    const auto feat = cell.at("featurizer").get<std::string>();
    const auto tss = cell.at("tss").get<Index>();
    for (const auto& m : cell.at("metrics")) {
      if (m.at("mode") == "entropy") entropy[{feat, tss, cell.at("seed").get<std::uint64_t>()}] = m.at("average_ess");
      if (feat == "LA" && m.at("mode") == "tolerance") {
        const auto curve = m.at("per_index_average").get<std::vector<double>>();
        for (std::size_t k = 0; k < curve.size(); ++k) {
          const double i = static_cast<double>(k + 1);
          CHECK(curve[k] <= std::min({static_cast<double>(tss), i, 24.0 - i}) + 1e-12);
        }
      }
    }
  }
  for (std::uint64_t seed : {0u, 1u}) CHECK(entropy[{"GLA", 64, seed}] > entropy[{"GLA", 8, seed}]);

  // Output order follows sorted keys regardless of the listing order.
  const auto again = esswb::run_init_scan(small_scan({"LA", "GLA"}, {64, 8}), scratch("scan2"));
  CHECK(again.at("results") == report.at("results"));
}

TEST_CASE("init-scan config errors name the failing entry") {
  auto bad = small_scan({"GLA"}, {12});
  try {
    esswb::run_init_scan(bad, scratch("bad"));
    FAIL("accepted tss not divisible by d/h");
  } catch (const esswb::ConfigError& e) {
    CHECK(std::string(e.what()).find("tss") != std::string::npos);
  }
  auto empty = small_scan({"GLA"}, {});
  CHECK_THROWS_AS(esswb::run_init_scan(empty, scratch("bad2")), esswb::ConfigError);
  auto unknown = small_scan({"GLA"}, {8});
  unknown["sequence_length"] = 3;
  CHECK_THROWS_AS(esswb::run_init_scan(unknown, scratch("bad3")), esswb::ConfigError);
  auto kind = small_scan({"Transformer"}, {8});
  CHECK_THROWS_AS(esswb::run_init_scan(kind, scratch("bad4")), esswb::ConfigError);
}

TEST_CASE("ess report columns and aggregates") {
  const auto dir = scratch("ess");
  const auto id = write_op(dir, "id.lop", CausalOperator(Matrix::Identity(6, 6), 1));
  const auto report = esswb::run_ess({{"inputs", {id.string()}}, {"modes", {"tolerance"}}}, dir / "out");
  const auto csv = slurp(dir / "out" / "ess.csv");
  CHECK(csv.rfind("layer,channel,batch,seq_index,mode,tol,value\n", 0) == 0);
  const auto agg = json::parse(slurp(dir / "out" / "aggregate.json"));
  for (const char* key : {"average_ess", "total_ess", "per_index_total", "state_utilization"}) CHECK(agg.contains(key));
  for (double v : agg.at("per_index_total").get<std::vector<double>>()) CHECK(v == 0.0);
  CHECK(report.at("results").at("average_ess") == 0.0);
}

TEST_CASE("ess on channel-independent input sums channels and reports utilization") {
  const auto dir = scratch("ess_ci");
  const std::vector<Matrix> chans{oracle::shift(5), oracle::shift(5), Matrix::Identity(5, 5)};
  const auto op = CausalOperator::from_channels(chans);
  const auto p = write_op(dir, "ci.lop", op);
  const auto report =
      esswb::run_ess({{"inputs", {p.string(), p.string()}}, {"modes", {"tolerance"}}, {"tss", 2}}, dir / "out");
  const auto& res = report.at("results");
  CHECK(res.at("channel_axis") == "per-channel");
  for (double v : res.at("per_index_total").get<std::vector<double>>()) CHECK(v == 2.0);
  CHECK(res.at("average_ess").get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(res.at("state_utilization").get<double>() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("profile: flat zero for identity, dip at a reset boundary") {
  const auto dir = scratch("profile");
  const auto id = write_op(dir, "id.lop", CausalOperator(Matrix::Identity(8, 8), 1));
  const auto flat = esswb::run_profile({{"input", id.string()}}, dir / "flat");
  for (double v : flat.at("results").at("profiles")[0].at("per_index_total").get<std::vector<double>>()) {
    CHECK(v == 0.0);
  }

  Matrix reset = oracle::shift(8);
  reset(4, 3) = 0.0;  // transition into the second segment cut
  const auto p = write_op(dir, "reset.lop", CausalOperator(reset, 1));
  std::vector<std::string> labels{"a", "b", "c", ".", "d", "e", "f", "g"};
  const auto rep = esswb::run_profile({{"input", p.string()}, {"labels", labels}, {"tols", {1e-4, 1e-2}}}, dir / "dip");
  const auto& profiles = rep.at("results").at("profiles");
  REQUIRE(profiles.size() == 2);
  const auto curve = profiles[0].at("per_index_total").get<std::vector<double>>();
  for (std::size_t k = 0; k < curve.size(); ++k) CHECK(curve[k] == (k + 1 == 4 ? 0.0 : 1.0));
  const auto csv = slurp(dir / "dip" / "profile.csv");
  CHECK(csv.find("4,.,d,tolerance,1e-04,0\n") != std::string::npos);

  labels.pop_back();
  CHECK_THROWS_AS(esswb::run_profile({{"input", p.string()}, {"labels", labels}}, dir / "bad"), esswb::ConfigError);
}

TEST_CASE("exported featurizer operators re-ingest to identical reports") {
  const auto dir = scratch("export");
  auto cfg = small_scan({"GLA"}, {8});
  cfg["seeds"] = {3};
  cfg["export_dir"] = "ops";
  const auto scan = esswb::run_init_scan(cfg, dir / "scan");
  const fs::path exported = dir / "scan" / "ops" / "op_GLA_tss8_seed3_b0_m1.lop";
  REQUIRE(fs::exists(exported));

  esswb::FeaturizerConfig fc;
  fc.kind = esswb::FeaturizerKind::kGLA;
  fc.width = 16;
  fc.heads = 2;
  fc.seed = 3;
  const auto ops = esswb::build_operators(fc, esswb::init_weights(fc), esswb::gaussian_input(24, 16, 3, 0));
  CHECK(esswb::read_lop(exported) == ops[1]);

  const json ess_cfg = {{"inputs", {exported.string()}}};
  esswb::run_ess(ess_cfg, dir / "a");
  esswb::run_ess(ess_cfg, dir / "b");
  CHECK(slurp(dir / "a" / "ess.csv") == slurp(dir / "b" / "ess.csv"));
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
}

TEST_CASE("embedded config reruns bit-identically") {
  const auto dir = scratch("rerun");
  esswb::run_init_scan(small_scan({"S6", "GLA-S6"}, {8}), dir / "first");
  const auto cfg = esswb::load_config(dir / "first" / "report.json");
  esswb::run_init_scan(cfg, dir / "second");
  for (const char* f : {"summary.csv", "curves.csv"}) CHECK(slurp(dir / "first" / f) == slurp(dir / "second" / f));
  // The defaults list differs by design: the rerun sets every key explicitly.
  const auto a = json::parse(slurp(dir / "first" / "report.json"));
  const auto b = json::parse(slurp(dir / "second" / "report.json"));
  CHECK(a.at("config") == b.at("config"));
  CHECK(a.at("results").dump() == b.at("results").dump());
}

TEST_CASE("realize and reduce") {
  const auto dir = scratch("realize");
  const auto sh = write_op(dir, "shift.lop", CausalOperator(oracle::shift(5), 1));
  const auto r = esswb::run_realize({{"input", sh.string()}}, dir / "shift");
  const auto& cert = r.at("results").at("certificate");
  CHECK(cert.at("state_dims") == json({0, 1, 1, 1, 1}));
  CHECK(cert.at("matching_loss") == 0.0);
  CHECK(fs::exists(dir / "shift" / "recurrence.json"));
  CHECK(fs::exists(dir / "shift" / "certificate.json"));

  std::mt19937_64 rng(8);
  const auto rec = oracle::random_recurrence(10, 2, oracle::constant_dims(10, 3), rng);
  const auto op = esswb::unroll(rec);
  const auto p = write_op(dir, "rec.lop", op);
  const auto full = esswb::run_realize({{"input", p.string()}}, dir / "full");
  CHECK(full.at("results").at("certificate").at("matching_loss").get<double>() <= 1e-16);

  const auto dense = write_op(dir, "dense.lop", CausalOperator(oracle::random_causal(8, 1, rng), 1));
  const auto red = esswb::run_reduce({{"input", dense.string()}, {"rank", 2}}, dir / "rank2");
  const auto emitted = esswb::read_recurrence(dir / "rank2" / "recurrence.json");
  const Matrix t = esswb::read_lop(dense).values();
  const Matrix ts = esswb::unroll(emitted).values();
  const double loss = std::pow(oracle::frobenius(t - ts), 2) / std::pow(oracle::frobenius(t), 2);
  CHECK(std::abs(red.at("results").at("certificate").at("matching_loss").get<double>() - loss) <= 1e-12);
  for (Index n : emitted.state_dims) CHECK(n <= 2);

  CHECK_THROWS_AS(esswb::run_reduce({{"input", dense.string()}}, dir / "x"), esswb::ConfigError);
  CHECK_THROWS_AS(esswb::run_reduce({{"input", dense.string()}, {"rank", 1}, {"tol", 0.1}}, dir / "x"),
                  esswb::ConfigError);
  CHECK_THROWS_AS(esswb::run_realize({{"input", (dir / "missing.lop").string()}}, dir / "x"), esswb::ConfigError);
}

TEST_CASE("regval") {
  const auto dir = scratch("regval");
  esswb::LinearRecurrence rec;
  rec.seq_len = 3;
  rec.channel_block = 1;
  rec.state_dims = {2, 2, 2};
  rec.A = {Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix(0, 2)};
  rec.B = {Matrix::Ones(2, 1), Matrix::Ones(2, 1), Matrix(0, 1)};
  rec.C = {Matrix::Ones(1, 2), Matrix::Ones(1, 2), Matrix::Ones(1, 2)};
  rec.D = {Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  esswb::write_recurrence(dir / "id.json", rec);
  const auto r = esswb::run_regval({{"input", (dir / "id.json").string()}, {"lambda", 5.0}}, dir / "out");
  CHECK(r.at("results").at("value") == 0.0);

  const json feat = {{"kind", "GLA"}, {"width", 8}, {"heads", 2}, {"seed", 1}};
  const auto a = esswb::run_regval({{"featurizer", feat}, {"seq_len", 16}}, dir / "f1");
  const auto b = esswb::run_regval(esswb::load_config(dir / "f1" / "report.json"), dir / "f2");
  CHECK(a.at("results") == b.at("results"));
  CHECK(a.at("results").at("value").get<double>() > 0.0);
}

TEST_CASE("taskgen") {
  const auto dir = scratch("taskgen");
  const json cfg = {{"kind", "mqar"}, {"seq_len", 64}, {"num_kv_pairs", 8}, {"num_samples", 20}, {"seed", 4}};
  esswb::run_taskgen(cfg, dir / "a");
  esswb::run_taskgen(cfg, dir / "b");
  CHECK(slurp(dir / "a" / "mqar.jsonl") == slurp(dir / "b" / "mqar.jsonl"));
  try {
    esswb::run_taskgen({{"kind", "mqar"}, {"seq_len", 64}, {"num_kv_pairs", 32}}, dir / "c");
    FAIL("accepted a violating config");
  } catch (const esswb::ConfigError& e) {
    CHECK(std::string(e.what()).find("4·32 > 64") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(dir / "c" / "mqar.jsonl"));
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli");
  CHECK(run_cli("taskgen --kind mqar --seq-len 64 --num-kv-pairs 32 --out " + (dir / "t").string()) == 2);
  CHECK(run_cli("taskgen --kind compression --seq-len 16 --num-samples 3 --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "compression.jsonl"));
  {
    std::ofstream junk(dir / "junk.lop", std::ios::binary);
    junk << "{\"magic\":\"LOP1\"\n";
  }
  CHECK(run_cli("ess --input " + (dir / "junk.lop").string() + " --out " + (dir / "e").string()) == 3);
  CHECK(run_cli("ess --set bogus=1 --input x --out " + (dir / "e").string()) == 2);
  CHECK(run_cli("nonsense") == 2);

  // Strict realization of an operator the rank tolerance cannot reproduce.
  std::mt19937_64 rng(1);
  const auto p = write_op(dir, "dense.lop", CausalOperator(oracle::random_causal(6, 1, rng), 1));
  CHECK(run_cli("realize --input " + p.string() + " --rank-tol 1000 --strict true --out " + (dir / "r").string()) == 4);

  // Flags override file values.
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"kind":"compression","seq_len":9,"num_samples":2})";
  }
  CHECK(run_cli("taskgen --config " + (dir / "cfg.json").string() + " --seq-len 11 --out " + (dir / "o").string()) == 0);
  const auto report = json::parse(slurp(dir / "o" / "report.json"));
  CHECK(report.at("config").at("seq_len") == 11);
  CHECK(report.at("config").at("num_samples") == 2);
}
