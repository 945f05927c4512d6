// esswb command-line front end.
//
// Config precedence (lowest to highest): built-in defaults, --config file,
// --set KEY=VALUE entries, named flags.

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "esswb/commands.hpp"
#include "esswb/errors.hpp"

namespace {

struct FlagSpec {
  const char* flag;
  const char* key;
  bool list;
  const char* help;
};

const std::map<std::string, std::vector<FlagSpec>>& flag_table() {
  static const std::map<std::string, std::vector<FlagSpec>> table = {
      {"init-scan",
       {{"--featurizers", "featurizers", true, "LA,GLA,WLA,SA,S6,GLA-S6"},
        {"--tss", "tss", true, "per-channel TSS grid"},
        {"--alphas", "alphas", true, "GLA-S6 normalization grid"},
        {"--seq-len", "seq_len", false, "sequence length"},
        {"--batch", "batch", false, "Gaussian inputs per cell"},
        {"--seeds", "seeds", true, "weight seeds"},
        {"--width", "width", false, "model width d"},
        {"--heads", "heads", false, "number of heads h"},
        {"--modes", "modes", true, "entropy,tolerance"},
        {"--tols", "tols", true, "tolerance grid"},
        {"--export-dir", "export_dir", false, "write batch-0 operators as .lop"}}},
      {"ess",
       {{"--input", "inputs", true, ".lop or .csv operators (batch axis)"},
        {"--modes", "modes", true, "entropy,tolerance"},
        {"--tols", "tols", true, "tolerance grid"},
        {"--clip", "clip", false, "entropy clip"},
        {"--tss", "tss", false, "per-channel TSS for utilization"}}},
      {"profile",
       {{"--input", "input", false, ".lop or .csv operator"},
        {"--labels", "labels", false, "token label file, one per line"},
        {"--modes", "modes", true, "entropy,tolerance"},
        {"--tols", "tols", true, "tolerance grid"}}},
      {"realize",
       {{"--input", "input", false, ".lop or .csv operator"},
        {"--rank-tol", "rank_tol", false, "absolute rank tolerance"},
        {"--strict", "strict", false, "fail when the round trip is inexact"}}},
      {"reduce",
       {{"--input", "input", false, ".lop or .csv operator"},
        {"--rank", "rank", false, "target rank"},
        {"--tol", "tol", false, "singular value tolerance"}}},
      {"regval",
       {{"--input", "input", false, "recurrence JSON"},
        {"--lambda", "lambda", false, "regularizer weight"}}},
      {"taskgen",
       {{"--kind", "kind", false, "mqar, selective_copy or compression"},
        {"--seq-len", "seq_len", false, "sequence length"},
        {"--vocab-size", "vocab_size", false, "vocabulary size"},
        {"--num-kv-pairs", "num_kv_pairs", false, "MQAR key-value pairs"},
        {"--num-tokens-to-copy", "num_tokens_to_copy", false, "selective copy tokens"},
        {"--compression-vocab", "compression_vocab", false, "compression symbols"},
        {"--seed", "seed", false, "sample seed"},
        {"--num-samples", "num_samples", false, "number of samples"},
        {"--output", "output", false, "JSONL file name inside --out"}}},
  };
  return table;
}

// JSON if it parses, otherwise the raw string. List flags also accept a
// comma-separated form.
nlohmann::json parse_value(const std::string& text, bool list) {
  auto scalar = [](const std::string& s) {
    auto v = nlohmann::json::parse(s, nullptr, false);
    return v.is_discarded() ? nlohmann::json(s) : v;
  };
  auto v = scalar(text);
  if (!list || v.is_array()) return v;
  nlohmann::json arr = nlohmann::json::array();
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) arr.push_back(scalar(item));
  }
  return arr;
}

struct SubcommandArgs {
  std::string config;
  std::string out = "esswb-out";
  std::vector<std::string> sets;
  std::map<std::string, std::vector<std::string>> flags;  // key -> raw values
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Effective state-size workbench"};
  app.set_version_flag("--version", std::string(esswb::kToolName) + " " + esswb::kToolVersion);
  app.require_subcommand(1);

  std::map<std::string, SubcommandArgs> args;
  for (const auto& [name, specs] : flag_table()) {
    static const std::map<std::string, std::string> about = {
        {"init-scan", "ESS of randomly initialized featurizers over a TSS grid"},
        {"ess", "ESS of stored operators"},
        {"profile", "per-index total ESS along one operator"},
        {"realize", "minimal recurrence realizing an operator"},
        {"reduce", "rank- or tolerance-truncated realization"},
        {"regval", "state-to-state transition regularizer"},
        {"taskgen", "synthetic task samples as JSONL"}};
    auto* sub = app.add_subcommand(name, about.at(name));
    auto& a = args[name];
    sub->add_option("--config", a.config, "JSON config file (or a previous report)");
    sub->add_option("--out", a.out, "output directory")->capture_default_str();
    sub->add_option("--set", a.sets, "override KEY=VALUE (VALUE parsed as JSON)");
    for (const auto& spec : specs) {
      auto& slot = a.flags[spec.key];
      auto* opt = sub->add_option(spec.flag, slot, spec.help);
      if (!spec.list) opt->expected(1);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto* sub : app.get_subcommands()) {
      const std::string name = sub->get_name();
      const auto& a = args.at(name);
      nlohmann::json cfg = nlohmann::json::object();
      if (!a.config.empty()) cfg = esswb::load_config(a.config);
      for (const auto& s : a.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw esswb::ConfigError("--set expects KEY=VALUE, got '" + s + "'");
        cfg[s.substr(0, eq)] = parse_value(s.substr(eq + 1), false);
      }
      nlohmann::json overrides = nlohmann::json::object();
      for (const auto& spec : flag_table().at(name)) {
        const auto& raw = a.flags.at(spec.key);
        if (raw.empty()) continue;
        if (spec.list) {
          nlohmann::json arr = nlohmann::json::array();
          for (const auto& r : raw) {
            for (const auto& v : parse_value(r, true)) arr.push_back(v);
          }
          overrides[spec.key] = arr;
        } else {
          overrides[spec.key] = parse_value(raw.back(), false);
        }
      }
      // Path-like values stay strings even when they happen to parse as JSON.
      for (const char* key : {"input", "labels", "export_dir", "output", "kind"}) {
        if (overrides.contains(key) && !overrides[key].is_string()) {
          const auto& raw = a.flags.at(key);
          overrides[key] = raw.back();
        }
      }
      cfg = esswb::merge_config(cfg, overrides);
      const auto report = esswb::run_command(name, cfg, a.out);
      std::cout << name << ": wrote " << (std::filesystem::path(a.out) / "report.json").string() << '\n';
      (void)report;
    }
  } catch (const esswb::Error& e) {
    std::cerr << "esswb: error: " << e.what() << '\n';
    return esswb::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "esswb: error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "esswb: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
