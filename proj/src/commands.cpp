#include "esswb/commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <type_traits>

#include "esswb/errors.hpp"
#include "esswb/ess.hpp"
#include "esswb/featurizers.hpp"
#include "esswb/lop_io.hpp"
#include "esswb/parallel.hpp"
#include "esswb/realization.hpp"
#include "esswb/recurrence_io.hpp"
#include "esswb/tasks.hpp"

namespace esswb {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Reads command entries from the user config, recording the resolved value of
// every key and which ones fell back to defaults.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& user, std::string command)
      : user_(user.is_null() ? nlohmann::json::object() : user), command_(std::move(command)) {
    if (!user_.is_object()) throw ConfigError(command_ + " config must be a JSON object");
  }

  bool present(const std::string& key) const {
    return user_.contains(key) && !user_.at(key).is_null();
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (present(key)) {
      T v = convert<T>(key);
      resolved_[key] = v;
      return v;
    }
    resolved_[key] = fallback;
    defaults_[key] = fallback;
    return fallback;
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    seen_.insert(key);
    if (present(key)) {
      T v = convert<T>(key);
      resolved_[key] = v;
      return v;
    }
    resolved_[key] = nullptr;
    defaults_[key] = nullptr;
    return std::nullopt;
  }

  // Stores an already-resolved value (used for nested records).
  void set_resolved(const std::string& key, const Json& value) {
    seen_.insert(key);
    resolved_[key] = value;
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return user_.at(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError(command_ + " config entry '" + key + "': " + why);
  }

  void finish() const {
    for (const auto& item : user_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown " + command_ + " config entry '" + item.key() + "'");
    }
  }

  const Json& resolved() const { return resolved_; }
  const Json& defaults() const { return defaults_; }

 private:
  template <class T>
  T convert(const std::string& key) const {
    const auto& v = user_.at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          fail(key, "expected a non-negative integer");
        }
      }
    }
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(key, e.what());
    }
  }

  nlohmann::json user_;
  std::string command_;
  std::set<std::string> seen_;
  Json resolved_ = Json::object();
  Json defaults_ = Json::object();
};

Json report_skeleton(const std::string& command, const ConfigReader& reader) {
  Json r;
  r["tool"] = kToolName;
  r["version"] = kToolVersion;
  r["command"] = command;
  r["config"] = reader.resolved();
  r["defaults"] = reader.defaults();
  r["seeds"] = Json::array();
  r["outputs"] = Json::array();
  return r;
}

void write_report(const fs::path& out_dir, Json& report) {
  report["outputs"].push_back("report.json");
  std::ofstream out(out_dir / "report.json", std::ios::binary);
  if (!out) throw DataError("cannot write " + (out_dir / "report.json").string());
  out << report.dump(2) << '\n';
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::vector<EssSettings> settings_grid(ConfigReader& reader, const std::vector<std::string>& default_modes) {
  const auto modes = reader.get<std::vector<std::string>>("modes", default_modes);
  const auto tols = reader.get<std::vector<double>>("tols", {1e-4});
  const double clip = reader.get<double>("clip", 1e-12);
  if (modes.empty()) reader.fail("modes", "grid is empty");
  if (tols.empty()) reader.fail("tols", "grid is empty");
  if (!(clip > 0.0)) reader.fail("clip", "must be positive");
  for (double t : tols) {
    if (!(t > 0.0)) reader.fail("tols", "entry " + format_number(t) + " must be positive");
  }
  std::vector<EssSettings> out;
  for (const auto& m : modes) {
    EssMode mode;
    try {
      mode = parse_ess_mode(m);
    } catch (const Error& e) {
      reader.fail("modes", e.what());
    }
    if (mode == EssMode::kEntropy) {
      out.push_back({mode, tols.front(), clip});
    } else {
      for (double t : tols) out.push_back({mode, t, clip});
    }
  }
  return out;
}

std::string tol_cell(const EssSettings& s) {
  return s.mode == EssMode::kTolerance ? format_number(s.tol) : std::string();
}

Json tol_json(const EssSettings& s) {
  return s.mode == EssMode::kTolerance ? Json(s.tol) : Json(nullptr);
}

struct OperatorSource {
  double causality_tol = 0.0;
  Index csv_block = 1;
  bool csv_channel_independent = false;
};

OperatorSource operator_source(ConfigReader& reader) {
  OperatorSource src;
  src.causality_tol = reader.get<double>("causality_tol", 0.0);
  src.csv_block = reader.get<Index>("csv_block", 1);
  src.csv_channel_independent = reader.get<bool>("csv_channel_independent", false);
  if (src.causality_tol < 0.0) reader.fail("causality_tol", "must be non-negative");
  if (src.csv_block < 1) reader.fail("csv_block", "must be positive");
  return src;
}

void require_file(const std::string& key, const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw ConfigError("config entry '" + key + "': referenced file does not exist: " + path.string());
  }
}

CausalOperator load_operator(const fs::path& path, const OperatorSource& src) {
  if (path.extension() == ".csv") {
    return CausalOperator(read_csv_matrix(path), src.csv_block, src.csv_channel_independent,
                          src.causality_tol);
  }
  return read_lop(path, src.causality_tol);
}

// Per-channel ESS curves of one operator. Channel-independent operators are
// split; anything else is one flattened channel.
std::vector<std::vector<std::vector<double>>> operator_curves(const CausalOperator& op,
                                                              const std::vector<EssSettings>& settings) {
  std::vector<CausalOperator> channels;
  if (op.channel_independent() && op.channel_block() > 1) {
    channels = split_channels(op);
  } else {
    channels.push_back(op);
  }
  std::vector<SpectrumSeries> spectra;
  spectra.reserve(channels.size());
  for (const auto& ch : channels) spectra.push_back(spectrum_series(ch));
  // [setting][channel] -> curve
  std::vector<std::vector<std::vector<double>>> out(settings.size());
  for (std::size_t s = 0; s < settings.size(); ++s) {
    for (const auto& sp : spectra) out[s].push_back(ess_from_spectra(sp, settings[s]));
  }
  return out;
}

Index channels_of(const CausalOperator& op) {
  return op.channel_independent() ? op.channel_block() : 1;
}

std::vector<std::string> read_labels(ConfigReader& reader) {
  if (!reader.present("labels")) {
    reader.set_resolved("labels", nullptr);
    return {};
  }
  const auto& raw = reader.raw("labels");
  std::vector<std::string> labels;
  if (raw.is_string()) {
    const fs::path path = raw.get<std::string>();
    require_file("labels", path);
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      labels.push_back(line);
    }
    reader.set_resolved("labels", raw.get<std::string>());
  } else if (raw.is_array()) {
    for (const auto& v : raw) {
      if (!v.is_string()) reader.fail("labels", "entries must be strings");
      labels.push_back(v.get<std::string>());
    }
    reader.set_resolved("labels", labels);
  } else {
    reader.fail("labels", "expected a list of strings or a path");
  }
  return labels;
}

// ---------------------------------------------------------------- init-scan

struct ScanCell {
  FeaturizerConfig cfg;
  Index tss_grid = 0;          // nominal TSS; 0 for SA
  std::optional<double> alpha;  // GLA-S6 only
};

bool is_head_kind(FeaturizerKind k) { return k != FeaturizerKind::kS6 && k != FeaturizerKind::kSA; }

std::string export_name(const ScanCell& cell, Index mixer) {
  std::string name = "op_" + to_string(cell.cfg.kind);
  if (cell.cfg.kind != FeaturizerKind::kSA) name += "_tss" + std::to_string(cell.tss_grid);
  if (cell.alpha) name += "_alpha" + format_number(*cell.alpha);
  name += "_seed" + std::to_string(cell.cfg.seed) + "_b0_m" + std::to_string(mixer) + ".lop";
  return name;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides) {
  if (base.is_null()) base = nlohmann::json::object();
  if (!base.is_object() || !overrides.is_object()) throw ConfigError("configs must be JSON objects");
  for (const auto& item : overrides.items()) base[item.key()] = item.value();
  return base;
}

nlohmann::json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path.string() + " must be a JSON object");
  if (j.contains("tool") && j.contains("config") && j.value("tool", "") == kToolName) {
    return j.at("config");
  }
  return j;
}

Json run_init_scan(const nlohmann::json& user, const fs::path& out_dir) {
  ConfigReader reader(user, "init-scan");
  const auto feat_names = reader.get<std::vector<std::string>>(
      "featurizers", {"LA", "GLA", "WLA", "SA", "S6", "GLA-S6"});
  auto tss_grid = reader.get<std::vector<Index>>("tss", {16, 32, 64, 128, 256});
  auto alphas = reader.get<std::vector<double>>("alphas", {1000.0});
  const Index seq_len = reader.get<Index>("seq_len", 256);
  const Index batch = reader.get<Index>("batch", 8);
  auto seeds = reader.get<std::vector<std::uint64_t>>("seeds", {0, 1, 2, 3, 4, 5, 6, 7});
  const Index width = reader.get<Index>("width", 128);
  const Index heads = reader.get<Index>("heads", 8);
  const double beta = reader.get<double>("beta", 16.0);
  const auto rope = reader.optional<bool>("rope");
  const double rope_base = reader.get<double>("rope_base", 10000.0);
  const auto settings = settings_grid(reader, {"entropy", "tolerance"});
  const auto export_dir = reader.optional<std::string>("export_dir");
  reader.finish();

  if (feat_names.empty()) reader.fail("featurizers", "grid is empty");
  if (tss_grid.empty()) reader.fail("tss", "grid is empty");
  if (alphas.empty()) reader.fail("alphas", "grid is empty");
  if (seeds.empty()) reader.fail("seeds", "grid is empty");
  if (seq_len < 2) reader.fail("seq_len", "must be at least 2");
  if (batch < 1) reader.fail("batch", "must be positive");

  std::vector<FeaturizerKind> kinds;
  for (const auto& name : feat_names) {
    try {
      kinds.push_back(parse_featurizer_kind(name));
    } catch (const Error& e) {
      reader.fail("featurizers", e.what());
    }
  }
  // Output order follows the sorted config key, not the listing order.
  std::sort(kinds.begin(), kinds.end());
  kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
  std::sort(tss_grid.begin(), tss_grid.end());
  tss_grid.erase(std::unique(tss_grid.begin(), tss_grid.end()), tss_grid.end());
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  std::vector<ScanCell> cells;
  for (FeaturizerKind kind : kinds) {
    const std::vector<Index> tss_values = kind == FeaturizerKind::kSA ? std::vector<Index>{0} : tss_grid;
    for (Index t : tss_values) {
      const std::vector<std::optional<double>> alpha_values =
          kind == FeaturizerKind::kGLAS6 ? std::vector<std::optional<double>>(alphas.begin(), alphas.end())
                                         : std::vector<std::optional<double>>{std::nullopt};
      for (const auto& a : alpha_values) {
        for (std::uint64_t seed : seeds) {
          ScanCell cell;
          cell.cfg.kind = kind;
          cell.cfg.width = width;
          cell.cfg.heads = heads;
          cell.cfg.beta = beta;
          cell.cfg.rope_enabled = rope;
          cell.cfg.rope_base = rope_base;
          cell.cfg.seed = seed;
          cell.tss_grid = t;
          cell.alpha = a;
          if (a) cell.cfg.alpha = *a;
          if (kind == FeaturizerKind::kS6) {
            if (t < 1) reader.fail("tss", "entry " + std::to_string(t) + " must be positive");
            cell.cfg.state_expansion = t;
          } else if (is_head_kind(kind)) {
            const Index hd = heads > 0 ? width / heads : 0;
            if (hd < 1 || t < 1 || t % hd != 0) {
              reader.fail("tss", "entry " + std::to_string(t) + " is not a positive multiple of d/h = " +
                                     std::to_string(hd) + " for " + to_string(kind));
            }
            cell.cfg.k_expansion = t / hd;
          }
          try {
            cell.cfg.validate();
          } catch (const ConfigError& e) {
            throw ConfigError("init-scan cell " + to_string(kind) + " tss=" + std::to_string(t) + ": " + e.what());
          }
          cells.push_back(cell);
        }
      }
    }
  }

  std::vector<FeaturizerWeights> weights(cells.size());
  parallel_for(cells.size(), [&](std::size_t c) { weights[c] = init_weights(cells[c].cfg); });

  // tensors[cell][setting]
  std::vector<std::vector<EssTensor>> tensors(cells.size());
  for (auto& per_cell : tensors) {
    for (const auto& s : settings) per_cell.emplace_back(1, width, batch, seq_len, s);
  }
  const std::size_t tasks = cells.size() * static_cast<std::size_t>(batch);
  parallel_for(tasks, [&](std::size_t task) {
    const std::size_t c = task / static_cast<std::size_t>(batch);
    const Index b = static_cast<Index>(task % static_cast<std::size_t>(batch));
    const auto& cfg = cells[c].cfg;
    const Matrix u = gaussian_input(seq_len, width, cfg.seed, static_cast<std::uint64_t>(b));
    const auto spectra = build_spectra(cfg, weights[c], u);
    const Index per_mixer = cfg.kind == FeaturizerKind::kS6 ? 1 : cfg.head_dim();
    for (std::size_t s = 0; s < settings.size(); ++s) {
      for (std::size_t m = 0; m < spectra.size(); ++m) {
        const auto curve = ess_from_spectra(spectra[m], settings[s]);
        for (Index k = 0; k < per_mixer; ++k) {
          tensors[c][s].set_curve(0, static_cast<Index>(m) * per_mixer + k, b, curve);
        }
      }
    }
  });

  ensure_dir(out_dir);
  Json report = report_skeleton("init-scan", reader);
  report["seeds"] = seeds;

  if (export_dir) {
    const fs::path dir = fs::path(*export_dir).is_absolute() ? fs::path(*export_dir) : out_dir / *export_dir;
    ensure_dir(dir);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const Matrix u = gaussian_input(seq_len, width, cells[c].cfg.seed, 0);
      const auto ops = build_operators(cells[c].cfg, weights[c], u);
      for (std::size_t m = 0; m < ops.size(); ++m) {
        const auto name = export_name(cells[c], static_cast<Index>(m));
        write_lop(dir / name, ops[m]);
        report["outputs"].push_back((fs::path(*export_dir) / name).generic_string());
      }
    }
  }

  auto summary = open_output(out_dir / "summary.csv");
  auto curves = open_output(out_dir / "curves.csv");
  summary << "featurizer,tss,alpha,seed,mode,tol,average_ess,total_ess,tss_per_channel,state_utilization\n";
  curves << "featurizer,tss,alpha,seed,mode,tol,seq_index,average_ess,total_ess\n";
  Json results = Json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    const bool sa = cell.cfg.kind == FeaturizerKind::kSA;
    const std::string tss_cell = sa ? "" : std::to_string(cell.tss_grid);
    const std::string alpha_cell = cell.alpha ? format_number(*cell.alpha) : "";
    const std::string key = to_string(cell.cfg.kind) + "," + tss_cell + "," + alpha_cell + "," +
                            std::to_string(cell.cfg.seed);
    Json entry;
    entry["featurizer"] = to_string(cell.cfg.kind);
    entry["tss"] = sa ? Json(nullptr) : Json(cell.tss_grid);
    entry["alpha"] = cell.alpha ? Json(*cell.alpha) : Json(nullptr);
    entry["seed"] = cell.cfg.seed;
    entry["featurizer_config"] = to_json(cell.cfg);
    const double tss_per_channel = sa ? 0.0 : tss(cell.cfg, 1).per_channel;
    entry["tss_per_channel"] = sa ? Json("i") : Json(tss_per_channel);
    Json metrics = Json::array();
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const auto& t = tensors[c][s];
      const double avg = average_ess(t);
      const double tot = total_ess(t);
      const auto per_index = total_ess_per_index(t);
      std::optional<double> util;
      if (!sa) util = state_utilization(avg, tss_per_channel);
      summary << key << ',' << to_string(settings[s].mode) << ',' << tol_cell(settings[s]) << ','
              << format_number(avg) << ',' << format_number(tot) << ','
              << (sa ? std::string("i") : format_number(tss_per_channel)) << ','
              << (util ? format_number(*util) : std::string()) << '\n';
      std::vector<double> per_index_avg(per_index.size());
      for (std::size_t i = 0; i < per_index.size(); ++i) {
        per_index_avg[i] = per_index[i] / static_cast<double>(width);
        curves << key << ',' << to_string(settings[s].mode) << ',' << tol_cell(settings[s]) << ','
               << (i + 1) << ',' << format_number(per_index_avg[i]) << ',' << format_number(per_index[i])
               << '\n';
      }
      Json m;
      m["mode"] = to_string(settings[s].mode);
      m["tol"] = tol_json(settings[s]);
      m["average_ess"] = avg;
      m["total_ess"] = tot;
      m["state_utilization"] = util ? Json(*util) : Json(nullptr);
      m["per_index_average"] = per_index_avg;
      metrics.push_back(std::move(m));
    }
    entry["metrics"] = std::move(metrics);
    results.push_back(std::move(entry));
  }
  if (!summary || !curves) throw DataError("failed writing scan CSVs");
  report["outputs"].push_back("summary.csv");
  report["outputs"].push_back("curves.csv");
  report["results"] = std::move(results);
  write_report(out_dir, report);
  return report;
}

Json run_ess(const nlohmann::json& user, const fs::path& out_dir) {
  ConfigReader reader(user, "ess");
  std::vector<std::string> inputs;
  if (reader.present("input")) inputs.push_back(reader.get<std::string>("input", ""));
  else reader.optional<std::string>("input");
  for (const auto& p : reader.get<std::vector<std::string>>("inputs", {})) inputs.push_back(p);
  const auto settings = settings_grid(reader, {"entropy", "tolerance"});
  const auto src = operator_source(reader);
  const auto tss_value = reader.optional<double>("tss");
  reader.finish();
  if (inputs.empty()) reader.fail("inputs", "no operator given");
  if (tss_value && !(*tss_value > 0.0)) reader.fail("tss", "must be positive");
  for (const auto& p : inputs) require_file("inputs", p);

  // [input][setting][channel] -> curve
  std::vector<std::vector<std::vector<std::vector<double>>>> curves(inputs.size());
  Index seq_len = 0, channels = 0, block = 0;
  bool flattened = false;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto op = load_operator(inputs[k], src);
    if (k == 0) {
      seq_len = op.seq_len();
      channels = channels_of(op);
      block = op.channel_block();
      flattened = !op.channel_independent() && op.channel_block() > 1;
    } else if (op.seq_len() != seq_len || channels_of(op) != channels || op.channel_block() != block) {
      throw DataError("input " + inputs[k] + " does not match the shape of " + inputs[0]);
    }
    curves[k] = operator_curves(op, settings);
  }

  ensure_dir(out_dir);
  auto csv = open_output(out_dir / "ess.csv");
  csv << "layer,channel,batch,seq_index,mode,tol,value\n";
  Json by_setting = Json::array();
  for (std::size_t s = 0; s < settings.size(); ++s) {
    EssTensor t(1, channels, static_cast<Index>(inputs.size()), seq_len, settings[s]);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      for (Index c = 0; c < channels; ++c) t.set_curve(0, c, static_cast<Index>(k), curves[k][s][c]);
    }
    for (Index c = 0; c < channels; ++c) {
      for (Index b = 0; b < t.batch(); ++b) {
        for (Index i = 1; i < seq_len; ++i) {
          csv << 0 << ',' << c << ',' << b << ',' << i << ',' << to_string(settings[s].mode) << ','
              << tol_cell(settings[s]) << ',' << format_number(t.at(0, c, b, i)) << '\n';
        }
      }
    }
    Json a;
    a["mode"] = to_string(settings[s].mode);
    a["tol"] = tol_json(settings[s]);
    if (seq_len > 1) {
      const double avg = average_ess(t);
      a["average_ess"] = avg;
      a["total_ess"] = total_ess(t);
      a["per_index_total"] = total_ess_per_index(t);
      a["state_utilization"] = tss_value ? Json(state_utilization(avg, *tss_value)) : Json(nullptr);
    } else {
      a["average_ess"] = nullptr;
      a["total_ess"] = nullptr;
      a["per_index_total"] = Json::array();
      a["state_utilization"] = nullptr;
    }
    by_setting.push_back(std::move(a));
  }
  if (!csv) throw DataError("failed writing ess.csv");

  Json aggregate = by_setting.front();
  aggregate["channel_axis"] = flattened ? "flattened" : "per-channel";
  aggregate["by_setting"] = by_setting;
  {
    auto out = open_output(out_dir / "aggregate.json");
    out << aggregate.dump(2) << '\n';
  }

  Json report = report_skeleton("ess", reader);
  report["outputs"].push_back("ess.csv");
  report["outputs"].push_back("aggregate.json");
  report["results"] = aggregate;
  write_report(out_dir, report);
  return report;
}

Json run_profile(const nlohmann::json& user, const fs::path& out_dir) {
  ConfigReader reader(user, "profile");
  const auto input = reader.optional<std::string>("input");
  const auto labels = read_labels(reader);
  const auto settings = settings_grid(reader, {"tolerance"});
  const auto src = operator_source(reader);
  reader.finish();
  if (!input) reader.fail("input", "no operator given");
  require_file("input", *input);

  const auto op = load_operator(*input, src);
  const Index ell = op.seq_len();
  if (!labels.empty() && static_cast<Index>(labels.size()) != ell) {
    reader.fail("labels", "has " + std::to_string(labels.size()) + " entries but the operator has l = " +
                              std::to_string(ell));
  }
  const auto curves = operator_curves(op, settings);

  ensure_dir(out_dir);
  auto csv = open_output(out_dir / "profile.csv");
  csv << "seq_index,last_label,next_label,mode,tol,total_ess\n";
  auto csv_label = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  };
  Json profiles = Json::array();
  for (std::size_t s = 0; s < settings.size(); ++s) {
    std::vector<double> total(static_cast<std::size_t>(std::max<Index>(ell - 1, 0)), 0.0);
    for (std::size_t i = 0; i < total.size(); ++i) {
      std::vector<double> per_channel;
      for (const auto& ch : curves[s]) per_channel.push_back(ch[i]);
      total[i] = pairwise_sum(per_channel);
    }
    for (Index i = 1; i < ell; ++i) {
      csv << i << ',' << (labels.empty() ? "" : csv_label(labels[i - 1])) << ','
          << (labels.empty() ? "" : csv_label(labels[i])) << ',' << to_string(settings[s].mode) << ','
          << tol_cell(settings[s]) << ',' << format_number(total[i - 1]) << '\n';
    }
    Json p;
    p["mode"] = to_string(settings[s].mode);
    p["tol"] = tol_json(settings[s]);
    p["per_index_total"] = total;
    profiles.push_back(std::move(p));
  }
  if (!csv) throw DataError("failed writing profile.csv");

  Json report = report_skeleton("profile", reader);
  report["outputs"].push_back("profile.csv");
  report["results"] = {{"seq_len", ell}, {"channel_axis", op.channel_independent() || op.channel_block() == 1
                                                              ? "per-channel" : "flattened"},
                       {"profiles", profiles}};
  write_report(out_dir, report);
  return report;
}

namespace {

struct RealizeInputs {
  std::string input;
  RealizeOptions options;
  OperatorSource source;
};

RealizeInputs realize_inputs(ConfigReader& reader) {
  RealizeInputs in;
  const auto input = reader.optional<std::string>("input");
  in.options.rank_tol = reader.optional<double>("rank_tol");
  in.options.pinv_rel_cutoff = reader.get<double>("pinv_rel_cutoff", 1e-12);
  in.options.input_varying = reader.get<bool>("input_varying", false);
  in.options.strict = reader.get<bool>("strict", false);
  in.options.strict_threshold = reader.get<double>("strict_threshold", 1e-8);
  in.source = operator_source(reader);
  if (!input) reader.fail("input", "no operator given");
  in.input = *input;
  if (in.options.rank_tol && !(*in.options.rank_tol >= 0.0)) reader.fail("rank_tol", "must be non-negative");
  if (!(in.options.pinv_rel_cutoff > 0.0)) reader.fail("pinv_rel_cutoff", "must be positive");
  return in;
}

Json emit_realization(const std::string& command, const ConfigReader& reader, const Realization& r,
                      const fs::path& out_dir) {
  ensure_dir(out_dir);
  write_recurrence(out_dir / "recurrence.json", r.recurrence);
  const Json cert = to_json(r.certificate);
  {
    auto out = open_output(out_dir / "certificate.json");
    out << cert.dump(2) << '\n';
  }
  Json report = report_skeleton(command, reader);
  report["outputs"].push_back("recurrence.json");
  report["outputs"].push_back("certificate.json");
  Json results;
  results["seq_len"] = r.recurrence.seq_len;
  results["channel_block"] = r.recurrence.channel_block;
  results["max_state"] = r.certificate.state_dims.empty()
                             ? Index{0}
                             : *std::max_element(r.certificate.state_dims.begin(), r.certificate.state_dims.end());
  results["certificate"] = cert;
  report["results"] = std::move(results);
  write_report(out_dir, report);
  return report;
}

}  // namespace

Json run_realize(const nlohmann::json& user, const fs::path& out_dir) {
  ConfigReader reader(user, "realize");
  const auto in = realize_inputs(reader);
  reader.finish();
  require_file("input", in.input);
  const auto op = load_operator(in.input, in.source);
  return emit_realization("realize", reader, minimal_realize(op, in.options), out_dir);
}

Json run_reduce(const nlohmann::json& user, const fs::path& out_dir) {
  ConfigReader reader(user, "reduce");
  const auto in = realize_inputs(reader);
  const auto rank = reader.optional<Index>("rank");
  const auto tol = reader.optional<double>("tol");
  reader.finish();
  if (rank.has_value() == tol.has_value()) reader.fail("rank", "give exactly one of rank or tol");
  if (rank && *rank < 0) reader.fail("rank", "must be non-negative");
  if (tol && !(*tol > 0.0)) reader.fail("tol", "must be positive");
  require_file("input", in.input);
  const auto op = load_operator(in.input, in.source);
  const TruncationTarget target = rank ? TruncationTarget(TargetRank{*rank}) : TruncationTarget(TargetTolerance{*tol});
  return emit_realization("reduce", reader, truncated_realize(op, target, in.options), out_dir);
}

Json run_regval(const nlohmann::json& user, const fs::path& out_dir) {
  ConfigReader reader(user, "regval");
  const double lambda = reader.get<double>("lambda", 1.0);
  const auto input = reader.optional<std::string>("input");
  std::optional<FeaturizerConfig> fcfg;
  Index seq_len = 0;
  std::uint64_t input_seed = 0, sample = 0;
  if (reader.present("featurizer")) {
    try {
      fcfg = featurizer_config_from_json(reader.raw("featurizer"));
      fcfg->validate();
    } catch (const ConfigError& e) {
      reader.fail("featurizer", e.what());
    }
    reader.set_resolved("featurizer", to_json(*fcfg));
    seq_len = reader.get<Index>("seq_len", 256);
    input_seed = reader.get<std::uint64_t>("input_seed", fcfg->seed);
    sample = reader.get<std::uint64_t>("sample", 0);
    if (seq_len < 1) reader.fail("seq_len", "must be positive");
  } else {
    reader.optional<nlohmann::json>("featurizer");
  }
  reader.finish();
  if (input.has_value() == fcfg.has_value()) reader.fail("input", "give exactly one of input or featurizer");

  Json results;
  Json report;
  if (input) {
    require_file("input", *input);
    const auto rec = read_recurrence(*input);
    results["value"] = regularizer_value(rec, lambda);
    results["a_product_norm"] = a_product_norm(rec);
    report = report_skeleton("regval", reader);
  } else {
    const auto w = init_weights(*fcfg);
    const Matrix u = gaussian_input(seq_len, fcfg->width, input_seed, sample);
    const auto recs = build_recurrence(*fcfg, w, u);
    std::vector<double> values(recs.size());
    Json norms = Json::array();
    for (std::size_t k = 0; k < recs.size(); ++k) {
      values[k] = regularizer_value(recs[k], lambda);
      norms.push_back(a_product_norm(recs[k]));
    }
    results["value"] = pairwise_sum(values) / static_cast<double>(values.size());
    results["per_mixer"] = values;
    results["a_product_norm"] = std::move(norms);
    report = report_skeleton("regval", reader);
    report["seeds"] = {fcfg->seed, input_seed};
  }
  ensure_dir(out_dir);
  report["results"] = std::move(results);
  write_report(out_dir, report);
  return report;
}

Json run_taskgen(const nlohmann::json& user, const fs::path& out_dir) {
  ConfigReader reader(user, "taskgen");
  const TaskConfig defaults;
  TaskConfig cfg;
  try {
    cfg.kind = parse_task_kind(reader.get<std::string>("kind", to_string(defaults.kind)));
  } catch (const ConfigError& e) {
    reader.fail("kind", e.what());
  }
  cfg.seq_len = reader.get<std::int64_t>("seq_len", defaults.seq_len);
  cfg.vocab_size = reader.get<std::int64_t>("vocab_size", defaults.vocab_size);
  cfg.num_kv_pairs = reader.get<std::int64_t>("num_kv_pairs", defaults.num_kv_pairs);
  cfg.num_tokens_to_copy = reader.get<std::int64_t>("num_tokens_to_copy", defaults.num_tokens_to_copy);
  cfg.compression_vocab = reader.get<std::int64_t>("compression_vocab", defaults.compression_vocab);
  cfg.kv_dist_const = reader.get<double>("kv_dist_const", defaults.kv_dist_const);
  cfg.seed = reader.get<std::uint64_t>("seed", defaults.seed);
  cfg.num_samples = reader.get<std::int64_t>("num_samples", defaults.num_samples);
  const auto output = reader.get<std::string>("output", to_string(cfg.kind) + ".jsonl");
  reader.finish();
  if (auto violated = validate(cfg)) {
    throw ConfigError("invalid " + to_string(cfg.kind) + " config: " + *violated);
  }
  const auto samples = generate(cfg);
  ensure_dir(out_dir);
  write_jsonl(out_dir / output, samples);

  Json report = report_skeleton("taskgen", reader);
  report["seeds"] = {cfg.seed};
  report["outputs"].push_back(output);
  report["results"] = {{"task", to_json(cfg)}, {"num_samples", samples.size()}};
  write_report(out_dir, report);
  return report;
}

Json run_command(const std::string& command, const nlohmann::json& cfg, const fs::path& out_dir) {
  if (command == "init-scan") return run_init_scan(cfg, out_dir);
  if (command == "ess") return run_ess(cfg, out_dir);
  if (command == "profile") return run_profile(cfg, out_dir);
  if (command == "realize") return run_realize(cfg, out_dir);
  if (command == "reduce") return run_reduce(cfg, out_dir);
  if (command == "regval") return run_regval(cfg, out_dir);
  if (command == "taskgen") return run_taskgen(cfg, out_dir);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace esswb
