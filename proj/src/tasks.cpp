#include "esswb/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "esswb/errors.hpp"
#include "esswb/parallel.hpp"
#include "esswb/rng.hpp"

namespace esswb {

namespace {

std::string num(std::int64_t v) { return std::to_string(v); }

Sample blank_sample(std::int64_t len) {
  Sample s;
  s.tokens.assign(static_cast<std::size_t>(len), kPadToken);
  s.target_mask.assign(static_cast<std::size_t>(len), 0);
  s.targets.assign(static_cast<std::size_t>(len), kIgnoreTarget);
  return s;
}

void require_valid(const TaskConfig& cfg) {
  if (auto v = validate(cfg)) throw ConfigError("invalid " + to_string(cfg.kind) + " config: " + *v);
}

std::int32_t draw(std::mt19937_64& eng, std::int64_t lo, std::int64_t hi_exclusive) {
  std::uniform_int_distribution<std::int64_t> dist(lo, hi_exclusive - 1);
  return static_cast<std::int32_t>(dist(eng));
}

// k distinct positions in [0, n), sorted.
std::vector<std::int64_t> distinct_positions(std::mt19937_64& eng, std::int64_t n, std::int64_t k) {
  std::vector<std::int64_t> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  for (std::int64_t t = 0; t < k; ++t) {
    std::uniform_int_distribution<std::int64_t> dist(t, n - 1);
    std::swap(all[t], all[dist(eng)]);
  }
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<Sample> generate_all(const TaskConfig& cfg,
                                 Sample (*one)(const TaskConfig&, std::uint64_t)) {
  require_valid(cfg);
  std::vector<Sample> out(static_cast<std::size_t>(cfg.num_samples));
  parallel_for(out.size(), [&](std::size_t k) { out[k] = one(cfg, static_cast<std::uint64_t>(k)); });
  return out;
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kMqar: return "mqar";
    case TaskKind::kSelectiveCopy: return "selective_copy";
    case TaskKind::kCompression: return "compression";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "mqar") return TaskKind::kMqar;
  if (s == "selective_copy" || s == "selective-copy") return TaskKind::kSelectiveCopy;
  if (s == "compression") return TaskKind::kCompression;
  throw ConfigError("unknown task '" + s + "' (expected mqar, selective_copy or compression)");
}

nlohmann::ordered_json to_json(const TaskConfig& cfg) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(cfg.kind);
  j["seq_len"] = cfg.seq_len;
  j["vocab_size"] = cfg.vocab_size;
  j["num_kv_pairs"] = cfg.num_kv_pairs;
  j["num_tokens_to_copy"] = cfg.num_tokens_to_copy;
  j["compression_vocab"] = cfg.compression_vocab;
  j["kv_dist_const"] = cfg.kv_dist_const;
  j["seed"] = cfg.seed;
  j["num_samples"] = cfg.num_samples;
  return j;
}

TaskConfig task_config_from_json(const nlohmann::json& j) {
  TaskConfig cfg;
  try {
    if (j.contains("kind")) cfg.kind = parse_task_kind(j.at("kind").get<std::string>());
    cfg.seq_len = j.value("seq_len", cfg.seq_len);
    cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
    cfg.num_kv_pairs = j.value("num_kv_pairs", cfg.num_kv_pairs);
    cfg.num_tokens_to_copy = j.value("num_tokens_to_copy", cfg.num_tokens_to_copy);
    cfg.compression_vocab = j.value("compression_vocab", cfg.compression_vocab);
    cfg.kv_dist_const = j.value("kv_dist_const", cfg.kv_dist_const);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.num_samples = j.value("num_samples", cfg.num_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad task config: ") + e.what());
  }
  return cfg;
}

std::optional<std::string> validate(const TaskConfig& cfg) {
  if (cfg.seq_len < 1) return "seq_len ≥ 1 violated: " + num(cfg.seq_len);
  if (cfg.num_samples < 0) return "num_samples ≥ 0 violated";
  switch (cfg.kind) {
    case TaskKind::kMqar: {
      const auto kv = cfg.num_kv_pairs;
      if (kv < 1) return "num_kv_pairs ≥ 1 violated";
      if (4 * kv > cfg.seq_len) return "4·" + num(kv) + " > " + num(cfg.seq_len);
      if (!(cfg.kv_dist_const > 0.0)) return "kv_dist_const > 0 violated";
      const std::int64_t keys = (cfg.vocab_size - kFirstContentToken) / 2;
      if (keys < kv) {
        return "vocab_size too small for distinct keys: (" + num(cfg.vocab_size) + "-" +
               num(kFirstContentToken) + ")/2 = " + num(keys) + " < " + num(kv);
      }
      return std::nullopt;
    }
    case TaskKind::kSelectiveCopy: {
      const auto ntc = cfg.num_tokens_to_copy;
      if (ntc < 1) return "num_tokens_to_copy ≥ 1 violated";
      if (2 * ntc + 1 >= cfg.seq_len) {
        return "2·" + num(ntc) + "+1 ≥ " + num(cfg.seq_len);
      }
      if (cfg.vocab_size <= kFirstContentToken) {
        return "vocab_size > " + num(kFirstContentToken) + " violated: " + num(cfg.vocab_size);
      }
      return std::nullopt;
    }
    case TaskKind::kCompression: {
      if (cfg.compression_vocab < 1) return "compression_vocab ≥ 1 violated";
      if (cfg.seq_len < 3) return "seq_len ≥ 3 violated: " + num(cfg.seq_len);
      return std::nullopt;
    }
  }
  return "unknown task";
}

Sample gen_mqar_sample(const TaskConfig& cfg, std::uint64_t index) {
  require_valid(cfg);
  auto eng = keyed_engine(cfg.seed, RngRole::kTaskSample, index);
  const std::int64_t kv = cfg.num_kv_pairs;
  const std::int64_t n_keys = (cfg.vocab_size - kFirstContentToken) / 2;
  const std::int64_t value_lo = kFirstContentToken + n_keys;

  Sample s = blank_sample(cfg.seq_len);
  std::vector<std::int32_t> keys(static_cast<std::size_t>(kv)), values(keys.size());
  const auto key_ids = distinct_positions(eng, n_keys, kv);
  for (std::int64_t p = 0; p < kv; ++p) {
    keys[p] = static_cast<std::int32_t>(kFirstContentToken + key_ids[p]);
  }
  std::shuffle(keys.begin(), keys.end(), eng);
  for (auto& v : values) v = draw(eng, value_lo, cfg.vocab_size);
  for (std::int64_t p = 0; p < kv; ++p) {
    s.tokens[2 * p] = keys[p];
    s.tokens[2 * p + 1] = values[p];
  }

  // Query slots: even offsets into the second half, sampled without
  // replacement with power-law weights favoring short gaps.
  const std::int64_t query_base = cfg.seq_len / 2;
  const std::int64_t slots = (cfg.seq_len - query_base) / 2;
  std::vector<double> weight(static_cast<std::size_t>(slots));
  for (std::int64_t g = 0; g < slots; ++g) {
    weight[g] = std::pow(static_cast<double>(g + 1), cfg.kv_dist_const - 1.0);
  }
  std::vector<std::int64_t> chosen;
  for (std::int64_t q = 0; q < kv; ++q) {
    std::discrete_distribution<std::int64_t> pick(weight.begin(), weight.end());
    const std::int64_t g = pick(eng);
    chosen.push_back(g);
    weight[g] = 0.0;
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<std::int64_t> order(static_cast<std::size_t>(kv));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), eng);
  for (std::int64_t q = 0; q < kv; ++q) {
    const std::int64_t pos = query_base + 2 * chosen[q];
    const std::int64_t pair = order[q];
    s.tokens[pos] = keys[pair];
    s.target_mask[pos] = 1;
    s.targets[pos] = values[pair];
  }
  return s;
}

Sample gen_selective_copy_sample(const TaskConfig& cfg, std::uint64_t index) {
  require_valid(cfg);
  auto eng = keyed_engine(cfg.seed, RngRole::kTaskSample, index);
  const std::int64_t ntc = cfg.num_tokens_to_copy;
  const std::int64_t prefix = cfg.seq_len - ntc - 1;

  Sample s = blank_sample(cfg.seq_len);
  std::fill(s.tokens.begin(), s.tokens.begin() + prefix, kNoiseToken);
  const auto positions = distinct_positions(eng, prefix, ntc);
  for (std::int64_t t = 0; t < ntc; ++t) {
    const std::int32_t tok = draw(eng, kFirstContentToken, cfg.vocab_size);
    s.tokens[positions[t]] = tok;
    const std::int64_t out = prefix + 1 + t;
    s.tokens[out] = kBlankToken;
    s.target_mask[out] = 1;
    s.targets[out] = tok;
  }
  s.tokens[prefix] = kMarkerToken;
  return s;
}

Sample gen_compression_sample(const TaskConfig& cfg, std::uint64_t index) {
  require_valid(cfg);
  auto eng = keyed_engine(cfg.seed, RngRole::kTaskSample, index);
  const std::int64_t m = (cfg.seq_len - 1) / 2;

  Sample s = blank_sample(cfg.seq_len);
  for (std::int64_t t = 0; t < m; ++t) {
    const std::int32_t tok = draw(eng, kFirstContentToken, kFirstContentToken + cfg.compression_vocab);
    s.tokens[t] = tok;
    const std::int64_t out = m + 1 + t;
    s.tokens[out] = kBlankToken;
    s.target_mask[out] = 1;
    s.targets[out] = tok;
  }
  s.tokens[m] = kMarkerToken;
  return s;
}

std::vector<Sample> gen_mqar(const TaskConfig& cfg) {
  if (cfg.kind != TaskKind::kMqar) throw ConfigError("gen_mqar needs kind mqar");
  return generate_all(cfg, &gen_mqar_sample);
}

std::vector<Sample> gen_selective_copy(const TaskConfig& cfg) {
  if (cfg.kind != TaskKind::kSelectiveCopy) throw ConfigError("gen_selective_copy needs kind selective_copy");
  return generate_all(cfg, &gen_selective_copy_sample);
}

std::vector<Sample> gen_compression(const TaskConfig& cfg) {
  if (cfg.kind != TaskKind::kCompression) throw ConfigError("gen_compression needs kind compression");
  return generate_all(cfg, &gen_compression_sample);
}

std::vector<Sample> generate(const TaskConfig& cfg) {
  switch (cfg.kind) {
    case TaskKind::kMqar: return gen_mqar(cfg);
    case TaskKind::kSelectiveCopy: return gen_selective_copy(cfg);
    case TaskKind::kCompression: return gen_compression(cfg);
  }
  throw ConfigError("unknown task");
}

void write_jsonl(std::ostream& out, const std::vector<Sample>& samples) {
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["tokens"] = s.tokens;
    j["target_mask"] = s.target_mask;
    j["targets"] = s.targets;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing JSONL");
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_jsonl(out, samples);
}

}  // namespace esswb
