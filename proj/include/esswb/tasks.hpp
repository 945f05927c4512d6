#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace esswb {

enum class TaskKind { kMqar, kSelectiveCopy, kCompression };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& s);  // mqar | selective_copy | compression

/// Token layout (all tasks):
///   0  pad / filler
///   1  noise (selective copy)
///   2  copy / compression marker
///   3  blank placeholder at answer positions
/// Content ids start at kFirstContentToken. MQAR keys come from the lower half
/// of [kFirstContentToken, vocab_size) and values from the upper half.
inline constexpr std::int32_t kPadToken = 0;
inline constexpr std::int32_t kNoiseToken = 1;
inline constexpr std::int32_t kMarkerToken = 2;
inline constexpr std::int32_t kBlankToken = 3;
inline constexpr std::int32_t kFirstContentToken = 4;
/// Value stored in `targets` where target_mask is 0.
inline constexpr std::int32_t kIgnoreTarget = -1;

struct TaskConfig {
  TaskKind kind = TaskKind::kMqar;
  std::int64_t seq_len = 64;
  std::int64_t vocab_size = 8192;  // mqar / selective_copy
  std::int64_t num_kv_pairs = 8;
  std::int64_t num_tokens_to_copy = 8;
  std::int64_t compression_vocab = 8;
  /// Power-law exponent for MQAR query gaps: slot g (0-based) is drawn with
  /// weight (g+1)^(kv_dist_const - 1). Recorded as given; the original
  /// benchmark does not define it further.
  double kv_dist_const = 0.1;
  std::uint64_t seed = 0;
  std::int64_t num_samples = 1;
};

nlohmann::ordered_json to_json(const TaskConfig& cfg);
TaskConfig task_config_from_json(const nlohmann::json& j);

/// nullopt when the configuration is admissible, otherwise the violated
/// inequality with the offending numbers, e.g. "4·32 > 64".
std::optional<std::string> validate(const TaskConfig& cfg);

struct Sample {
  std::vector<std::int32_t> tokens;
  std::vector<std::uint8_t> target_mask;
  std::vector<std::int32_t> targets;  // kIgnoreTarget where unmasked
};

/// MQAR: key-value pairs fill the first 2*kv positions; every key is queried
/// once in the second half (from l/2) at power-law spaced even offsets, pad
/// tokens elsewhere. The target at a query position is the value paired with
/// that key.
Sample gen_mqar_sample(const TaskConfig& cfg, std::uint64_t index);

/// Selective copy: content tokens scattered among noise in the first
/// l - ntc - 1 positions, then the marker, then ntc blank positions whose
/// targets are the content tokens in order.
Sample gen_selective_copy_sample(const TaskConfig& cfg, std::uint64_t index);

/// Compression: m = (l-1)/2 symbols over compression_vocab ids, the marker,
/// then m blank positions whose targets reproduce the symbols; a trailing pad
/// fills even lengths.
Sample gen_compression_sample(const TaskConfig& cfg, std::uint64_t index);

/// Dispatches on kind and generates num_samples samples. Throws ConfigError
/// carrying the violated inequality for inadmissible configurations.
std::vector<Sample> generate(const TaskConfig& cfg);
std::vector<Sample> gen_mqar(const TaskConfig& cfg);
std::vector<Sample> gen_selective_copy(const TaskConfig& cfg);
std::vector<Sample> gen_compression(const TaskConfig& cfg);

/// One {"tokens":[..],"target_mask":[..],"targets":[..]} object per line.
void write_jsonl(std::ostream& out, const std::vector<Sample>& samples);
void write_jsonl(const std::filesystem::path& path, const std::vector<Sample>& samples);

}  // namespace esswb
