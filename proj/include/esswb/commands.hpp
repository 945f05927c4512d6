#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace esswb {

inline constexpr const char* kToolName = "esswb";
inline constexpr const char* kToolVersion = "0.1.0";

/// Command drivers behind the CLI. Each takes the merged user configuration,
/// fills in defaults, validates, writes its artifacts into out_dir (created if
/// needed) and returns the report, which is also written to
/// out_dir/report.json.
///
/// Every report carries {"tool","version","command","config","defaults",
/// "seeds","outputs","results"}. "config" is the fully resolved
/// configuration; feeding it back reproduces the outputs bit for bit.
/// Unknown keys and ill-typed values raise ConfigError naming the entry.
///
/// init-scan  featurizers, tss, alphas, seq_len, batch, seeds, width, heads,
///            state_expansion, beta, rope, rope_base, modes, tols, clip,
///            export_dir
/// ess        inputs, modes, tols, clip, causality_tol, tss, csv_block,
///            csv_channel_independent
/// profile    input, labels, modes, tols, clip, causality_tol, csv_block,
///            csv_channel_independent
/// realize    input, rank_tol, pinv_rel_cutoff, input_varying, strict,
///            strict_threshold, causality_tol, csv_block, ...
/// reduce     realize keys plus exactly one of rank / tol
/// regval     lambda and exactly one of input (recurrence JSON) or
///            featurizer (FeaturizerConfig JSON with seq_len, input_seed,
///            sample)
/// taskgen    TaskConfig keys plus output (file name inside out_dir)
nlohmann::ordered_json run_init_scan(const nlohmann::json& cfg, const std::filesystem::path& out_dir);
nlohmann::ordered_json run_ess(const nlohmann::json& cfg, const std::filesystem::path& out_dir);
nlohmann::ordered_json run_profile(const nlohmann::json& cfg, const std::filesystem::path& out_dir);
nlohmann::ordered_json run_realize(const nlohmann::json& cfg, const std::filesystem::path& out_dir);
nlohmann::ordered_json run_reduce(const nlohmann::json& cfg, const std::filesystem::path& out_dir);
nlohmann::ordered_json run_regval(const nlohmann::json& cfg, const std::filesystem::path& out_dir);
nlohmann::ordered_json run_taskgen(const nlohmann::json& cfg, const std::filesystem::path& out_dir);

/// Dispatch by subcommand name.
nlohmann::ordered_json run_command(const std::string& command, const nlohmann::json& cfg,
                                   const std::filesystem::path& out_dir);

/// Reads a JSON config file. A previously emitted report is accepted too; its
/// embedded "config" is used. Throws ConfigError.
nlohmann::json load_config(const std::filesystem::path& path);

/// Top-level merge: keys of `overrides` replace those of `base`.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides);

/// Shortest round-trip decimal form of a double, as used in every CSV.
std::string format_number(double v);

}  // namespace esswb
