#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tldr/train.hpp"

namespace tldr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Runs one subcommand: generate-data, stylize, train, eval, analyze-dims,
// ablate or grad-check. Returns 0 on success, 1 on usage errors, 2 on
// runtime errors.
int cli_dispatch(int argc, const char* const* argv);
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct AblationRow {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

// Toggle matrices of the loss, texture-extraction and masking/decay ablations.
std::vector<AblationRow> ablation_preset(int table);

// Applies "name=bool" to the matching use_* toggle (orig, styl, tr, tg, rsm,
// ldf, teo; the use_ prefix is optional). Throws ConfigError otherwise.
void apply_toggle(TrainConfig& config, const std::string& assignment);

// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

}  // namespace tldr
