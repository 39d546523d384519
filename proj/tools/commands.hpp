#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "i2s/config.hpp"
#include "i2s/features.hpp"
#include "i2s/gradcheck.hpp"

namespace i2s::cli {

/// Settings given on the command line, applied after any config file.
using Overrides = std::map<std::string, std::string>;

/// defaults <- config file (if any) <- overrides; I2S_THREADS fills in
/// threads when neither sets it.
RunConfig resolve_config(const std::optional<std::string>& config_file, const Overrides& overrides);

int cmd_gen_data(const RunConfig& cfg, const SynthSpec& spec, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const std::optional<std::string>& config_file, const Overrides& overrides,
             std::ostream& out);
int cmd_recommend(const std::optional<std::string>& config_file, const Overrides& overrides,
                  const std::string& user_file, const std::string& user_id, std::size_t top_k,
                  std::ostream& out);
int cmd_grad_check(const GradCheckSuiteConfig& gc, std::ostream& out);

}  // namespace i2s::cli
