#pragma once

#include <exception>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace lgcp::cli {

extern const char* const kToolVersion;

// "lgcp-tool <version> config_hash=<hex> seed=<n>", written as the first
// (comment) line of every output file.
std::string provenance(const Config& c, std::uint64_t seed);

void cmd_fit(const Config& c);
void cmd_predict(const Config& c);
void cmd_cv(const Config& c);
void cmd_simulate(const Config& c);
void cmd_screen(const Config& c);
void cmd_compare(const Config& c);
void cmd_report(const Config& c);

const std::vector<std::string>& command_names();
void run_command(const std::string& name, const Config& c);

// 2 config, 3 data, 4 numerical, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace lgcp::cli
