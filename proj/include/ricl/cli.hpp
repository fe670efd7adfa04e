#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ricl/http.hpp"

namespace ricl {

/// Exit codes: 0 full success, 1 run failure, 2 usage error.
int run_cli(int argc, const char* const* argv);

/// `args` excludes the program name. The transport, when given, replaces
/// the network transport for every subcommand.
int run_cli(const std::vector<std::string>& args, std::shared_ptr<HttpTransport> transport = nullptr);

}  // namespace ricl
