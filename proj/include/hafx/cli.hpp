// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hafx {

/// Runs one subcommand. Returns 0 on success, 2 on usage errors and 1 when
/// the pipeline fails. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hafx
