#pragma once

#include <string>
#include <vector>

namespace aes {

// Entry point behind the aesc binary; also callable in-process from tests.
// args excludes the program name. Returns the process exit code: 0 on
// success, nonzero (with a diagnostic on stderr) on any error.
int run_cli(const std::vector<std::string>& args);

}  // namespace aes
