#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace compose {

// Entry point of the compose_motion binary; args excludes argv[0].
// Returns 0 on success, 2 on a usage or config schema error, 1 on a
// runtime failure. Errors are written to err as "[module] message".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace compose
