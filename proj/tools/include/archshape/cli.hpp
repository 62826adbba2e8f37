#pragma once

#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace archshape::cli {

/// Runs one subcommand. `args` excludes the program name.
/// Returns 0 on success, 1 on argument or domain errors, 2 on I/O errors.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// `key=value` lines; `#` starts a comment, blank lines are skipped,
/// whitespace around keys and values is trimmed.
std::vector<std::pair<std::string, std::string>> parse_config(std::string_view text);

}  // namespace archshape::cli
