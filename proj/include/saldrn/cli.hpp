#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace saldrn {

/// Entry point behind the `saldrn` binary. `args` excludes the program name.
/// Returns 0 on success, 1 for bad flags or configuration, 2 for runtime
/// failures; errors are reported as one line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `<stem>_x<r>.png` with r printed to two decimals.
std::string sr_output_name(const std::string& input, double r);

}  // namespace saldrn
