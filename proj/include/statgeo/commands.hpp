#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace statgeo {

/// Runs the command-line interface. `args` excludes the program name.
/// Returns 0 on success, 1 on usage or parse errors and 2 on numerical failures; errors are
/// reported on `err` as a JSON object.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace statgeo
